#include "uxai/experiment.hpp"

#include <algorithm>
#include <ostream>

#include "uxai/checkpoint.hpp"
#include "uxai/error.hpp"
#include "uxai/plot.hpp"

namespace uxai {

namespace {

constexpr std::uint64_t kSurrogateSeed = 0;
constexpr std::size_t kDefaultImageEval = 256;

void say(std::ostream* log, const std::string& line) {
  if (log) *log << line << std::endl;
}

std::vector<float> linear_weights() { return {2.0f, -1.0f, 0.5f, 0.0f, 1.5f, -0.5f, 0.0f, 1.0f}; }

}  // namespace

Dataset load_dataset(const ExperimentConfig& cfg) {
  const std::filesystem::path data_dir = std::filesystem::path(cfg.output_dir) / "data";
  if (cfg.dataset == "cifar10") {
    std::filesystem::path dir = cfg.data_path;
    if (dir.empty()) {
      const std::size_t test_count = std::max<std::size_t>(cfg.eval_subset, 1000);
      dir = data_dir / ("cifar10-synthetic-" + std::to_string(cfg.synthetic_size) + "-" + std::to_string(test_count));
      if (!std::filesystem::exists(dir / "test_batch.bin")) {
        write_synthetic_cifar10(dir, cfg.synthetic_size, test_count, kSurrogateSeed);
      }
    }
    return load_cifar10(dir, cfg.train_subset, cfg.eval_subset, cfg.seed);
  }
  if (cfg.dataset == "housing") {
    std::filesystem::path path = cfg.data_path;
    if (path.empty()) {
      path = data_dir / ("housing-synthetic-" + std::to_string(cfg.synthetic_size) + ".csv");
      if (!std::filesystem::exists(path)) write_synthetic_housing_csv(path, cfg.synthetic_size, kSurrogateSeed);
    }
    return load_tabular_csv(path, cfg.target_column, cfg.test_fraction, cfg.seed);
  }
  if (cfg.dataset == "synthetic_linear") {
    const auto w = linear_weights();
    return make_synthetic_linear(cfg.synthetic_size, w, 0.1f, cfg.test_fraction, kSurrogateSeed);
  }
  throw ConfigError("unknown dataset '" + cfg.dataset + "'");
}

Tensor select_eval_inputs(const ExperimentConfig& cfg, const Dataset& data) {
  const bool image = data.eval.inputs.rank() == 4;
  std::size_t n = cfg.eval_size != 0 ? cfg.eval_size : (image ? kDefaultImageEval : data.eval.size());
  n = std::min(n, data.eval.size());
  if (n == 0) throw InvalidArgument("evaluation split is empty");
  Shape shape = data.eval.inputs.shape();
  shape[0] = n;
  const float* begin = data.eval.inputs.data();
  return Tensor(shape, std::vector<float>(begin, begin + n * data.eval.inputs.row_size()));
}

CachedModel train_or_load(const ExperimentConfig& cfg, const Dataset& data, Labels labels) {
  const auto strategy = cfg.strategy();
  const auto arch = cfg.resolved_architecture();
  const auto tcfg = cfg.train_config();
  std::string key = cfg.training_hash();
  if (labels == Labels::Random) key += "-random";
  const auto dir = std::filesystem::path(cfg.output_dir) / "cache" / key;
  const auto manifest = dir / "model.manifest";

  if (std::filesystem::exists(manifest)) {
    const Shape input_shape(data.train.inputs.shape().begin() + 1, data.train.inputs.shape().end());
    const Network templ = build_network(arch, input_shape, data.outputs, data.head, strategy, member_init_seed(tcfg.seed, 0));
    auto members = load_ensemble(manifest, templ);
    return CachedModel{StochasticModel(strategy, std::move(members)), manifest, true};
  }
  const Tensor targets = labels == Labels::True
                             ? data.train.targets
                             : randomize_labels(data.train.targets, data.head, data.outputs, cfg.seed);
  auto model = train_uq(data.train.inputs, targets, arch, data.outputs, data.head, strategy, tcfg);
  std::filesystem::create_directories(dir);
  save_ensemble(manifest, std::vector<Network>(model.members().begin(), model.members().end()));
  return CachedModel{std::move(model), manifest, false};
}

namespace {

void export_maps(const SanityReport& report, const std::filesystem::path& dir) {
  for (std::size_t c = 0; c < report.kept.size(); ++c) {
    const auto sub = dir / ("maps") / report.conditions.at(c);
    std::filesystem::create_directories(sub);
    for (std::size_t i = 0; i < report.kept[c].size(); ++i) {
      const auto& e = report.kept[c][i];
      const std::pair<const char*, const Tensor*> stats[] = {{"mean", &e.mean}, {"std", &e.std}, {"cv", &e.cv}};
      for (const auto& [name, t] : stats) {
        const std::string stem = "input" + std::to_string(i) + "_" + name;
        const Tensor map2d = t->rank() == 2 ? *t : t->reshaped({1, t->size()});
        export_pgm(sub / (stem + ".pgm"), map2d);
        export_f32(sub / (stem + ".f32"), *t);
      }
    }
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* log) {
  cfg.validate();
  const std::string hash = cfg.hash();
  ExperimentResult result;
  result.run_dir = std::filesystem::path(cfg.output_dir) / hash;

  say(log, "[" + hash + "] loading dataset " + cfg.dataset);
  const Dataset data = load_dataset(cfg);
  const Tensor eval_inputs = select_eval_inputs(cfg, data);

  SanityOptions options;
  options.explainer = cfg.explainer_spec();
  options.T = cfg.T;
  options.seed = cfg.seed;
  options.rules = cfg.rules();
  options.dataset = cfg.dataset;
  options.keep_maps = cfg.export_maps;

  say(log, "[" + hash + "] model (true labels)");
  const CachedModel trained = train_or_load(cfg, data, Labels::True);
  result.cache_hit = trained.cache_hit;
  const EvalSet eval = make_eval_set(trained.model, eval_inputs, cfg.T, cfg.seed);

  if (cfg.sanity_test() == SanityTest::Weight) {
    say(log, "[" + hash + "] weight randomization test");
    result.report = weight_randomization_test(trained.model, eval, options);
  } else {
    say(log, "[" + hash + "] model (random labels)");
    const CachedModel random = train_or_load(cfg, data, Labels::Random);
    result.cache_hit = result.cache_hit && random.cache_hit;
    say(log, "[" + hash + "] data randomization test");
    result.report = compare_label_randomization(trained.model, random.model, eval, options);
    result.report.notes.push_back("twin models share training hash " + cfg.training_hash() +
                                  "; only the label vector differs");
  }
  result.report.notes.push_back(std::string("model cache ") + (result.cache_hit ? "hit" : "miss") + ": " +
                                trained.manifest.string());

  std::filesystem::create_directories(result.run_dir);
  const std::string csv = report_csv(result.report, hash);
  result.csv_path = result.run_dir / "report.csv";
  write_file_atomic(result.csv_path, csv);
  write_file_atomic(result.run_dir / "summary.txt", report_summary(result.report, hash));
  write_file_atomic(result.run_dir / "config.json", to_json(cfg).dump(2) + "\n");
  write_file_atomic(result.run_dir / "plot.json",
                    plot_description(parse_report_csv(csv, result.csv_path.string())).dump(2) + "\n");
  export_maps(result.report, result.run_dir);
  say(log, "[" + hash + "] verdict " + std::string(to_string(result.report.verdict)) + " -> " +
               result.csv_path.string());
  return result;
}

GridResult run_grid(const ExperimentConfig& base, std::ostream* log) {
  const bool image = base.dataset == "cifar10";
  const std::vector<std::string> uqs{"dropout", "dropconnect", "flipout", "ensemble"};
  const std::vector<std::string> explainers = image ? std::vector<std::string>{"gbp", "ig"}
                                                    : std::vector<std::string>{"gbp", "lime"};
  const std::vector<std::string> tests{"weight", "data"};

  GridResult grid;
  for (const auto& uq : uqs)
    for (const auto& ex : explainers)
      for (const auto& test : tests) {
        ExperimentConfig cfg = base;
        cfg.uq = uq;
        cfg.explainer = ex;
        cfg.test = test;
        if (uq == "ensemble") cfg.T = 0;
        const auto r = run_experiment(cfg, log);
        grid.cells.push_back({uq, ex, test, r.report.verdict, r.csv_path});
      }

  auto verdict_of = [&](const std::string& uq, const std::string& ex, const std::string& test) {
    for (const auto& c : grid.cells)
      if (c.uq == uq && c.explainer == ex && c.test == test) return std::string(to_string(c.verdict));
    return std::string("-");
  };
  std::string table = "| UQ method |";
  std::string rule = "|---|";
  for (const auto& test : tests)
    for (const auto& ex : explainers) {
      table += " " + test + " / " + ex + " |";
      rule += "---|";
    }
  table += "\n" + rule + "\n";
  std::string csv = "uq,explainer,test,verdict,report\n";
  for (const auto& uq : uqs) {
    table += "| " + uq + " |";
    for (const auto& test : tests)
      for (const auto& ex : explainers) table += " " + verdict_of(uq, ex, test) + " |";
    table += "\n";
  }
  for (const auto& c : grid.cells) {
    csv += c.uq + "," + c.explainer + "," + c.test + "," + std::string(to_string(c.verdict)) + "," +
           c.csv_path.string() + "\n";
  }
  grid.table = table;
  const auto dir = std::filesystem::path(base.output_dir) / ("grid-" + base.hash());
  std::filesystem::create_directories(dir);
  grid.summary_path = dir / "grid.md";
  write_file_atomic(grid.summary_path, "# Sanity check summary (desk-scale)\n\n" + table);
  write_file_atomic(dir / "grid.csv", csv);
  return grid;
}

}  // namespace uxai
