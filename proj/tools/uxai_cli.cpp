// uxai: train models, explain them with uncertainty, and run the weight and
// label randomization sanity checks from the command line.

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "uxai/config.hpp"
#include "uxai/data.hpp"
#include "uxai/error.hpp"
#include "uxai/expl_uncertainty.hpp"
#include "uxai/experiment.hpp"
#include "uxai/plot.hpp"

namespace {

// Every config key doubles as a --flag; flag values override the file.
struct ConfigOptions {
  std::string file;
  std::map<std::string, std::string> raw;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "flat JSON experiment config")->check(CLI::ExistingFile);
    const auto defaults = uxai::to_json(uxai::ExperimentConfig{});
    for (const auto& [key, value] : defaults.items()) {
      app->add_option("--" + key, raw[key], "override config key '" + key + "'");
    }
  }

  uxai::ExperimentConfig resolve() const {
    nlohmann::json doc = nlohmann::json::object();
    if (!file.empty()) {
      std::ifstream in(file);
      doc = nlohmann::json::parse(in);
    }
    const auto defaults = uxai::to_json(uxai::ExperimentConfig{});
    for (const auto& [key, text] : raw) {
      if (text.empty()) continue;
      if (defaults.at(key).is_string()) {
        doc[key] = text;
      } else {
        try {
          doc[key] = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error&) {
          throw uxai::ConfigError("--" + key + ": '" + text + "' is not a number");
        }
      }
    }
    auto cfg = uxai::config_from_json(doc);
    cfg.validate();
    return cfg;
  }
};

int cmd_train(const uxai::ExperimentConfig& cfg, bool random_labels) {
  const auto data = uxai::load_dataset(cfg);
  const auto m = uxai::train_or_load(cfg, data, random_labels ? uxai::Labels::Random : uxai::Labels::True);
  std::cout << (m.cache_hit ? "cached " : "trained ") << m.manifest.string() << "\n";
  return 0;
}

int cmd_explain(const uxai::ExperimentConfig& cfg, std::size_t count) {
  const auto data = uxai::load_dataset(cfg);
  const auto m = uxai::train_or_load(cfg, data);
  auto inputs = uxai::select_eval_inputs(cfg, data);
  const auto eval = uxai::make_eval_set(m.model, std::move(inputs), cfg.T, cfg.seed);
  const auto spec = cfg.explainer_spec();
  const auto dir = std::filesystem::path(cfg.output_dir) / cfg.hash() / "explain";
  std::filesystem::create_directories(dir);
  count = std::min(count, eval.size());
  for (std::size_t i = 0; i < count; ++i) {
    const auto e = uxai::explain_with_uncertainty(m.model, spec, eval.input(i), eval.targets[i], m.model.resolve_samples(cfg.T),
                                                  uxai::derive_seed(cfg.seed, i));
    const std::pair<const char*, const uxai::Tensor*> stats[] = {{"mean", &e.mean}, {"std", &e.std}, {"cv", &e.cv}};
    for (const auto& [name, t] : stats) {
      const std::string stem = "input" + std::to_string(i) + "_" + name;
      uxai::export_pgm(dir / (stem + ".pgm"), t->rank() == 2 ? *t : t->reshaped({1, t->size()}));
      uxai::export_f32(dir / (stem + ".f32"), *t);
    }
    const std::array<uxai::ExplanationWithUncertainty, 1> one{e};
    std::printf("input %zu target %zu T %zu mean sigma %.6g\n", i, e.target, e.samples, uxai::aggregate_sigma(one));
  }
  std::cout << "maps written to " << dir.string() << "\n";
  return 0;
}

int cmd_sanity(uxai::ExperimentConfig cfg, const std::string& test) {
  cfg.test = test;
  const auto r = uxai::run_experiment(cfg, &std::cerr);
  std::cout << uxai::report_summary(r.report, cfg.hash());
  std::cout << "report: " << r.csv_path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uxai: sanity checks for explanation uncertainty"};
  app.require_subcommand(1);

  ConfigOptions train_opts, explain_opts, weight_opts, data_opts, grid_opts;
  bool random_labels = false;
  auto* train = app.add_subcommand("train", "train (or load cached) models for a config");
  train_opts.attach(train);
  train->add_flag("--random-labels", random_labels, "train on randomized labels");

  std::size_t count = 4;
  auto* explain = app.add_subcommand("explain", "explanations with uncertainty for eval inputs");
  explain_opts.attach(explain);
  explain->add_option("--count", count, "number of eval inputs to explain");

  auto* sanity = app.add_subcommand("sanity", "run a sanity check");
  sanity->require_subcommand(1);
  auto* weight = sanity->add_subcommand("weight", "progressive weight randomization test");
  weight_opts.attach(weight);
  auto* data = sanity->add_subcommand("data", "label randomization test");
  data_opts.attach(data);

  std::vector<std::string> csvs;
  std::string plot_out = "plots";
  auto* plot = app.add_subcommand("plot", "render report CSVs as SVG charts");
  plot->add_option("csv", csvs, "report CSV files")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", plot_out, "output directory");

  auto* grid = app.add_subcommand("grid", "every UQ x explainer x test combination");
  grid_opts.attach(grid);

  std::string synth_kind = "housing", synth_out;
  std::size_t synth_size = 0, synth_test = 1000;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "write a surrogate dataset (CIFAR-10 binary or housing CSV)");
  synth->add_option("--kind", synth_kind, "cifar10 or housing")->check(CLI::IsMember({"cifar10", "housing"}));
  synth->add_option("--out", synth_out, "output directory (cifar10) or CSV path (housing)")->required();
  synth->add_option("--size", synth_size, "rows or train images");
  synth->add_option("--test-size", synth_test, "test images (cifar10)");
  synth->add_option("--seed", synth_seed, "generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(train_opts.resolve(), random_labels);
    if (explain->parsed()) return cmd_explain(explain_opts.resolve(), count);
    if (weight->parsed()) return cmd_sanity(weight_opts.resolve(), "weight");
    if (data->parsed()) return cmd_sanity(data_opts.resolve(), "data");
    if (plot->parsed()) {
      std::vector<std::filesystem::path> paths(csvs.begin(), csvs.end());
      for (const auto& p : uxai::plot_reports(paths, plot_out)) std::cout << p.string() << "\n";
      return 0;
    }
    if (grid->parsed()) {
      const auto g = uxai::run_grid(grid_opts.resolve(), &std::cerr);
      std::cout << g.table << "summary: " << g.summary_path.string() << "\n";
      return 0;
    }
    if (synth->parsed()) {
      if (synth_kind == "cifar10") {
        uxai::write_synthetic_cifar10(synth_out, synth_size ? synth_size : 5000, synth_test, synth_seed);
      } else {
        uxai::write_synthetic_housing_csv(synth_out, synth_size ? synth_size : 20640, synth_seed);
      }
      std::cout << synth_out << "\n";
      return 0;
    }
  } catch (const uxai::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
