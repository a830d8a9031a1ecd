#include "uxai/sanity.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "uxai/error.hpp"
#include "uxai/hash.hpp"
#include "uxai/metrics.hpp"

namespace uxai {

namespace {
constexpr std::uint64_t kRandomizeStream = 0x72616e64ULL;
constexpr std::uint64_t kExplainStream = 0x65787068ULL;
constexpr std::uint64_t kTargetStream = 0x74617267ULL;
const std::string kTrueLabels = "true_labels";
const std::string kRandomLabels = "random_labels";

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}
}  // namespace

std::string_view to_string(SanityTest test) { return test == SanityTest::Weight ? "weight" : "data"; }

SanityTest parse_sanity_test(std::string_view name) {
  if (name == "weight") return SanityTest::Weight;
  if (name == "data") return SanityTest::Data;
  throw InvalidArgument("unknown sanity test '" + std::string(name) + "' (expected weight or data)");
}

std::string_view to_string(Verdict verdict) { return verdict == Verdict::Pass ? "pass" : "fail"; }

std::string stage_label(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", fraction);
  return buf;
}

std::vector<RandomizationStage> make_stages(const Network& net, std::span<const double> fractions) {
  const auto layers = net.parameterized_layers();
  if (layers.empty()) throw InvalidArgument("network has no parameterized layers to randomize");
  const double p = static_cast<double>(layers.size());
  std::vector<RandomizationStage> stages;
  std::size_t previous = 0;
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw InvalidArgument("stage fraction outside [0, 1]");
    const auto count = static_cast<std::size_t>(std::llround(f * p));
    if (count < previous) throw InvalidArgument("stage fractions must be non-decreasing");
    previous = count;
    RandomizationStage s;
    s.fraction = f;
    s.achieved_fraction = static_cast<double>(count) / p;
    s.randomized_layers.assign(layers.begin(), layers.begin() + static_cast<std::ptrdiff_t>(count));
    stages.push_back(std::move(s));
  }
  return stages;
}

Tensor EvalSet::input(std::size_t i) const {
  const auto row = inputs.row(i);
  return Tensor(Shape(inputs.shape().begin() + 1, inputs.shape().end()), std::vector<float>(row.begin(), row.end()));
}

EvalSet make_eval_set(const StochasticModel& model, Tensor inputs, std::size_t T, std::uint64_t seed) {
  if (inputs.empty()) throw InvalidArgument("evaluation set is empty");
  EvalSet eval;
  const std::size_t n = inputs.dim(0);
  eval.targets.assign(n, 0);
  if (model.head() == Head::Classification) {
    const auto pred = predict_with_uncertainty(model, inputs, model.resolve_samples(T), derive_seed(seed, kTargetStream));
    const std::size_t k = pred.mean.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = pred.mean.row(i);
      eval.targets[i] = static_cast<std::size_t>(std::max_element(row.begin(), row.begin() + k) - row.begin());
    }
  }
  eval.inputs = std::move(inputs);
  return eval;
}

double SanityReport::metric(std::string_view stage, std::string_view name) const {
  for (const auto& m : metrics)
    if (m.stage == stage && m.metric == name) return m.value;
  throw InvalidArgument("incomplete metrics: no " + std::string(name) + " for stage " + std::string(stage));
}

VerdictOutcome tabular_weight_verdict(std::span<const double> sigma, const VerdictRules& rules) {
  if (sigma.size() < 3) throw InvalidArgument("incomplete metrics: need at least 3 stages");
  std::vector<double> stage(sigma.size());
  std::iota(stage.begin(), stage.end(), 0.0);
  const auto rho = spearman(stage, sigma);
  VerdictOutcome out;
  out.trend = rho.value;
  out.trend_undefined = rho.undefined;
  const double first = sigma.front(), last = sigma.back();
  const bool rises = last > first && last >= (1.0 + rules.sigma_margin) * first;
  if (rho.undefined) {
    out.reason = "sigma is flat across stages (rank correlation undefined)";
  } else if (rho.value < rules.rho_threshold) {
    out.reason = "Spearman rho " + format_double(rho.value) + " < " + format_double(rules.rho_threshold);
  } else if (!rises) {
    out.reason = "final sigma " + format_double(last) + " is not " + format_double(rules.sigma_margin * 100.0) +
                 "% above stage 0 sigma " + format_double(first);
  } else {
    out.verdict = Verdict::Pass;
    out.reason = "sigma rises with randomization (rho " + format_double(rho.value) + ")";
  }
  return out;
}

VerdictOutcome decide_verdict(const SanityReport& report, const VerdictRules& rules) {
  if (report.conditions.empty()) throw InvalidArgument("incomplete metrics: report has no stages");
  VerdictOutcome out;
  if (report.test == SanityTest::Weight) {
    if (!report.image) {
      std::vector<double> sigma;
      for (const auto& c : report.conditions) sigma.push_back(report.metric(c, "aggregate_sigma"));
      return tabular_weight_verdict(sigma, rules);
    }
    std::vector<double> means, stds;
    for (const auto& c : report.conditions) {
      means.push_back(report.metric(c, "ssim_mean"));
      stds.push_back(report.metric(c, "ssim_std"));
    }
    if (means.size() >= 3) {
      std::vector<double> stage(means.size());
      std::iota(stage.begin(), stage.end(), 0.0);
      const auto rho = spearman(stage, means);
      out.trend = rho.value;
      out.trend_undefined = rho.undefined;
    }
    const bool mean_drop = means.back() < means.front();
    const bool std_drop = stds.back() < stds.front();
    if (!mean_drop || !std_drop) {
      out.reason = std::string(!mean_drop ? "mean" : "std") + "-map SSIM does not decrease from first to last stage";
    } else if (!(means.back() < rules.ssim_final_max)) {
      out.reason = "final mean-map SSIM " + format_double(means.back()) + " >= " + format_double(rules.ssim_final_max);
    } else {
      out.verdict = Verdict::Pass;
      out.reason = "mean and std map SSIM decrease to " + format_double(means.back()) + " / " +
                   format_double(stds.back());
    }
    return out;
  }

  if (!report.image) {
    const double t = report.metric(kTrueLabels, "aggregate_sigma");
    const double r = report.metric(kRandomLabels, "aggregate_sigma");
    out.trend = t > 0.0 ? r / t - 1.0 : 0.0;
    out.trend_undefined = !(t > 0.0);
    if (r > t && r >= (1.0 + rules.sigma_margin) * t) {
      out.verdict = Verdict::Pass;
      out.reason = "random-label sigma " + format_double(r) + " exceeds true-label sigma " + format_double(t);
    } else {
      out.reason = "random-label sigma " + format_double(r) + " is not " + format_double(rules.sigma_margin * 100.0) +
                   "% above true-label sigma " + format_double(t);
    }
    return out;
  }
  const double sm = report.metric(kRandomLabels, "ssim_mean");
  const double ss = report.metric(kRandomLabels, "ssim_std");
  out.trend = sm;
  out.trend_undefined = false;
  if (sm < rules.ssim_data_max && ss < rules.ssim_data_max) {
    out.verdict = Verdict::Pass;
    out.reason = "true vs random label SSIM " + format_double(sm) + " (mean) / " + format_double(ss) + " (std)";
  } else {
    out.reason = "true vs random label SSIM not below " + format_double(rules.ssim_data_max) + ": " +
                 format_double(sm) + " (mean) / " + format_double(ss) + " (std)";
  }
  return out;
}

namespace {

std::vector<ExplanationWithUncertainty> explain_all(const StochasticModel& model, const EvalSet& eval,
                                                    const SanityOptions& options, std::size_t T) {
  std::vector<ExplanationWithUncertainty> out;
  out.reserve(eval.size());
  for (std::size_t i = 0; i < eval.size(); ++i) {
    out.push_back(explain_with_uncertainty(model, options.explainer, eval.input(i), eval.targets[i], T,
                                           derive_seed(options.seed, kExplainStream, i)));
  }
  return out;
}

struct PairSimilarity {
  double ssim_mean = 0.0;
  double ssim_std = 0.0;
  double cosine_mean = 0.0;
};

PairSimilarity compare(const std::vector<ExplanationWithUncertainty>& base,
                       const std::vector<ExplanationWithUncertainty>& other, bool image) {
  PairSimilarity out;
  const double n = static_cast<double>(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (image) {
      out.ssim_mean += ssim(base[i].mean, other[i].mean) / n;
      out.ssim_std += ssim(base[i].std, other[i].std) / n;
    } else {
      out.cosine_mean += vector_similarity(base[i].mean.values(), other[i].mean.values()).value / n;
    }
  }
  return out;
}

SanityReport new_report(SanityTest test, const StochasticModel& model, const EvalSet& eval,
                        const SanityOptions& options, std::size_t T) {
  if (eval.size() == 0) throw InvalidArgument("evaluation set is empty");
  SanityReport r;
  r.test = test;
  r.uq = std::string(to_string(model.method()));
  r.explainer = std::string(to_string(options.explainer.kind));
  r.dataset = options.dataset;
  r.seed = options.seed;
  r.samples = T;
  r.eval_size = eval.size();
  r.image = eval.inputs.rank() == 4;
  r.rules = options.rules;
  return r;
}

void keep(SanityReport& report, const std::vector<ExplanationWithUncertainty>& expl, std::size_t n) {
  report.kept.emplace_back(expl.begin(), expl.begin() + static_cast<std::ptrdiff_t>(std::min(n, expl.size())));
}

void finish(SanityReport& report) {
  const auto outcome = decide_verdict(report, report.rules);
  report.verdict = outcome.verdict;
  report.trend = outcome.trend;
  report.trend_undefined = outcome.trend_undefined;
  report.verdict_reason = outcome.reason;
}

}  // namespace

SanityReport weight_randomization_test(const StochasticModel& model, const EvalSet& eval,
                                       const SanityOptions& options) {
  const std::size_t T = model.resolve_samples(options.T);
  SanityReport report = new_report(SanityTest::Weight, model, eval, options, T);
  report.stages = make_stages(model.network());
  for (const auto& s : report.stages)
    if (std::abs(s.achieved_fraction - s.fraction) > 1e-12) {
      report.notes.push_back("stage " + stage_label(s.fraction) + " snapped to " +
                             format_double(s.achieved_fraction) + " of parameterized layers");
    }
  for (std::size_t m = 0; m < model.members().size(); ++m) {
    report.notes.push_back("member " + std::to_string(m) + " baseline parameter hash " +
                           hex64(model.network(m).parameter_hash()));
  }

  std::vector<Network> nets(model.members().begin(), model.members().end());
  std::vector<ExplanationWithUncertainty> baseline;
  std::size_t applied = 0;
  for (const auto& stage : report.stages) {
    for (; applied < stage.randomized_layers.size(); ++applied) {
      const std::size_t layer = stage.randomized_layers[applied];
      for (std::size_t m = 0; m < nets.size(); ++m) {
        Rng rng(derive_seed(derive_seed(options.seed, kRandomizeStream, m), layer));
        nets[m] = reinitialize_layer(nets[m], layer, rng);
      }
    }
    const StochasticModel staged = model.with_members(nets);
    auto expl = explain_all(staged, eval, options, T);
    const std::string label = stage_label(stage.fraction);
    report.conditions.push_back(label);
    if (baseline.empty()) baseline = expl;
    const auto sim = compare(baseline, expl, report.image);
    if (report.image) {
      report.metrics.push_back({label, "ssim_mean", sim.ssim_mean});
      report.metrics.push_back({label, "ssim_std", sim.ssim_std});
    } else {
      report.metrics.push_back({label, "mean_cosine", sim.cosine_mean});
    }
    report.metrics.push_back({label, "aggregate_sigma", aggregate_sigma(expl)});
    report.metrics.push_back({label, "achieved_fraction", stage.achieved_fraction});
    keep(report, expl, options.keep_maps);
  }
  finish(report);
  return report;
}

Tensor randomize_labels(const Tensor& targets, Head head, std::size_t classes, std::uint64_t seed,
                        LabelRandomization mode) {
  if (mode == LabelRandomization::Identity) return targets;
  Rng rng(derive_seed(seed, 0x6c61626c));
  Tensor out = targets;
  if (head == Head::Classification) {
    if (classes < 2) throw InvalidArgument("label randomization needs at least two classes");
    for (auto& v : out.values()) v = static_cast<float>(rng.index(classes));
    return out;
  }
  const std::size_t n = targets.dim(0);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(std::span(perm));
  for (std::size_t i = 0; i < n; ++i) {
    const auto src = targets.row(perm[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

SanityReport compare_label_randomization(const StochasticModel& true_model, const StochasticModel& random_model,
                                         const EvalSet& eval, const SanityOptions& options) {
  if (true_model.method() != random_model.method()) throw InvalidArgument("twin models use different UQ methods");
  const std::size_t T = true_model.resolve_samples(options.T);
  SanityReport report = new_report(SanityTest::Data, true_model, eval, options, T);
  const auto expl_true = explain_all(true_model, eval, options, T);
  const auto expl_random = explain_all(random_model, eval, options, T);
  report.conditions = {kTrueLabels, kRandomLabels};
  if (report.image) {
    const auto self = compare(expl_true, expl_true, true);
    const auto sim = compare(expl_true, expl_random, true);
    report.metrics.push_back({kTrueLabels, "ssim_mean", self.ssim_mean});
    report.metrics.push_back({kTrueLabels, "ssim_std", self.ssim_std});
    report.metrics.push_back({kTrueLabels, "aggregate_sigma", aggregate_sigma(expl_true)});
    report.metrics.push_back({kRandomLabels, "ssim_mean", sim.ssim_mean});
    report.metrics.push_back({kRandomLabels, "ssim_std", sim.ssim_std});
    report.metrics.push_back({kRandomLabels, "aggregate_sigma", aggregate_sigma(expl_random)});
  } else {
    const auto sim = compare(expl_true, expl_random, false);
    report.metrics.push_back({kTrueLabels, "aggregate_sigma", aggregate_sigma(expl_true)});
    report.metrics.push_back({kRandomLabels, "aggregate_sigma", aggregate_sigma(expl_random)});
    report.metrics.push_back({kRandomLabels, "mean_cosine", sim.cosine_mean});
  }
  keep(report, expl_true, options.keep_maps);
  keep(report, expl_random, options.keep_maps);
  finish(report);
  return report;
}

namespace {

std::string fit_note(const std::string& name, const StochasticModel& model, const Split& split, std::size_t T,
                     std::uint64_t seed) {
  const std::size_t n = std::min<std::size_t>(split.size(), 512);
  Shape shape = split.inputs.shape();
  shape[0] = n;
  Tensor x(shape, std::vector<float>(split.inputs.data(), split.inputs.data() + n * split.inputs.row_size()));
  const auto pred = predict_with_uncertainty(model, x, T, seed);
  if (model.head() == Head::Classification) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = pred.mean.row(i);
      const auto arg = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      correct += arg == static_cast<std::size_t>(split.targets[i]) ? 1 : 0;
    }
    return name + " train accuracy " + format_double(static_cast<double>(correct) / static_cast<double>(n));
  }
  double mse = 0.0;
  for (std::size_t i = 0; i < n * pred.mean.row_size(); ++i) {
    const double d = pred.mean[i] - split.targets[i];
    mse += d * d / static_cast<double>(n * pred.mean.row_size());
  }
  return name + " train MSE " + format_double(mse);
}

std::uint64_t train_config_hash(const TrainConfig& cfg, Architecture arch, const UqStrategy& strategy) {
  Fnv1a h;
  h.update(static_cast<std::uint64_t>(cfg.epochs)).update(static_cast<std::uint64_t>(cfg.batch_size));
  h.update(static_cast<std::uint64_t>(std::bit_cast<std::uint32_t>(cfg.learning_rate)));
  h.update(static_cast<std::uint64_t>(std::bit_cast<std::uint32_t>(cfg.momentum)));
  h.update(static_cast<std::uint64_t>(cfg.optimizer)).update(cfg.seed).update(static_cast<std::uint64_t>(arch));
  h.update(static_cast<std::uint64_t>(strategy.method)).update(static_cast<std::uint64_t>(strategy.members));
  h.update(static_cast<std::uint64_t>(std::bit_cast<std::uint32_t>(strategy.p)));
  return h.digest();
}

}  // namespace

DataTestModels train_label_twins(const Dataset& data, Architecture arch, const UqStrategy& strategy,
                                 const TrainConfig& cfg, std::uint64_t label_seed, LabelRandomization mode) {
  const Tensor random_targets = randomize_labels(data.train.targets, data.head, data.outputs, label_seed, mode);
  return DataTestModels{
      train_uq(data.train.inputs, data.train.targets, arch, data.outputs, data.head, strategy, cfg),
      train_uq(data.train.inputs, random_targets, arch, data.outputs, data.head, strategy, cfg)};
}

SanityReport data_randomization_test(const Dataset& data, Architecture arch, const UqStrategy& strategy,
                                     const TrainConfig& cfg, const Tensor& eval_inputs,
                                     const SanityOptions& options, LabelRandomization mode) {
  const auto twins = train_label_twins(data, arch, strategy, cfg, options.seed, mode);
  const EvalSet eval = make_eval_set(twins.true_model, eval_inputs, options.T, options.seed);
  SanityReport report = compare_label_randomization(twins.true_model, twins.random_model, eval, options);
  const std::string cfg_hash = hex64(train_config_hash(cfg, arch, strategy));
  report.notes.push_back("twin training config hash " + cfg_hash + " (true labels) = " + cfg_hash +
                         " (random labels)");
  const Tensor random_targets = randomize_labels(data.train.targets, data.head, data.outputs, options.seed, mode);
  report.notes.push_back(fit_note("true-label model", twins.true_model, data.train, report.samples, options.seed));
  report.notes.push_back(fit_note("random-label model", twins.random_model,
                                  Split{data.train.inputs, random_targets}, report.samples, options.seed));
  return report;
}

std::string report_csv(const SanityReport& report, std::string_view config_hash) {
  std::string out = "# config_hash=" + std::string(config_hash) + " desk-scale reproduction; thresholds rho>=" +
                    format_double(report.rules.rho_threshold) + " sigma_margin=" +
                    format_double(report.rules.sigma_margin) + " ssim_final<" +
                    format_double(report.rules.ssim_final_max) + " ssim_data<" +
                    format_double(report.rules.ssim_data_max) + " T=" + std::to_string(report.samples) +
                    " eval=" + std::to_string(report.eval_size) + "\n";
  out += "test,uq,explainer,dataset,stage_fraction,metric_name,metric_value,seed\n";
  const std::string prefix = std::string(to_string(report.test)) + "," + report.uq + "," + report.explainer + "," +
                             report.dataset + ",";
  const std::string seed = std::to_string(report.seed);
  for (const auto& m : report.metrics) {
    out += prefix + m.stage + "," + m.metric + "," + format_double(m.value) + "," + seed + "\n";
  }
  out += prefix + "all,trend," + (report.trend_undefined ? std::string("nan") : format_double(report.trend)) + "," +
         seed + "\n";
  out += prefix + "all,verdict," + std::string(to_string(report.verdict)) + "," + seed + "\n";
  return out;
}

std::string report_summary(const SanityReport& report, std::string_view config_hash) {
  std::string out;
  out += "uxai sanity report (desk-scale reproduction)\n";
  out += "config hash:  " + std::string(config_hash) + "\n";
  out += "test:         " + std::string(to_string(report.test)) + " randomization\n";
  out += "uq:           " + report.uq + "\nexplainer:    " + report.explainer + "\ndataset:      " + report.dataset +
         "\n";
  out += "seed:         " + std::to_string(report.seed) + "\nT:            " + std::to_string(report.samples) +
         "\neval inputs:  " + std::to_string(report.eval_size) + "\n\n";
  for (const auto& c : report.conditions) {
    out += "  " + c + ":";
    for (const auto& m : report.metrics)
      if (m.stage == c) out += "  " + m.metric + "=" + format_double(m.value);
    out += "\n";
  }
  out += "\ntrend:        " + (report.trend_undefined ? std::string("undefined") : format_double(report.trend)) + "\n";
  out += "verdict:      " + std::string(to_string(report.verdict)) + " (" + report.verdict_reason + ")\n";
  out += "thresholds:   rho >= " + format_double(report.rules.rho_threshold) + ", sigma margin " +
         format_double(report.rules.sigma_margin) + ", final mean-SSIM < " +
         format_double(report.rules.ssim_final_max) + ", data SSIM < " + format_double(report.rules.ssim_data_max) +
         "\n";
  out += "              (thresholds are tool defaults; override them in the config)\n";
  for (const auto& n : report.notes) out += "note: " + n + "\n";
  return out;
}

}  // namespace uxai
