#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uxai/data.hpp"
#include "uxai/expl_uncertainty.hpp"
#include "uxai/explain.hpp"
#include "uxai/uq.hpp"

namespace uxai {

enum class SanityTest { Weight, Data };
enum class Verdict { Pass, Fail };

std::string_view to_string(SanityTest test);
SanityTest parse_sanity_test(std::string_view name);
std::string_view to_string(Verdict verdict);

/// Thresholds behind every verdict. The defaults are fixed so runs are
/// deterministic; they are recorded in each report.
struct VerdictRules {
  double rho_threshold = 0.6;    ///< tabular weight test: Spearman of sigma vs stage
  double sigma_margin = 0.10;    ///< relative increase required of sigma
  double ssim_final_max = 0.8;   ///< image weight test: final mean-SSIM bound
  double ssim_data_max = 0.95;   ///< image data test: bound on both SSIMs
};

inline constexpr std::array<double, 6> kStageFractions{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};

struct RandomizationStage {
  double fraction = 0.0;           ///< nominal fraction
  double achieved_fraction = 0.0;  ///< randomized / parameterized layer count
  std::vector<std::size_t> randomized_layers;  ///< network layer indices, input side first
};

/// Cumulative stages over parameterized layers in input-to-output order.
/// Stage k randomizes round(fraction * P) layers; with fewer layers than
/// stages the count snaps to the nearest achievable fraction.
std::vector<RandomizationStage> make_stages(const Network& net,
                                            std::span<const double> fractions = kStageFractions);

/// Evaluation inputs with the output index each explanation targets.
struct EvalSet {
  Tensor inputs;
  std::vector<std::size_t> targets;
  std::size_t size() const { return targets.size(); }
  Tensor input(std::size_t i) const;
};

/// Classification targets are the argmax of the model's predictive mean;
/// regression explains output 0. T = 0 selects the model's default.
EvalSet make_eval_set(const StochasticModel& model, Tensor inputs, std::size_t T, std::uint64_t seed);

struct MetricRow {
  std::string stage;  ///< stage fraction ("0", "0.2", ...) or label condition
  std::string metric;
  double value = 0.0;
};

struct SanityOptions {
  ExplainerSpec explainer;
  std::size_t T = 0;  ///< 0 = the model's default
  std::uint64_t seed = 0;
  VerdictRules rules;
  std::string dataset;
  std::size_t keep_maps = 0;  ///< explanations kept per stage for export
};

struct SanityReport {
  SanityTest test = SanityTest::Weight;
  std::string uq;
  std::string explainer;
  std::string dataset;
  std::uint64_t seed = 0;
  std::size_t samples = 0;
  std::size_t eval_size = 0;
  bool image = false;
  VerdictRules rules;
  std::vector<RandomizationStage> stages;
  std::vector<std::string> conditions;  ///< stage labels in report order
  std::vector<MetricRow> metrics;
  double trend = 0.0;
  bool trend_undefined = true;
  Verdict verdict = Verdict::Fail;
  std::string verdict_reason;
  std::vector<std::string> notes;
  /// Per condition, the first keep_maps explanations.
  std::vector<std::vector<ExplanationWithUncertainty>> kept;

  /// Throws InvalidArgument when absent.
  double metric(std::string_view stage, std::string_view name) const;
};

std::string stage_label(double fraction);

struct VerdictOutcome {
  Verdict verdict = Verdict::Fail;
  double trend = 0.0;
  bool trend_undefined = true;
  std::string reason;
};

/// sigma per stage must rise: Spearman >= rho_threshold (undefined fails)
/// and final >= (1 + sigma_margin) * first.
VerdictOutcome tabular_weight_verdict(std::span<const double> sigma, const VerdictRules& rules);
/// Applies the rule for the report's test and modality to its metrics.
/// Throws InvalidArgument when a required metric is missing.
VerdictOutcome decide_verdict(const SanityReport& report, const VerdictRules& rules);

/// Explains every eval input at each cumulative stage; every ensemble
/// member has the stage's layers re-drawn independently.
SanityReport weight_randomization_test(const StochasticModel& model, const EvalSet& eval,
                                       const SanityOptions& options);

enum class LabelRandomization { Random, Identity };

/// Classification: uniform relabelling over `classes`; regression: a
/// permutation of the targets. Identity returns the targets unchanged.
Tensor randomize_labels(const Tensor& targets, Head head, std::size_t classes, std::uint64_t seed,
                        LabelRandomization mode = LabelRandomization::Random);

/// Compares explanations of a true-label and a random-label model.
SanityReport compare_label_randomization(const StochasticModel& true_model, const StochasticModel& random_model,
                                         const EvalSet& eval, const SanityOptions& options);

struct DataTestModels {
  StochasticModel true_model;
  StochasticModel random_model;
};

/// Trains the twin models with one configuration; only the labels differ.
DataTestModels train_label_twins(const Dataset& data, Architecture arch, const UqStrategy& strategy,
                                 const TrainConfig& cfg, std::uint64_t label_seed,
                                 LabelRandomization mode = LabelRandomization::Random);

SanityReport data_randomization_test(const Dataset& data, Architecture arch, const UqStrategy& strategy,
                                     const TrainConfig& cfg, const Tensor& eval_inputs,
                                     const SanityOptions& options,
                                     LabelRandomization mode = LabelRandomization::Random);

/// Report CSV: a "# config_hash=..." line, the header
/// test,uq,explainer,dataset,stage_fraction,metric_name,metric_value,seed,
/// one row per metric, then the trend and verdict rows.
std::string report_csv(const SanityReport& report, std::string_view config_hash);

/// Human-readable summary with the verdict and every threshold.
std::string report_summary(const SanityReport& report, std::string_view config_hash);

}  // namespace uxai
