#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "uxai/config.hpp"
#include "uxai/data.hpp"
#include "uxai/sanity.hpp"

namespace uxai {

/// Loads the configured dataset. Without a data_path a surrogate is
/// generated once under <output_dir>/data and reused.
Dataset load_dataset(const ExperimentConfig& cfg);

/// The first eval_size eval-split inputs (256 images or the whole tabular
/// split when eval_size is 0).
Tensor select_eval_inputs(const ExperimentConfig& cfg, const Dataset& data);

enum class Labels { True, Random };

struct CachedModel {
  StochasticModel model;
  std::filesystem::path manifest;
  bool cache_hit = false;
};

/// Trains, or restores from <output_dir>/cache/<training hash>, the model
/// for the given label condition.
CachedModel train_or_load(const ExperimentConfig& cfg, const Dataset& data, Labels labels = Labels::True);

struct ExperimentResult {
  SanityReport report;
  std::filesystem::path run_dir;  ///< <output_dir>/<config hash>
  std::filesystem::path csv_path;
  bool cache_hit = false;  ///< every model came from the checkpoint cache
};

/// Runs the configured sanity test and writes report.csv, summary.txt,
/// plot.json, config.json and saliency maps into the run directory.
ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);

struct GridCell {
  std::string uq;
  std::string explainer;
  std::string test;
  Verdict verdict = Verdict::Fail;
  std::filesystem::path csv_path;
};

struct GridResult {
  std::vector<GridCell> cells;
  std::string table;  ///< markdown matrix: UQ rows, explainer x test columns
  std::filesystem::path summary_path;
};

/// Every UQ method x {gbp, lime} x {weight, data} over `base` (explainers
/// limited to gbp/ig for image datasets).
GridResult run_grid(const ExperimentConfig& base, std::ostream* log = nullptr);

}  // namespace uxai
