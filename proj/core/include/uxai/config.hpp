#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "uxai/explain.hpp"
#include "uxai/sanity.hpp"
#include "uxai/train.hpp"
#include "uxai/uq.hpp"

namespace uxai {

/// Everything one experiment depends on. Serialized as a flat JSON object;
/// unknown keys are rejected.
struct ExperimentConfig {
  std::string dataset = "housing";  ///< cifar10 | housing | synthetic_linear
  /// CIFAR directory or CSV file. Empty selects a generated surrogate
  /// under <output_dir>/data.
  std::string data_path;
  std::string target_column = "MedHouseVal";
  double test_fraction = 0.2;
  std::size_t train_subset = 5000;    ///< cifar10 only; 0 = all
  std::size_t eval_subset = 1000;     ///< cifar10 only; 0 = all
  std::size_t eval_size = 0;          ///< inputs explained; 0 = 256 for images, full split for tables
  std::size_t synthetic_size = 20640; ///< rows (or train images) of a generated surrogate
  std::string architecture;           ///< empty = the dataset's default
  std::string uq = "dropout";
  double p = 0.5;
  std::size_t members = 5;
  std::size_t T = 0;  ///< 0 = 20 passes, or the ensemble size
  std::string explainer = "gbp";
  std::size_t ig_steps = 50;
  std::size_t lime_samples = 500;
  double lime_kernel_width = 0.0;
  double lime_sigma = 1.0;
  std::string test = "weight";
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::string optimizer = "sgd_momentum";
  std::uint64_t seed = 0;
  double rho_threshold = 0.6;
  double sigma_margin = 0.10;
  double ssim_final_max = 0.8;
  double ssim_data_max = 0.95;
  std::size_t export_maps = 4;
  std::string output_dir = "runs";

  /// Default config for a dataset (CIFAR: 15 epochs; tables: 100).
  static ExperimentConfig defaults_for(const std::string& dataset);

  /// Throws ConfigError on inconsistent or unsupported settings.
  void validate() const;

  Architecture resolved_architecture() const;
  UqStrategy strategy() const;
  ExplainerSpec explainer_spec() const;
  TrainConfig train_config() const;
  VerdictRules rules() const;
  SanityTest sanity_test() const;

  /// Hash of every field except output_dir.
  std::string hash() const;
  /// Hash of the fields that determine the trained model(s).
  std::string training_hash() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Applies the keys of `patch` over `base`; unknown keys and ill-typed
/// values raise ConfigError.
ExperimentConfig apply_json(ExperimentConfig base, const nlohmann::json& patch);
/// Starts from defaults_for(dataset in the file, else housing).
ExperimentConfig config_from_json(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace uxai
