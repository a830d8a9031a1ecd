#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uxai/network.hpp"
#include "uxai/rng.hpp"
#include "uxai/tensor.hpp"

namespace uxai {

enum class DatasetKind { Cifar10Binary, TabularCsv, SyntheticLinear };

std::string_view to_string(DatasetKind kind);

struct Split {
  Tensor inputs;
  Tensor targets;  ///< [N] class indices, or [N, 1] regression targets
  std::size_t size() const { return inputs.empty() ? 0 : inputs.dim(0); }
};

/// Per-channel (images) or per-feature (tabular) statistics from the train split.
struct Standardization {
  std::vector<float> mean;
  std::vector<float> stddev;
};

struct Dataset {
  DatasetKind kind = DatasetKind::SyntheticLinear;
  Split train;
  Split eval;
  Head head = Head::Regression;
  std::size_t outputs = 1;
  Standardization features;
  float target_mean = 0.0f;
  float target_std = 1.0f;
  std::vector<std::string> feature_names;
};

// ---- CIFAR-10 binary format -------------------------------------------------
// Each record: 1 label byte (0-9) then 3072 pixel bytes, channel-planar R, G,
// B, each 32x32 row-major.

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPixels = 3 * kCifarSide * kCifarSide;
inline constexpr std::size_t kCifarRecordBytes = 1 + kCifarPixels;
inline constexpr std::size_t kCifarClasses = 10;

struct CifarRecords {
  std::vector<std::uint8_t> labels;
  std::vector<std::uint8_t> pixels;  ///< count * 3072 bytes
  std::size_t size() const { return labels.size(); }
};

CifarRecords read_cifar10_file(const std::filesystem::path& path);
void write_cifar10_file(const std::filesystem::path& path, const CifarRecords& records);

/// Exactly n / classes indices per class (remainder to the lowest classes),
/// ascending. Throws when a class has too few examples.
std::vector<std::size_t> stratified_subset(std::span<const std::uint8_t> labels, std::size_t n, std::size_t classes,
                                           Rng& rng);

/// Reads data_batch_*.bin (train) and test_batch.bin (eval) from `dir`.
/// Pixels are scaled to [0,1] and standardized per channel with train
/// statistics. A subset size of 0 keeps the whole split.
Dataset load_cifar10(const std::filesystem::path& dir, std::size_t train_subset, std::size_t eval_subset,
                     std::uint64_t seed);

/// Class-structured 32x32 images in CIFAR-10 binary layout (one shape and
/// colour family per class on a textured background), written as
/// data_batch_1.bin and test_batch.bin.
void write_synthetic_cifar10(const std::filesystem::path& dir, std::size_t train_count, std::size_t test_count,
                             std::uint64_t seed);

// ---- Tabular ----------------------------------------------------------------

/// CSV with a header row; all other columns are features. Deterministic
/// shuffled split by seed; features and target standardized from the train
/// split.
Dataset load_tabular_csv(const std::filesystem::path& path, std::string_view target_column, double test_fraction,
                         std::uint64_t seed);

/// Housing-style regression table with the eight California-housing feature
/// names and a MedHouseVal target; non-linear in income and location.
void write_synthetic_housing_csv(const std::filesystem::path& path, std::size_t rows, std::uint64_t seed);

/// y = w . x + noise with standard-normal features.
Dataset make_synthetic_linear(std::size_t rows, std::span<const float> weights, float noise, double test_fraction,
                              std::uint64_t seed);

}  // namespace uxai
