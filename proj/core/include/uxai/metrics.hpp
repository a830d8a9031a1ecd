#pragma once

#include <span>
#include <vector>

#include "uxai/tensor.hpp"

namespace uxai {

struct SsimParams {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

struct SsimResult {
  double value = 1.0;
  /// Maps smaller than the window in either dimension are compared with a
  /// single uniform window covering the whole map.
  bool uniform_window = false;
};

/// window x window Gaussian weights, row-major, normalized to sum 1.
std::vector<double> gaussian_window(std::size_t window, double sigma);

/// Single-scale SSIM of two 2-D maps after joint min-max normalization to
/// [0, 1]: the mean of the local SSIM map over all fully contained windows.
SsimResult ssim_detailed(const Tensor& a, const Tensor& b, const SsimParams& params = {});
double ssim(const Tensor& a, const Tensor& b, const SsimParams& params = {});

/// Average ranks (1-based), ties sharing the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

struct CorrelationResult {
  double value = 0.0;
  /// A constant input makes the correlation undefined; value is then 0.
  bool undefined = false;
};

CorrelationResult pearson(std::span<const double> xs, std::span<const double> ys);
/// Pearson correlation of average-ranked data; needs at least 3 points.
CorrelationResult spearman(std::span<const double> xs, std::span<const double> ys);

/// Cosine similarity; undefined (0) when either vector is zero.
CorrelationResult vector_similarity(std::span<const float> a, std::span<const float> b);

}  // namespace uxai
