#pragma once

// Independent reference implementations used as test oracles. None of them
// call into the library's kernels; they read layer parameters only.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "uxai/metrics.hpp"
#include "uxai/network.hpp"
#include "uxai/rng.hpp"

namespace oracle {

/// Quadruple-loop convolution of one [C, H, W] input, accumulating in the
/// order bias, then channel, kernel row, kernel column.
uxai::Tensor naive_conv2d(const uxai::Conv2D& layer, const uxai::Tensor& x);

/// Double-precision forward of one example through every supported layer.
/// With `noise` the stochastic layers use that realization, otherwise they
/// act as in eval mode.
std::vector<double> reference_forward(const uxai::Network& net, const std::vector<double>& x,
                                      const uxai::Noise* noise = nullptr);

/// Central differences of output `output_index` in double precision.
std::vector<double> finite_difference_gradient(const uxai::Network& net, const std::vector<double>& x,
                                               std::size_t output_index, double h,
                                               const uxai::Noise* noise = nullptr);

/// Per-pixel double loop over every valid window, joint min-max
/// normalization, full 2-D Gaussian weights.
double naive_ssim(const uxai::Tensor& a, const uxai::Tensor& b, const uxai::SsimParams& params = {});

/// Guided backpropagation written neuron by neuron for nets made of Dense
/// and ReLU layers: at each ReLU, R_i = [f_i > 0][R_i > 0] R_i; through a
/// Dense layer, R_k = sum_j W_kj R_j accumulated in float, ascending j.
std::vector<float> guided_backprop_loop(const uxai::Network& net, const std::vector<float>& x, std::size_t target);

/// Random Dense/ReLU stacks, optionally with a Dropout layer, on a vector input.
uxai::Network random_mlp(uxai::Rng& rng, std::uint64_t seed, bool with_dropout);
/// Small random conv net on a [C, H, W] input, ending in a Dense head.
uxai::Network random_convnet(uxai::Rng& rng, std::uint64_t seed, bool with_dropout);

uxai::Tensor random_tensor(uxai::Rng& rng, uxai::Shape shape, double lo = -1.0, double hi = 1.0);

std::vector<double> to_double(const uxai::Tensor& t);

/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace oracle
