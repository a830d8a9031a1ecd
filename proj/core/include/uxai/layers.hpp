#pragma once

#include <cstdint>
#include <string_view>
#include <variant>
#include <vector>

#include "uxai/rng.hpp"
#include "uxai/tensor.hpp"

namespace uxai {

/// Fully connected layer. weight is [in, out] row-major, bias is [out].
struct Dense {
  std::size_t in = 0;
  std::size_t out = 0;
  Tensor weight;
  Tensor bias;
};

/// weight is [out_channels, in_channels, kernel, kernel].
struct Conv2D {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
  Tensor weight;
  Tensor bias;
};

struct ReLU {};
struct Flatten {};

/// Inverted dropout on activations: kept units are scaled by 1/(1-p).
struct Dropout {
  float p = 0.5f;
};

/// Dense layer whose weights (not activations) are dropped, inverted scaling.
struct DropConnectDense {
  std::size_t in = 0;
  std::size_t out = 0;
  float p = 0.5f;
  Tensor weight;
  Tensor bias;
};

/// Mean-field Gaussian weight posterior N(mean, exp(log_sigma)^2) with a
/// N(prior_mean, prior_sigma^2) prior on every weight. Bias is deterministic.
struct FlipoutDense {
  std::size_t in = 0;
  std::size_t out = 0;
  float prior_mean = 0.0f;
  float prior_sigma = 1.0f;
  Tensor mean;
  Tensor log_sigma;
  Tensor bias;
};

using Layer = std::variant<Dense, Conv2D, ReLU, Flatten, Dropout, DropConnectDense, FlipoutDense>;

/// Checkpoint kind tags; values are part of the on-disk format.
enum class LayerKind : std::uint8_t {
  Dense = 1,
  Conv2D = 2,
  ReLU = 3,
  Flatten = 4,
  Dropout = 5,
  DropConnectDense = 6,
  FlipoutDense = 7,
};

inline constexpr float kFlipoutInitialLogSigma = -3.0f;

LayerKind layer_kind(const Layer& layer);
std::string_view layer_name(const Layer& layer);
bool is_parameterized(const Layer& layer);
bool is_stochastic(const Layer& layer);

/// Parameter tensors in declared order (weights, then bias; Flipout: mean,
/// log-sigma, bias). Empty for activation layers.
std::vector<Tensor*> parameters(Layer& layer);
std::vector<const Tensor*> parameters(const Layer& layer);

/// Shape of the layer's primary parameter tensor (the one recorded in
/// checkpoints); empty for parameter-free layers.
Shape primary_parameter_shape(const Layer& layer);

/// Fan-in used by the initializer.
std::size_t fan_in(const Layer& layer);

/// Uniform(-sqrt(6/fan_in), sqrt(6/fan_in)) weights, zero biases,
/// log-sigma = kFlipoutInitialLogSigma. Allocates tensors if needed.
void initialize(Layer& layer, Rng& rng);

/// Output shape of a single example (no batch axis) given its input shape.
Shape layer_output_shape(const Layer& layer, const Shape& input);

/// Architecture-level description: kind and hyperparameters, no weights.
std::string layer_signature(const Layer& layer);

}  // namespace uxai
