#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uxai/layers.hpp"
#include "uxai/rng.hpp"
#include "uxai/tensor.hpp"

namespace uxai {

enum class Head { Regression, Classification };

/// Ordered layer list plus task head. Parameters are drawn from the layers'
/// initializer using `seed`, so equal (architecture, seed) pairs produce
/// bit-identical networks.
class Network {
 public:
  Network(Shape input_shape, std::vector<Layer> layers, Head head, std::uint64_t seed);

  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return shapes_.back(); }
  /// Single-example input shape of layer i; index size() gives the output.
  const Shape& shape_before(std::size_t layer) const { return shapes_.at(layer); }

  Head head() const { return head_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t size() const { return layers_.size(); }

  const std::vector<Layer>& layers() const { return layers_; }
  const Layer& layer(std::size_t i) const { return layers_.at(i); }
  /// Mutable access invalidates every tape recorded so far.
  Layer& mutable_layer(std::size_t i);

  std::vector<std::size_t> parameterized_layers() const;
  bool has_layer(LayerKind kind) const;
  std::size_t parameter_count() const;

  /// Identity of the current parameter state; changes on copy and mutation.
  std::uint64_t stamp() const { return stamp_; }

  /// Hash of kinds, hyperparameters, input shape and head (no weights).
  std::uint64_t architecture_hash() const;
  std::string architecture_string() const;
  /// Hash of all parameter bytes plus the architecture.
  std::uint64_t parameter_hash() const;

  bool same_parameters(const Network& other) const;

 private:
  Shape input_shape_;
  std::vector<Layer> layers_;
  std::vector<Shape> shapes_;
  Head head_;
  std::uint64_t seed_;
  std::uint64_t stamp_;
};

/// Fluent construction that tracks shapes so fan-in never has to be repeated.
class NetworkBuilder {
 public:
  explicit NetworkBuilder(Shape input_shape);

  NetworkBuilder& dense(std::size_t out);
  NetworkBuilder& conv2d(std::size_t out_channels, std::size_t kernel, std::size_t stride = 1,
                         std::size_t padding = 0);
  NetworkBuilder& relu();
  NetworkBuilder& flatten();
  NetworkBuilder& dropout(float p);
  NetworkBuilder& dropconnect_dense(std::size_t out, float p);
  NetworkBuilder& flipout_dense(std::size_t out, float prior_mean = 0.0f, float prior_sigma = 1.0f);
  NetworkBuilder& layer(Layer layer);

  Network build(Head head, std::uint64_t seed) const;

 private:
  std::size_t current_features() const;

  Shape input_shape_;
  Shape current_;
  std::vector<Layer> layers_;
};

enum class Mode {
  Train,           ///< fresh noise per example (dropout masks, flipout sign flips)
  Eval,            ///< noise layers act as identity / posterior mean
  StochasticEval,  ///< one noise realization shared by every row of the batch
};

/// One posterior sample of a network's noise layers: dropout masks over a
/// single example's activations, DropConnect masks over weights, Flipout
/// standard-normal weight perturbations. Already includes inverted scaling.
struct Noise {
  std::vector<std::vector<float>> per_layer;
};

Noise draw_noise(const Network& net, Rng& rng);

struct LayerRecord {
  Tensor input;             ///< batched layer input
  Tensor mask;              ///< Dropout: batched scaled mask
  Tensor effective_weight;  ///< DropConnect / shared-noise Flipout weight actually used
  Tensor epsilon;           ///< Flipout: standard-normal draw
  Tensor sign_in;           ///< Flipout per-example flips [N, in]
  Tensor sign_out;          ///< Flipout per-example flips [N, out]
};

/// Activation record of a forward pass, sufficient for backward.
struct Tape {
  std::uint64_t network_stamp = 0;
  Mode mode = Mode::Eval;
  Shape input_shape;  ///< as passed by the caller (batched or not)
  bool batched = true;
  std::vector<LayerRecord> records;
};

struct ForwardResult {
  Tensor output;
  Tape tape;
};

/// Forward pass on `x`, either one example (shape == input_shape) or a
/// batch [N, input_shape...]. Output drops the batch axis when x had none.
ForwardResult forward(const Network& net, const Tensor& x, Mode mode, Rng& rng);
ForwardResult forward(const Network& net, const Tensor& x, Mode mode);
/// Stochastic-eval forward under a fixed realization, shared across rows.
ForwardResult forward(const Network& net, const Tensor& x, const Noise& noise);

/// How gradients cross ReLU layers on the way back to the input.
enum class ReluRule {
  Gradient,  ///< (f > 0) * R
  Guided,    ///< (f > 0) * (R > 0) * R
};

struct Gradients {
  Tensor input;
  /// Per layer, parameter gradients in declared order; empty when not requested.
  std::vector<std::vector<Tensor>> parameters;
};

/// Backpropagates `output_grad` (shaped like the forward output) through the
/// recorded pass, under the same noise realization.
Gradients backward(const Network& net, const Tape& tape, const Tensor& output_grad,
                   ReluRule rule = ReluRule::Gradient, bool parameter_grads = false);

/// Gradient of output neuron `output_index` (class logit or regression
/// output) of every row with respect to the input.
Tensor backward_to_input(const Network& net, const Tape& tape, std::size_t output_index,
                         ReluRule rule = ReluRule::Gradient);

/// Returns a copy with layer `layer_index` redrawn from its initializer.
Network reinitialize_layer(const Network& net, std::size_t layer_index, Rng& rng);

Tensor softmax_rows(const Tensor& logits);

}  // namespace uxai
