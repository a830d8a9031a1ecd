#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "uxai/network.hpp"
#include "uxai/rng.hpp"
#include "uxai/uq.hpp"

namespace uxai {

enum class ExplainerKind { GuidedBackprop, IntegratedGradients, Lime };

std::string_view to_string(ExplainerKind kind);
ExplainerKind parse_explainer(std::string_view name);

/// Attribution map shaped like the input's spatial/feature layout: [H, W]
/// for images (channels reduced by max |.|), one value per feature for
/// tabular inputs (signed).
struct Saliency {
  Tensor values;
  ExplainerKind method = ExplainerKind::GuidedBackprop;
  std::size_t target = 0;
};

struct LimeOptions {
  std::size_t samples = 500;
  double kernel_width = 0.0;  ///< 0 selects 0.75 * sqrt(num_features)
  double perturbation_sigma = 1.0;
};

struct ExplainerSpec {
  ExplainerKind kind = ExplainerKind::GuidedBackprop;
  std::size_t ig_steps = 50;
  std::optional<Tensor> baseline;  ///< IG baseline; zeros when unset
  LimeOptions lime;
};

/// [C, H, W] -> [H, W] by max |value| over channels; other ranks unchanged.
Tensor reduce_channels(const Tensor& attribution);

/// Guided backpropagation on a recorded pass: at every ReLU only positive
/// forward activations carrying positive upstream signal pass.
Tensor guided_backprop_raw(const Network& net, const Tape& tape, std::size_t target);
Saliency guided_backprop(const Network& net, const Tape& tape, std::size_t target);
Saliency guided_backprop(const ModelSample& sample, const Tensor& x, std::size_t target);

/// Right-endpoint Riemann estimate with `steps` points:
/// (x - x') * mean_k dF(x' + k/steps (x - x'))/dx, all points evaluated under
/// the sample's frozen noise. Unreduced (input-shaped).
Tensor integrated_gradients_raw(const ModelSample& sample, const Tensor& x, const Tensor& baseline,
                                std::size_t steps, std::size_t target);
Saliency integrated_gradients(const ModelSample& sample, const Tensor& x, const Tensor& baseline,
                              std::size_t steps, std::size_t target);

struct WeightedFit {
  std::vector<double> coefficients;
  double intercept = 0.0;
};

/// Weighted least squares with intercept; `design` is row-major
/// [rows, cols]. Throws SingularDesign when the weighted design is rank
/// deficient.
WeightedFit weighted_least_squares(std::span<const double> design, std::size_t cols, std::span<const double> y,
                                   std::span<const double> weights);

/// Local linear surrogate around a rank-1 input: Gaussian perturbations,
/// exponential kernel weights, weighted least squares. Coefficients are the
/// attributions.
Saliency lime_tabular(const ModelSample& sample, const Tensor& x, const LimeOptions& options, Rng& rng,
                      std::size_t target);

/// Dispatch on spec.kind. `rng` is only consumed by LIME.
Saliency explain(const ModelSample& sample, const ExplainerSpec& spec, const Tensor& x, std::size_t target,
                 Rng& rng);

/// Rejects explainer/input pairings that are not supported (LIME on images).
void validate_explainer_for_input(ExplainerKind kind, const Shape& input_shape);

}  // namespace uxai
