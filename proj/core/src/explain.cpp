#include "uxai/explain.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "uxai/error.hpp"

namespace uxai {

std::string_view to_string(ExplainerKind kind) {
  switch (kind) {
    case ExplainerKind::GuidedBackprop: return "gbp";
    case ExplainerKind::IntegratedGradients: return "ig";
    case ExplainerKind::Lime: return "lime";
  }
  return "?";
}

ExplainerKind parse_explainer(std::string_view name) {
  for (auto k : {ExplainerKind::GuidedBackprop, ExplainerKind::IntegratedGradients, ExplainerKind::Lime})
    if (name == to_string(k)) return k;
  throw InvalidArgument("unknown explainer '" + std::string(name) + "'");
}

void validate_explainer_for_input(ExplainerKind kind, const Shape& input_shape) {
  if (kind == ExplainerKind::Lime && input_shape.size() != 1) {
    throw InvalidArgument("LIME is only supported for tabular (rank-1) inputs, got " + shape_string(input_shape));
  }
}

Tensor reduce_channels(const Tensor& a) {
  if (a.rank() != 3) return a;
  const std::size_t c = a.dim(0), hw = a.dim(1) * a.dim(2);
  Tensor out({a.dim(1), a.dim(2)});
  for (std::size_t p = 0; p < hw; ++p) {
    float m = 0.0f;
    for (std::size_t ch = 0; ch < c; ++ch) m = std::max(m, std::abs(a[ch * hw + p]));
    out[p] = m;
  }
  return out;
}

Tensor guided_backprop_raw(const Network& net, const Tape& tape, std::size_t target) {
  return backward_to_input(net, tape, target, ReluRule::Guided);
}

Saliency guided_backprop(const Network& net, const Tape& tape, std::size_t target) {
  return {reduce_channels(guided_backprop_raw(net, tape, target)), ExplainerKind::GuidedBackprop, target};
}

Saliency guided_backprop(const ModelSample& sample, const Tensor& x, std::size_t target) {
  const auto fwd = sample.forward(x);
  return guided_backprop(*sample.network, fwd.tape, target);
}

Tensor integrated_gradients_raw(const ModelSample& sample, const Tensor& x, const Tensor& baseline,
                                std::size_t steps, std::size_t target) {
  if (steps == 0) throw InvalidArgument("integrated gradients needs at least one step");
  if (x.shape() != baseline.shape()) {
    throw ShapeError("baseline " + shape_string(baseline.shape()) + " does not match input " + shape_string(x.shape()));
  }
  if (x.shape() != sample.network->input_shape()) throw ShapeError("integrated gradients explains a single input");

  constexpr std::size_t kChunk = 64;
  const std::size_t width = x.size();
  std::vector<double> grad_sum(width, 0.0);
  for (std::size_t first = 1; first <= steps; first += kChunk) {
    const std::size_t count = std::min(kChunk, steps - first + 1);
    Shape shape{count};
    shape.insert(shape.end(), x.shape().begin(), x.shape().end());
    Tensor path(shape);
    for (std::size_t r = 0; r < count; ++r) {
      const double alpha = static_cast<double>(first + r) / static_cast<double>(steps);
      auto row = path.row(r);
      for (std::size_t i = 0; i < width; ++i)
        row[i] = static_cast<float>(baseline[i] + alpha * (static_cast<double>(x[i]) - baseline[i]));
    }
    const auto fwd = sample.forward(path);
    const Tensor grads = backward_to_input(*sample.network, fwd.tape, target);
    for (std::size_t r = 0; r < count; ++r) {
      const auto g = grads.row(r);
      for (std::size_t i = 0; i < width; ++i) grad_sum[i] += g[i];
    }
  }
  Tensor out(x.shape());
  for (std::size_t i = 0; i < width; ++i) {
    out[i] = static_cast<float>((static_cast<double>(x[i]) - baseline[i]) * grad_sum[i] / static_cast<double>(steps));
  }
  return out;
}

Saliency integrated_gradients(const ModelSample& sample, const Tensor& x, const Tensor& baseline,
                              std::size_t steps, std::size_t target) {
  return {reduce_channels(integrated_gradients_raw(sample, x, baseline, steps, target)),
          ExplainerKind::IntegratedGradients, target};
}

WeightedFit weighted_least_squares(std::span<const double> design, std::size_t cols, std::span<const double> y,
                                   std::span<const double> weights) {
  const std::size_t rows = y.size();
  if (design.size() != rows * cols || weights.size() != rows) throw ShapeError("weighted least squares: size mismatch");
  if (rows < cols + 1) throw SingularDesign("weighted design has fewer rows than unknowns");

  // Center on weighted means so the intercept drops out; y is centered
  // relative to y[0] first, which keeps a constant response exactly zero.
  double wsum = 0.0;
  for (auto w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("kernel weights must be finite and non-negative");
    wsum += w;
  }
  if (!(wsum > 0.0)) throw SingularDesign("all kernel weights are zero");
  std::vector<double> xbar(cols, 0.0);
  double ybar_shift = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) xbar[c] += weights[r] * design[r * cols + c];
    ybar_shift += weights[r] * (y[r] - y[0]);
  }
  for (auto& v : xbar) v /= wsum;
  const double ybar = y[0] + ybar_shift / wsum;

  Eigen::MatrixXd a(rows, cols);
  Eigen::VectorXd b(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double sw = std::sqrt(weights[r]);
    for (std::size_t c = 0; c < cols; ++c) a(r, c) = sw * (design[r * cols + c] - xbar[c]);
    b(r) = sw * ((y[r] - y[0]) - ybar_shift / wsum);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-10);
  if (qr.rank() < static_cast<Eigen::Index>(cols)) {
    throw SingularDesign("weighted design matrix has rank " + std::to_string(qr.rank()) + " < " +
                         std::to_string(cols) + " features (degenerate perturbations or kernel weights)");
  }
  const Eigen::VectorXd beta = qr.solve(b);
  WeightedFit fit;
  fit.coefficients.assign(beta.data(), beta.data() + cols);
  fit.intercept = ybar;
  for (std::size_t c = 0; c < cols; ++c) fit.intercept -= beta(c) * xbar[c];
  return fit;
}

Saliency lime_tabular(const ModelSample& sample, const Tensor& x, const LimeOptions& options, Rng& rng,
                      std::size_t target) {
  if (x.rank() != 1) throw InvalidArgument("LIME expects a rank-1 tabular input");
  const std::size_t features = x.size();
  if (options.samples < features + 1) {
    throw InvalidArgument("LIME needs at least num_features + 1 perturbations");
  }
  if (!(options.perturbation_sigma > 0.0)) throw InvalidArgument("perturbation sigma must be positive");
  const double width =
      options.kernel_width > 0.0 ? options.kernel_width : 0.75 * std::sqrt(static_cast<double>(features));

  // Perturbations in standardized units around x; the design holds the
  // standardized offsets (z - x) / sigma.
  Tensor z({options.samples, features});
  std::vector<double> design(options.samples * features), weights(options.samples);
  for (std::size_t r = 0; r < options.samples; ++r) {
    double dist2 = 0.0;
    for (std::size_t c = 0; c < features; ++c) {
      const double offset = rng.normal();
      z[r * features + c] = static_cast<float>(x[c] + options.perturbation_sigma * offset);
      design[r * features + c] = offset;
      dist2 += offset * offset;
    }
    weights[r] = std::exp(-dist2 / (width * width));
  }
  const auto fwd = sample.forward(z);
  const std::size_t outputs = fwd.output.row_size();
  if (target >= outputs) throw InvalidArgument("LIME target out of range");
  std::vector<double> y(options.samples);
  for (std::size_t r = 0; r < options.samples; ++r) y[r] = fwd.output[r * outputs + target];

  const WeightedFit fit = weighted_least_squares(design, features, y, weights);
  Tensor coef({features});
  for (std::size_t c = 0; c < features; ++c)
    coef[c] = static_cast<float>(fit.coefficients[c] / options.perturbation_sigma);
  coef.require_finite("LIME coefficients");
  return {std::move(coef), ExplainerKind::Lime, target};
}

Saliency explain(const ModelSample& sample, const ExplainerSpec& spec, const Tensor& x, std::size_t target,
                 Rng& rng) {
  switch (spec.kind) {
    case ExplainerKind::GuidedBackprop: return guided_backprop(sample, x, target);
    case ExplainerKind::IntegratedGradients: {
      const Tensor baseline = spec.baseline ? *spec.baseline : Tensor(x.shape());
      return integrated_gradients(sample, x, baseline, spec.ig_steps, target);
    }
    case ExplainerKind::Lime: return lime_tabular(sample, x, spec.lime, rng, target);
  }
  throw InvalidArgument("unknown explainer");
}

}  // namespace uxai
