#include "uxai/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "uxai/error.hpp"

namespace uxai {

namespace {

std::vector<double> gaussian_1d(std::size_t window, double sigma) {
  if (window == 0 || !(sigma > 0.0)) throw InvalidArgument("gaussian window needs positive size and sigma");
  std::vector<double> g(window);
  const double c = (static_cast<double>(window) - 1.0) / 2.0;
  for (std::size_t i = 0; i < window; ++i) {
    const double d = static_cast<double>(i) - c;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
  }
  const double s = std::accumulate(g.begin(), g.end(), 0.0);
  for (auto& v : g) v /= s;
  return g;
}

}  // namespace

std::vector<double> gaussian_window(std::size_t window, double sigma) {
  const auto g = gaussian_1d(window, sigma);
  std::vector<double> w(window * window);
  for (std::size_t i = 0; i < window; ++i)
    for (std::size_t j = 0; j < window; ++j) w[i * window + j] = g[i] * g[j];
  return w;
}

namespace {

// Weighted local statistics for the window anchored at (y, x).
struct LocalStats {
  double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
};

double local_ssim(const LocalStats& s, double c1, double c2) {
  const double var_a = s.aa - s.mu_a * s.mu_a;
  const double var_b = s.bb - s.mu_b * s.mu_b;
  const double cov = s.ab - s.mu_a * s.mu_b;
  return ((2.0 * s.mu_a * s.mu_b + c1) * (2.0 * cov + c2)) /
         ((s.mu_a * s.mu_a + s.mu_b * s.mu_b + c1) * (var_a + var_b + c2));
}

}  // namespace

SsimResult ssim_detailed(const Tensor& a, const Tensor& b, const SsimParams& params) {
  if (a.shape() != b.shape()) {
    throw ShapeError("ssim: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  if (a.rank() != 2) throw ShapeError("ssim compares 2-D maps");
  if (!(params.k1 > 0.0 && params.k2 > 0.0)) throw InvalidArgument("ssim stabilizers must be positive");
  const std::size_t h = a.dim(0), w = a.dim(1);

  // Joint min-max normalization onto [0, 1].
  double lo = a[0], hi = a[0];
  for (std::size_t i = 0; i < a.size(); ++i) {
    lo = std::min({lo, static_cast<double>(a[i]), static_cast<double>(b[i])});
    hi = std::max({hi, static_cast<double>(a[i]), static_cast<double>(b[i])});
  }
  const double range = hi - lo;
  std::vector<double> na(a.size()), nb(b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    na[i] = range > 0.0 ? (a[i] - lo) / range : 0.0;
    nb[i] = range > 0.0 ? (b[i] - lo) / range : 0.0;
  }
  const double c1 = std::pow(params.k1 * params.dynamic_range, 2.0);
  const double c2 = std::pow(params.k2 * params.dynamic_range, 2.0);

  SsimResult result;
  if (h < params.window || w < params.window) {
    result.uniform_window = true;
    LocalStats s;
    const double inv = 1.0 / static_cast<double>(na.size());
    for (std::size_t i = 0; i < na.size(); ++i) {
      s.mu_a += na[i] * inv;
      s.mu_b += nb[i] * inv;
      s.aa += na[i] * na[i] * inv;
      s.bb += nb[i] * nb[i] * inv;
      s.ab += na[i] * nb[i] * inv;
    }
    result.value = local_ssim(s, c1, c2);
    return result;
  }

  // Separable Gaussian filtering over the valid region: rows first, then columns.
  const std::size_t k = params.window;
  const auto g = gaussian_1d(k, params.sigma);
  const std::size_t ow = w - k + 1, oh = h - k + 1;

  auto filter = [&](auto&& value_at) {
    std::vector<double> rows(h * ow, 0.0);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (std::size_t j = 0; j < k; ++j) acc += g[j] * value_at(y * w + x + j);
        rows[y * ow + x] = acc;
      }
    std::vector<double> out(oh * ow, 0.0);
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (std::size_t i = 0; i < k; ++i) acc += g[i] * rows[(y + i) * ow + x];
        out[y * ow + x] = acc;
      }
    return out;
  };
  const auto mu_a = filter([&](std::size_t i) { return na[i]; });
  const auto mu_b = filter([&](std::size_t i) { return nb[i]; });
  const auto aa = filter([&](std::size_t i) { return na[i] * na[i]; });
  const auto bb = filter([&](std::size_t i) { return nb[i] * nb[i]; });
  const auto ab = filter([&](std::size_t i) { return na[i] * nb[i]; });

  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) total += local_ssim({mu_a[i], mu_b[i], aa[i], bb[i], ab[i]}, c1, c2);
  result.value = total / static_cast<double>(mu_a.size());
  return result;
}

double ssim(const Tensor& a, const Tensor& b, const SsimParams& params) { return ssim_detailed(a, b, params).value; }

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return values[i] < values[j]; });
  std::vector<double> ranks(values.size());
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start + 1;
    while (end < order.size() && values[order[end]] == values[order[start]]) ++end;
    const double rank = (static_cast<double>(start + 1) + static_cast<double>(end)) / 2.0;
    for (std::size_t i = start; i < end; ++i) ranks[order[i]] = rank;
    start = end;
  }
  return ranks;
}

CorrelationResult pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.empty()) throw InvalidArgument("correlation needs equal, non-empty sequences");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return {0.0, true};
  return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), false};
}

CorrelationResult spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw InvalidArgument("spearman: sequences differ in length");
  if (xs.size() < 3) throw InvalidArgument("spearman needs at least 3 points");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return pearson(rx, ry);
}

CorrelationResult vector_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw InvalidArgument("vector_similarity: length mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return {0.0, true};
  return {std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0), false};
}

}  // namespace uxai
