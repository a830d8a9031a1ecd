#include "uxai/expl_uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "uxai/checkpoint.hpp"
#include "uxai/error.hpp"

namespace uxai {

namespace {
constexpr std::uint64_t kLimeStream = 0x6c696d65ULL;
}

ExplanationWithUncertainty reduce_explanations(std::span<const Tensor> saliencies) {
  if (saliencies.empty()) throw InvalidArgument("cannot reduce zero explanations");
  const Shape& shape = saliencies.front().shape();
  const std::size_t n = saliencies.front().size();
  const auto count = static_cast<double>(saliencies.size());

  std::vector<double> mean(n, 0.0), var(n, 0.0);
  for (const auto& s : saliencies) {
    if (s.shape() != shape) throw ShapeError("explanations differ in shape");
    for (std::size_t j = 0; j < n; ++j) mean[j] += s[j];
  }
  for (auto& m : mean) m /= count;
  for (const auto& s : saliencies)
    for (std::size_t j = 0; j < n; ++j) {
      const double d = s[j] - mean[j];
      var[j] += d * d;
    }

  ExplanationWithUncertainty out;
  out.mean = Tensor(shape);
  out.std = Tensor(shape);
  out.cv = Tensor(shape);
  out.samples = saliencies.size();
  for (std::size_t j = 0; j < n; ++j) {
    const double sd = std::sqrt(var[j] / count);
    if (!std::isfinite(mean[j]) || !std::isfinite(sd)) throw NonFiniteError("non-finite explanation statistics");
    out.mean[j] = static_cast<float>(mean[j]);
    out.std[j] = static_cast<float>(sd);
    out.cv[j] = static_cast<float>(sd / (std::abs(mean[j]) + kCvEpsilon));
  }
  return out;
}

ExplanationWithUncertainty explain_with_uncertainty(const StochasticModel& model, const ExplainerSpec& spec,
                                                    const Tensor& x, std::size_t target, std::size_t T,
                                                    std::uint64_t seed, bool retain_samples) {
  if (T == 0) throw InvalidArgument("number of passes T must be at least 1");
  T = model.resolve_samples(T);
  validate_explainer_for_input(spec.kind, x.shape());
  std::vector<Tensor> maps;
  maps.reserve(T);
  for (std::size_t i = 0; i < T; ++i) {
    const ModelSample sample = draw_sample(model, i, seed);
    Rng rng(derive_seed(seed, kLimeStream, i));
    maps.push_back(explain(sample, spec, x, target, rng).values);
  }
  ExplanationWithUncertainty out = reduce_explanations(maps);
  out.method = spec.kind;
  out.uq = model.method();
  out.seed = seed;
  out.target = target;
  if (retain_samples) out.retained = std::move(maps);
  return out;
}

double aggregate_sigma(std::span<const ExplanationWithUncertainty> explanations) {
  if (explanations.empty()) throw InvalidArgument("aggregate_sigma needs at least one explanation");
  const Shape& shape = explanations.front().std.shape();
  double total = 0.0;
  for (const auto& e : explanations) {
    if (e.std.shape() != shape) throw ShapeError("explanations differ in shape");
    double s = 0.0;
    for (float v : e.std.values()) s += v;
    total += s / static_cast<double>(e.std.size());
  }
  return total / static_cast<double>(explanations.size());
}

void export_pgm(const std::filesystem::path& path, const Tensor& map) {
  if (map.rank() != 2) throw ShapeError("PGM export needs a 2-D map");
  const auto [lo_it, hi_it] = std::minmax_element(map.values().begin(), map.values().end());
  const double lo = *lo_it, hi = *hi_it;
  const double span = hi - lo;
  std::string bytes = "P5\n" + std::to_string(map.dim(1)) + " " + std::to_string(map.dim(0)) + "\n255\n";
  for (float v : map.values()) {
    const double unit = span > 0.0 ? (v - lo) / span : 0.0;
    bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(unit * 255.0))));
  }
  write_file_atomic(path, bytes);
  char sidecar[160];
  std::snprintf(sidecar, sizeof sidecar, "min %.9g\nmax %.9g\nmapping linear 0->min 255->max\n", lo, hi);
  auto side = path;
  side += ".txt";
  write_file_atomic(side, std::string(sidecar));
}

void export_f32(const std::filesystem::path& path, const Tensor& map) {
  const auto bytes = std::as_bytes(map.values());
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

}  // namespace uxai
