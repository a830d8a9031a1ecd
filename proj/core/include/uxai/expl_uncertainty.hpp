#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "uxai/explain.hpp"
#include "uxai/uq.hpp"

namespace uxai {

/// Added to |mean| in the coefficient-of-variation denominator.
inline constexpr double kCvEpsilon = 1e-8;

struct ExplanationWithUncertainty {
  Tensor mean;  ///< expl_mu
  Tensor std;   ///< expl_sigma, population form (divisor T)
  Tensor cv;    ///< std / (|mean| + kCvEpsilon)
  std::size_t samples = 0;
  ExplainerKind method = ExplainerKind::GuidedBackprop;
  UqMethod uq = UqMethod::MCDropout;
  std::uint64_t seed = 0;
  std::size_t target = 0;
  std::vector<Tensor> retained;  ///< per-sample saliencies when requested
};

/// Elementwise mean / population std / CV over a stack of equally shaped
/// saliencies, reduced in index order with double accumulation.
ExplanationWithUncertainty reduce_explanations(std::span<const Tensor> saliencies);

/// Runs T (pass, explanation) pairs. Sample i freezes its noise realization
/// (or ensemble member i) for the whole explanation; LIME draws its
/// perturbations from a stream derived from (seed, i).
ExplanationWithUncertainty explain_with_uncertainty(const StochasticModel& model, const ExplainerSpec& spec,
                                                    const Tensor& x, std::size_t target, std::size_t T,
                                                    std::uint64_t seed, bool retain_samples = false);

/// Mean over inputs of the mean over features of the std map.
double aggregate_sigma(std::span<const ExplanationWithUncertainty> explanations);

/// 8-bit binary PGM (P5) of a 2-D map, min-max normalized; a sidecar
/// `<path>.txt` records the value range behind 0 and 255.
void export_pgm(const std::filesystem::path& path, const Tensor& map);
/// Raw little-endian float32 dump, no header.
void export_f32(const std::filesystem::path& path, const Tensor& map);

}  // namespace uxai
