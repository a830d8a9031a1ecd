#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "uxai/network.hpp"
#include "uxai/train.hpp"

namespace uxai {

enum class UqMethod { MCDropout, MCDropConnect, Flipout, Ensemble };

std::string_view to_string(UqMethod method);
UqMethod parse_uq_method(std::string_view name);

struct UqStrategy {
  UqMethod method = UqMethod::MCDropout;
  float p = 0.5f;             ///< Dropout / DropConnect probability
  std::size_t members = 5;    ///< ensemble size
  std::size_t samples = 20;   ///< stochastic passes for the sampling methods
};

/// A network (or ensemble of networks) whose forward passes are posterior
/// samples. Ensembles sample by member index; the other methods by noise.
class StochasticModel {
 public:
  StochasticModel(UqStrategy strategy, std::vector<Network> members);

  const UqStrategy& strategy() const { return strategy_; }
  UqMethod method() const { return strategy_.method; }
  std::span<const Network> members() const { return members_; }
  const Network& network(std::size_t i = 0) const { return members_.at(i); }
  Head head() const { return members_.front().head(); }

  /// T used when the caller does not choose one: member count for
  /// ensembles, strategy.samples otherwise.
  std::size_t default_samples() const;
  /// Resolves a requested T (0 = default_samples()); ensembles only accept
  /// their size. The public entry points reject T = 0.
  std::size_t resolve_samples(std::size_t requested) const;

  StochasticModel with_members(std::vector<Network> members) const;

 private:
  UqStrategy strategy_;
  std::vector<Network> members_;
};

/// One posterior sample: a network plus the frozen noise realization
/// (absent for ensemble members, which run in eval mode). Every forward
/// through the sample reuses the same realization.
struct ModelSample {
  const Network* network = nullptr;
  std::optional<Noise> noise;
  std::size_t index = 0;

  ForwardResult forward(const Tensor& x) const;
};

/// Sample i of the model; noise comes from derive_seed(seed, i).
ModelSample draw_sample(const StochasticModel& model, std::size_t i, std::uint64_t seed);

struct SamplePass {
  ModelSample sample;
  ForwardResult result;
};
SamplePass sample_pass(const StochasticModel& model, const Tensor& x, std::size_t i, std::uint64_t seed);

struct PredictiveDistribution {
  Tensor mean;
  Tensor variance;
  std::vector<Tensor> samples;  ///< retained per-pass outputs (probabilities for classification)
  std::size_t count = 0;
};

/// Moments over T passes with divisor T. Classification averages softmax
/// probability vectors.
PredictiveDistribution predict_with_uncertainty(const StochasticModel& model, const Tensor& x, std::size_t T,
                                                std::uint64_t seed, bool retain_samples = false);

enum class Architecture { CifarCnn, HousingMlp, Linear };

std::string_view to_string(Architecture arch);
Architecture parse_architecture(std::string_view name);

/// Builds the named architecture with the strategy's noise layer attached.
/// HousingMlp: Dense 8-8-8-1 with ReLU; the noise layer sits on the last
/// block only. CifarCnn: strided 3x3 convolutions then a dense head.
Network build_network(Architecture arch, const Shape& input_shape, std::size_t outputs, Head head,
                      const UqStrategy& strategy, std::uint64_t seed);

/// Seed of member m's initialization.
std::uint64_t member_init_seed(std::uint64_t seed, std::size_t member);

/// Trains one network, or `members` networks that differ only in their
/// initialization seed (identical data order).
StochasticModel train_uq(const Tensor& inputs, const Tensor& targets, Architecture arch, std::size_t outputs,
                         Head head, const UqStrategy& strategy, const TrainConfig& cfg);

}  // namespace uxai
