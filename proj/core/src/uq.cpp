#include "uxai/uq.hpp"

#include <string>

#include "uxai/error.hpp"

namespace uxai {

std::string_view to_string(UqMethod method) {
  switch (method) {
    case UqMethod::MCDropout: return "dropout";
    case UqMethod::MCDropConnect: return "dropconnect";
    case UqMethod::Flipout: return "flipout";
    case UqMethod::Ensemble: return "ensemble";
  }
  return "?";
}

UqMethod parse_uq_method(std::string_view name) {
  for (auto m : {UqMethod::MCDropout, UqMethod::MCDropConnect, UqMethod::Flipout, UqMethod::Ensemble})
    if (name == to_string(m)) return m;
  throw InvalidArgument("unknown uncertainty method '" + std::string(name) + "'");
}

std::string_view to_string(Architecture arch) {
  switch (arch) {
    case Architecture::CifarCnn: return "cifar_cnn";
    case Architecture::HousingMlp: return "housing_mlp";
    case Architecture::Linear: return "linear";
  }
  return "?";
}

Architecture parse_architecture(std::string_view name) {
  for (auto a : {Architecture::CifarCnn, Architecture::HousingMlp, Architecture::Linear})
    if (name == to_string(a)) return a;
  throw InvalidArgument("unknown architecture '" + std::string(name) + "'");
}

StochasticModel::StochasticModel(UqStrategy strategy, std::vector<Network> members)
    : strategy_(strategy), members_(std::move(members)) {
  if (members_.empty()) throw InvalidArgument("stochastic model needs at least one network");
  const auto arch = members_.front().architecture_hash();
  for (const auto& m : members_) {
    if (m.architecture_hash() != arch) throw InvalidArgument("ensemble members must share an architecture");
  }
  const Network& net = members_.front();
  switch (strategy_.method) {
    case UqMethod::MCDropout:
      if (!net.has_layer(LayerKind::Dropout)) throw InvalidArgument("MC-Dropout needs a Dropout layer");
      break;
    case UqMethod::MCDropConnect:
      if (!net.has_layer(LayerKind::DropConnectDense)) throw InvalidArgument("MC-DropConnect needs a DropConnect layer");
      break;
    case UqMethod::Flipout:
      if (!net.has_layer(LayerKind::FlipoutDense)) throw InvalidArgument("Flipout needs a FlipoutDense layer");
      break;
    case UqMethod::Ensemble:
      strategy_.members = members_.size();
      return;
  }
  if (members_.size() != 1) throw InvalidArgument("only ensembles hold more than one network");
}

std::size_t StochasticModel::default_samples() const {
  return strategy_.method == UqMethod::Ensemble ? members_.size() : strategy_.samples;
}

std::size_t StochasticModel::resolve_samples(std::size_t requested) const {
  if (requested == 0) return default_samples();
  if (strategy_.method == UqMethod::Ensemble && requested != members_.size()) {
    throw InvalidArgument("ensemble sample count is fixed at " + std::to_string(members_.size()) + " members");
  }
  return requested;
}

StochasticModel StochasticModel::with_members(std::vector<Network> members) const {
  return StochasticModel(strategy_, std::move(members));
}

ForwardResult ModelSample::forward(const Tensor& x) const {
  if (noise) return uxai::forward(*network, x, *noise);
  return uxai::forward(*network, x, Mode::Eval);
}

ModelSample draw_sample(const StochasticModel& model, std::size_t i, std::uint64_t seed) {
  if (model.method() == UqMethod::Ensemble) {
    if (i >= model.members().size()) {
      throw InvalidArgument("ensemble index " + std::to_string(i) + " out of range (" +
                            std::to_string(model.members().size()) + " members)");
    }
    return {&model.network(i), std::nullopt, i};
  }
  Rng rng(derive_seed(seed, i));
  return {&model.network(), draw_noise(model.network(), rng), i};
}

SamplePass sample_pass(const StochasticModel& model, const Tensor& x, std::size_t i, std::uint64_t seed) {
  SamplePass pass{draw_sample(model, i, seed), {}};
  pass.result = pass.sample.forward(x);
  return pass;
}

PredictiveDistribution predict_with_uncertainty(const StochasticModel& model, const Tensor& x, std::size_t T,
                                                std::uint64_t seed, bool retain_samples) {
  if (T == 0) throw InvalidArgument("number of passes T must be at least 1");
  T = model.resolve_samples(T);
  std::vector<Tensor> outputs;
  outputs.reserve(T);
  for (std::size_t i = 0; i < T; ++i) {
    Tensor y = sample_pass(model, x, i, seed).result.output;
    if (model.head() == Head::Classification) y = softmax_rows(y);
    outputs.push_back(std::move(y));
  }
  const std::size_t n = outputs.front().size();
  std::vector<double> sum(n, 0.0), sq(n, 0.0);
  for (const auto& y : outputs)
    for (std::size_t j = 0; j < n; ++j) sum[j] += y[j];
  PredictiveDistribution dist;
  dist.mean = Tensor(outputs.front().shape());
  dist.variance = Tensor(outputs.front().shape());
  for (std::size_t j = 0; j < n; ++j) sum[j] /= static_cast<double>(T);
  for (const auto& y : outputs)
    for (std::size_t j = 0; j < n; ++j) {
      const double d = y[j] - sum[j];
      sq[j] += d * d;
    }
  for (std::size_t j = 0; j < n; ++j) {
    dist.mean[j] = static_cast<float>(sum[j]);
    dist.variance[j] = static_cast<float>(sq[j] / static_cast<double>(T));
  }
  dist.count = T;
  if (retain_samples) dist.samples = std::move(outputs);
  return dist;
}

Network build_network(Architecture arch, const Shape& input_shape, std::size_t outputs, Head head,
                      const UqStrategy& strategy, std::uint64_t seed) {
  NetworkBuilder b(input_shape);
  auto last_block = [&](NetworkBuilder& nb) {
    switch (strategy.method) {
      case UqMethod::MCDropout: nb.dropout(strategy.p).dense(outputs); break;
      case UqMethod::MCDropConnect: nb.dropconnect_dense(outputs, strategy.p); break;
      case UqMethod::Flipout: nb.flipout_dense(outputs); break;
      case UqMethod::Ensemble: nb.dense(outputs); break;
    }
  };
  switch (arch) {
    case Architecture::HousingMlp:
      b.dense(8).relu().dense(8).relu().dense(8).relu();
      last_block(b);
      break;
    case Architecture::CifarCnn:
      b.conv2d(16, 3, 2).relu().conv2d(32, 3, 2).relu().flatten().dense(64).relu().dense(64);
      if (strategy.method == UqMethod::MCDropout) {
        b.dropout(strategy.p).relu().dense(outputs);
      } else {
        b.relu();
        last_block(b);
      }
      break;
    case Architecture::Linear:
      last_block(b);
      break;
  }
  return b.build(head, seed);
}

std::uint64_t member_init_seed(std::uint64_t seed, std::size_t member) {
  return derive_seed(seed, 0x696e6974ULL, member);
}

StochasticModel train_uq(const Tensor& inputs, const Tensor& targets, Architecture arch, std::size_t outputs,
                         Head head, const UqStrategy& strategy, const TrainConfig& cfg) {
  Shape input_shape(inputs.shape().begin() + 1, inputs.shape().end());
  const std::size_t count = strategy.method == UqMethod::Ensemble ? strategy.members : 1;
  if (count == 0) throw InvalidArgument("ensemble needs at least one member");
  std::vector<Network> members;
  for (std::size_t m = 0; m < count; ++m) {
    Network net = build_network(arch, input_shape, outputs, head, strategy, member_init_seed(cfg.seed, m));
    members.push_back(train(std::move(net), inputs, targets, cfg).network);
  }
  return StochasticModel(strategy, std::move(members));
}

}  // namespace uxai
