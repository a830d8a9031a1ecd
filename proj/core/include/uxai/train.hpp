#pragma once

#include <cstdint>
#include <vector>

#include "uxai/network.hpp"

namespace uxai {

enum class Optimizer { Sgd, SgdMomentum };

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  float learning_rate = 0.01f;
  Optimizer optimizer = Optimizer::SgdMomentum;
  float momentum = 0.9f;
  std::uint64_t seed = 0;  ///< data order and training-time noise

  /// epochs may be 0 (returns the initialization); everything else must be
  /// positive and batch_size must not exceed the dataset size.
  void validate(std::size_t dataset_size) const;
};

struct TrainResult {
  Network network;
  std::vector<double> loss_history;  ///< mean total loss per epoch
  std::vector<double> kl_history;    ///< scaled KL contribution per epoch (0 without Flipout)
};

/// Mean squared error for regression heads (y is [N, outputs]) or softmax
/// cross-entropy for classification heads (y is [N] class indices).
struct TaskLoss {
  double value = 0.0;
  Tensor output_grad;
};
TaskLoss task_loss(Head head, const Tensor& output, const Tensor& targets);

/// Closed-form KL(q || prior) summed over every weight of the layer.
double flipout_kl(const FlipoutDense& layer);

/// Mini-batch training. With `elbo` set and Flipout layers present the
/// objective is KL / num_batches + task NLL; otherwise the task loss only.
/// Deterministic for a fixed (network, data, config).
TrainResult train(Network net, const Tensor& inputs, const Tensor& targets, const TrainConfig& cfg,
                  bool elbo = true);

}  // namespace uxai
