#include "uxai/train.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "uxai/error.hpp"

namespace uxai {

void TrainConfig::validate(std::size_t dataset_size) const {
  if (batch_size == 0 || !(learning_rate > 0.0f)) {
    throw InvalidArgument("batch size and learning rate must be positive");
  }
  if (optimizer == Optimizer::SgdMomentum && !(momentum > 0.0f && momentum < 1.0f)) {
    throw InvalidArgument("momentum must lie in (0, 1)");
  }
  if (dataset_size == 0) throw InvalidArgument("training data is empty");
  if (batch_size > dataset_size) {
    throw InvalidArgument("batch size " + std::to_string(batch_size) + " exceeds dataset size " +
                          std::to_string(dataset_size));
  }
}

TaskLoss task_loss(Head head, const Tensor& output, const Tensor& targets) {
  const std::size_t n = output.dim(0);
  const std::size_t k = output.row_size();
  TaskLoss loss;
  loss.output_grad = Tensor(output.shape());
  if (head == Head::Regression) {
    if (targets.size() != output.size()) throw ShapeError("regression targets do not match outputs");
    const double scale = 1.0 / static_cast<double>(n * k);
    double sum = 0.0;
    for (std::size_t i = 0; i < output.size(); ++i) {
      const double d = static_cast<double>(output[i]) - targets[i];
      sum += d * d;
      loss.output_grad[i] = static_cast<float>(2.0 * d * scale);
    }
    loss.value = sum * scale;
    return loss;
  }
  if (targets.size() != n) throw ShapeError("classification targets must hold one class index per row");
  const Tensor probs = softmax_rows(output);
  double sum = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto label = static_cast<std::size_t>(targets[r]);
    if (label >= k) throw InvalidArgument("class label " + std::to_string(label) + " out of range");
    sum -= std::log(std::max(static_cast<double>(probs[r * k + label]), 1e-30));
    for (std::size_t j = 0; j < k; ++j) {
      const float onehot = j == label ? 1.0f : 0.0f;
      loss.output_grad[r * k + j] = (probs[r * k + j] - onehot) / static_cast<float>(n);
    }
  }
  loss.value = sum / static_cast<double>(n);
  return loss;
}

double flipout_kl(const FlipoutDense& l) {
  const double prior_var = static_cast<double>(l.prior_sigma) * l.prior_sigma;
  double kl = 0.0;
  for (std::size_t i = 0; i < l.mean.size(); ++i) {
    const double log_sigma = l.log_sigma[i];
    const double var = std::exp(2.0 * log_sigma);
    const double dm = static_cast<double>(l.mean[i]) - l.prior_mean;
    kl += std::log(static_cast<double>(l.prior_sigma)) - log_sigma + (var + dm * dm) / (2.0 * prior_var) - 0.5;
  }
  return kl;
}

namespace {

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows) {
  Shape shape = t.shape();
  shape[0] = rows.size();
  Tensor out(shape);
  const std::size_t width = t.row_size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = t.row(rows[i]);
    std::copy(src.begin(), src.end(), out.data() + i * width);
  }
  return out;
}

}  // namespace

TrainResult train(Network net, const Tensor& inputs, const Tensor& targets, const TrainConfig& cfg, bool elbo) {
  const std::size_t n = inputs.dim(0);
  cfg.validate(n);
  if (targets.dim(0) != n) throw ShapeError("inputs and targets disagree on the number of examples");

  TrainResult result{std::move(net), {}, {}};
  Network& model = result.network;

  // Velocity buffers, one per parameter tensor.
  std::vector<std::vector<Tensor>> velocity(model.size());
  for (std::size_t i = 0; i < model.size(); ++i)
    for (const auto* p : parameters(model.layer(i))) velocity[i].emplace_back(p->shape());

  const bool use_kl = elbo && model.has_layer(LayerKind::FlipoutDense);
  const std::size_t num_batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  const double kl_scale = 1.0 / static_cast<double>(num_batches);

  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffler(derive_seed(cfg.seed, epoch));
    shuffler.shuffle(std::span(order));

    double epoch_loss = 0.0, epoch_kl = 0.0;
    for (std::size_t b = 0; b < num_batches; ++b) {
      const std::size_t begin = b * cfg.batch_size;
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + begin, end - begin);
      const Tensor xb = gather_rows(inputs, rows);
      const Tensor yb = gather_rows(targets, rows);

      Rng noise(derive_seed(cfg.seed, epoch, b + 1));
      Gradients grads;
      TaskLoss loss;
      try {
        const ForwardResult fwd = forward(model, xb, Mode::Train, noise);
        loss = task_loss(model.head(), fwd.output, yb);
        grads = backward(model, fwd.tape, loss.output_grad, ReluRule::Gradient, true);
      } catch (const NonFiniteError& e) {
        throw TrainingDiverged("training became non-finite at epoch " + std::to_string(epoch) + ", batch " +
                               std::to_string(b) + " (" + e.what() + ")");
      }

      double kl = 0.0;
      if (use_kl) {
        for (std::size_t i = 0; i < model.size(); ++i) {
          const auto* f = std::get_if<FlipoutDense>(&model.layer(i));
          if (!f) continue;
          kl += flipout_kl(*f);
          const float prior_var = f->prior_sigma * f->prior_sigma;
          auto& g = grads.parameters[i];
          for (std::size_t w = 0; w < f->mean.size(); ++w) {
            const float var = std::exp(2.0f * f->log_sigma[w]);
            g[0][w] += static_cast<float>(kl_scale) * (f->mean[w] - f->prior_mean) / prior_var;
            g[1][w] += static_cast<float>(kl_scale) * (var / prior_var - 1.0f);
          }
        }
        kl *= kl_scale;
      }
      const double total = loss.value + kl;
      if (!std::isfinite(total)) {
        throw TrainingDiverged("loss became non-finite at epoch " + std::to_string(epoch) + ", batch " +
                               std::to_string(b) + " (task loss " + std::to_string(loss.value) + ", kl " +
                               std::to_string(kl) + ")");
      }
      epoch_loss += total;
      epoch_kl += kl;

      for (std::size_t i = 0; i < model.size(); ++i) {
        if (grads.parameters[i].empty()) continue;
        auto params = parameters(model.mutable_layer(i));
        for (std::size_t k = 0; k < params.size(); ++k) {
          Tensor& p = *params[k];
          const Tensor& g = grads.parameters[i][k];
          Tensor& v = velocity[i][k];
          for (std::size_t w = 0; w < p.size(); ++w) {
            if (cfg.optimizer == Optimizer::SgdMomentum) {
              v[w] = cfg.momentum * v[w] - cfg.learning_rate * g[w];
              p[w] += v[w];
            } else {
              p[w] -= cfg.learning_rate * g[w];
            }
          }
          if (!p.all_finite()) {
            throw TrainingDiverged("parameters became non-finite at epoch " + std::to_string(epoch));
          }
        }
      }
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(num_batches));
    result.kl_history.push_back(epoch_kl / static_cast<double>(num_batches));
  }
  return result;
}

}  // namespace uxai
