#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "oracles.hpp"
#include "uxai/checkpoint.hpp"
#include "uxai/error.hpp"
#include "uxai/network.hpp"
#include "uxai/train.hpp"

using namespace uxai;

TEST_SUITE("nn-core") {

TEST_CASE("dense identity case") {
  Network net = NetworkBuilder({1}).dense(1).build(Head::Regression, 0);
  auto& d = std::get<Dense>(net.mutable_layer(0));
  d.weight[0] = 2.0f;
  d.bias[0] = 0.0f;
  const auto out = forward(net, Tensor::vector({3.0f}), Mode::Eval).output;
  CHECK(out.shape() == Shape{1});
  CHECK(out[0] == 6.0f);
}

TEST_CASE("tensor shape invariant and non-finite detection") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<float>(5)), ShapeError);
  Tensor t({2, 2}, 1.0f);
  CHECK(t.all_finite());
  t[3] = std::nanf("");
  CHECK_FALSE(t.all_finite());
  CHECK_THROWS_AS(t.require_finite("t"), NonFiniteError);
  t[3] = INFINITY;
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("non-finite activation is surfaced") {
  const Network net = NetworkBuilder({2}).dense(3).relu().dense(1).build(Head::Regression, 1);
  CHECK_THROWS_AS(forward(net, Tensor::vector({1.0f, std::nanf("")}), Mode::Eval), NonFiniteError);
}

TEST_CASE("shape mismatch on input") {
  const Network net = NetworkBuilder({3}).dense(2).build(Head::Regression, 0);
  CHECK_THROWS_AS(forward(net, Tensor({4}), Mode::Eval), ShapeError);
}

TEST_CASE("conv2d matches the quadruple-loop reference exactly") {
  Rng rng(11);
  for (int c = 0; c < 5; ++c) {
    const std::size_t cin = 1 + rng.index(3), side = 5 + rng.index(6);
    const std::size_t stride = 1 + rng.index(2), pad = rng.index(2);
    Network net = NetworkBuilder({cin, side, side}).conv2d(2 + rng.index(3), 3, stride, pad).flatten().build(Head::Regression, c);
    auto& conv = std::get<Conv2D>(net.mutable_layer(0));
    for (auto& b : conv.bias.values()) b = static_cast<float>(rng.uniform(-0.5, 0.5));
    const Tensor x = oracle::random_tensor(rng, {cin, side, side});
    const Tensor got = forward(net, x, Mode::Eval).output;
    const Tensor want = oracle::naive_conv2d(conv, x);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == want[i]);
  }
}

TEST_CASE("networks with equal architecture and seed are bit-identical") {
  const auto a = NetworkBuilder({3, 8, 8}).conv2d(4, 3).relu().flatten().dense(5).build(Head::Classification, 42);
  const auto b = NetworkBuilder({3, 8, 8}).conv2d(4, 3).relu().flatten().dense(5).build(Head::Classification, 42);
  const auto c = NetworkBuilder({3, 8, 8}).conv2d(4, 3).relu().flatten().dense(5).build(Head::Classification, 43);
  CHECK(a.same_parameters(b));
  CHECK(a.parameter_hash() == b.parameter_hash());
  CHECK_FALSE(a.same_parameters(c));
}

TEST_CASE("initializer range and zero biases") {
  const auto net = NetworkBuilder({6}).dense(8).relu().dense(8).build(Head::Regression, 5);
  for (std::size_t i : net.parameterized_layers()) {
    const auto& d = std::get<Dense>(net.layer(i));
    const float bound = static_cast<float>(std::sqrt(6.0 / static_cast<double>(d.in)));
    for (float w : d.weight.values()) CHECK(std::abs(w) <= bound);
    for (float b : d.bias.values()) CHECK(b == 0.0f);
  }
}

TEST_CASE("flipout posterior sigma starts at exp(-3)") {
  const auto net = NetworkBuilder({4}).flipout_dense(3).build(Head::Regression, 2);
  const auto& f = std::get<FlipoutDense>(net.layer(0));
  for (float ls : f.log_sigma.values()) {
    CHECK(ls == kFlipoutInitialLogSigma);
    CHECK(std::exp(ls) > 0.0f);
  }
}

TEST_CASE("invalid dropout probability is rejected") {
  CHECK_THROWS(NetworkBuilder({4}).dropout(1.0f).build(Head::Regression, 0));
  CHECK_THROWS(NetworkBuilder({4}).dropout(-0.1f).build(Head::Regression, 0));
  CHECK_THROWS(NetworkBuilder({4}).dropconnect_dense(2, 1.0f).build(Head::Regression, 0));
}

TEST_CASE("dropout with p=0 in stochastic eval equals eval") {
  const auto net = NetworkBuilder({5}).dense(6).relu().dropout(0.0f).dense(2).build(Head::Regression, 3);
  Rng data(1), noise(2);
  const Tensor x = oracle::random_tensor(data, {4, 5});
  const auto eval = forward(net, x, Mode::Eval).output;
  const auto stoch = forward(net, x, Mode::StochasticEval, noise).output;
  CHECK(eval == stoch);
}

TEST_CASE("inverted dropout keeps the expectation") {
  const std::size_t units = 10000;
  const auto net = NetworkBuilder({units}).dropout(0.5f).build(Head::Regression, 0);
  const Tensor x({units}, 1.0f);
  Rng rng(7);
  const auto out = forward(net, x, Mode::StochasticEval, rng).output;
  double mean = 0.0;
  for (float v : out.values()) {
    CHECK((v == 0.0f || v == 2.0f));
    mean += v;
  }
  mean /= static_cast<double>(units);
  // Each unit is 0 or 2 with equal probability: sd of the mean is 1/sqrt(n).
  CHECK(std::abs(mean - 1.0) <= 3.0 / std::sqrt(static_cast<double>(units)));
}

TEST_CASE("stochastic eval shares one realization across rows") {
  const auto net = NetworkBuilder({3}).dense(16).relu().dropout(0.5f).dense(1).build(Head::Regression, 4);
  Rng data(3), noise(9);
  Tensor row = oracle::random_tensor(data, {3});
  Tensor batch({2, 3});
  std::copy(row.values().begin(), row.values().end(), batch.row(0).begin());
  std::copy(row.values().begin(), row.values().end(), batch.row(1).begin());
  const auto out = forward(net, batch, Mode::StochasticEval, noise).output;
  CHECK(out[0] == out[1]);
}

TEST_CASE("linear network gradient is its weight vector") {
  const auto net = NetworkBuilder({4}).dense(1).build(Head::Regression, 8);
  const auto& d = std::get<Dense>(net.layer(0));
  Rng rng(2);
  for (int rep = 0; rep < 3; ++rep) {
    const Tensor x = oracle::random_tensor(rng, {4}, -5, 5);
    const auto fwd = forward(net, x, Mode::Eval);
    const Tensor g = backward_to_input(net, fwd.tape, 0);
    for (std::size_t i = 0; i < 4; ++i) CHECK(g[i] == d.weight[i]);
  }
}

TEST_CASE("dead ReLU network has zero input gradient") {
  Network net = NetworkBuilder({3}).dense(4).relu().dense(1).build(Head::Regression, 1);
  auto& first = std::get<Dense>(net.mutable_layer(0));
  for (auto& b : first.bias.values()) b = -100.0f;
  const auto fwd = forward(net, Tensor::vector({0.3f, -0.2f, 0.9f}), Mode::Eval);
  const Tensor g = backward_to_input(net, fwd.tape, 0);
  for (float v : g.values()) CHECK(v == 0.0f);
}

TEST_CASE("gradients match finite differences on random nets") {
  Rng rng(123);
  for (int c = 0; c < 12; ++c) {
    const bool conv = c % 2 == 1;
    const Network net = conv ? oracle::random_convnet(rng, c, c % 4 == 1) : oracle::random_mlp(rng, c, c % 4 == 0);
    const Tensor x = oracle::random_tensor(rng, net.input_shape());
    Rng noise_rng(c);
    const Noise noise = draw_noise(net, noise_rng);
    const auto fwd = forward(net, x, noise);
    const std::size_t target = rng.index(net.output_shape()[0]);
    const Tensor g = backward_to_input(net, fwd.tape, target);
    const auto fd = oracle::finite_difference_gradient(net, oracle::to_double(x), target, 1e-3, &noise);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double err = std::abs(g[i] - fd[i]) / std::max(1.0, std::abs(fd[i]));
      CHECK(err < 1e-2);
    }
  }
}

TEST_CASE("backward errors: stale tape and selector out of range") {
  Network net = NetworkBuilder({2}).dense(2).build(Head::Regression, 0);
  const auto fwd = forward(net, Tensor::vector({1.0f, 2.0f}), Mode::Eval);
  CHECK_THROWS_AS(backward_to_input(net, fwd.tape, 2), InvalidArgument);
  std::get<Dense>(net.mutable_layer(0)).weight[0] = 5.0f;
  CHECK_THROWS_AS(backward_to_input(net, fwd.tape, 0), StaleTapeError);
  const Network other = NetworkBuilder({2}).dense(2).build(Head::Regression, 0);
  CHECK_THROWS_AS(backward_to_input(other, fwd.tape, 0), StaleTapeError);
}

TEST_CASE("reinitialize_layer touches one layer only") {
  const auto net = NetworkBuilder({8}).dense(8).relu().dense(8).relu().dense(1).build(Head::Regression, 10);
  Rng a(77), b(77);
  const Network r1 = reinitialize_layer(net, 2, a);
  const Network r2 = reinitialize_layer(net, 2, b);
  CHECK(r1.same_parameters(r2));
  CHECK(std::get<Dense>(r1.layer(0)).weight == std::get<Dense>(net.layer(0)).weight);
  CHECK(std::get<Dense>(r1.layer(4)).weight == std::get<Dense>(net.layer(4)).weight);
  CHECK_FALSE(std::get<Dense>(r1.layer(2)).weight == std::get<Dense>(net.layer(2)).weight);
  // The input network is unchanged.
  CHECK(net.parameter_hash() == NetworkBuilder({8}).dense(8).relu().dense(8).relu().dense(1).build(Head::Regression, 10).parameter_hash());
  Rng c(1);
  CHECK_THROWS_AS(reinitialize_layer(net, 1, c), InvalidArgument);
}

TEST_CASE("redrawn dense weights follow the initializer spread") {
  const auto net = NetworkBuilder({8}).dense(8).build(Head::Regression, 0);
  // Uniform(-a, a) has standard deviation a / sqrt(3).
  const double s = std::sqrt(6.0 / 8.0) / std::sqrt(3.0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const auto r = reinitialize_layer(net, 0, rng);
    const auto& w = std::get<Dense>(r.layer(0)).weight;
    double mean = 0, sq = 0;
    for (float v : w.values()) mean += v;
    mean /= static_cast<double>(w.size());
    for (float v : w.values()) sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sq / static_cast<double>(w.size()));
    CHECK(sd >= 0.5 * s);
    CHECK(sd <= 1.5 * s);
  }
}

TEST_CASE("training recovers y = 2x") {
  Rng rng(4);
  Tensor x({100, 1}), y({100, 1});
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    x[i] = static_cast<float>(rng.uniform(-1, 1));
    y[i] = 2.0f * x[i];
    sxy += static_cast<double>(x[i]) * y[i];
    sxx += static_cast<double>(x[i]) * x[i];
  }
  const double least_squares = sxy / sxx;
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.learning_rate = 0.1f;
  cfg.batch_size = 10;
  const auto net = NetworkBuilder({1}).dense(1).build(Head::Regression, 0);
  const auto res = train(net, x, y, cfg);
  const float w = std::get<Dense>(res.network.layer(0)).weight[0];
  CHECK(std::abs(w - 2.0) < 0.05);
  CHECK(std::abs(w - least_squares) < 0.05);
  CHECK(res.loss_history.back() < res.loss_history.front());
}

TEST_CASE("zero epochs return the initialization") {
  const auto net = NetworkBuilder({3}).dense(4).relu().dense(1).build(Head::Regression, 6);
  Rng rng(1);
  const Tensor x = oracle::random_tensor(rng, {20, 3}), y = oracle::random_tensor(rng, {20, 1});
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.batch_size = 4;
  CHECK(train(net, x, y, cfg).network.same_parameters(net));
}

TEST_CASE("training is deterministic") {
  const auto net = NetworkBuilder({3}).dense(8).relu().dropout(0.5f).dense(1).build(Head::Regression, 6);
  Rng rng(1);
  const Tensor x = oracle::random_tensor(rng, {64, 3}), y = oracle::random_tensor(rng, {64, 1});
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 16;
  const auto a = train(net, x, y, cfg), b = train(net, x, y, cfg);
  CHECK(a.network.same_parameters(b.network));
  CHECK(a.loss_history == b.loss_history);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.batch_size = 0;
  CHECK_THROWS(cfg.validate(10));
  cfg.batch_size = 11;
  CHECK_THROWS(cfg.validate(10));
  cfg.batch_size = 10;
  cfg.learning_rate = 0.0f;
  CHECK_THROWS(cfg.validate(10));
}

TEST_CASE("divergence aborts with a diagnostic") {
  const auto net = NetworkBuilder({1}).dense(1).build(Head::Regression, 0);
  Tensor x({4, 1}, 1e4f), y({4, 1}, 1e4f);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 4;
  cfg.learning_rate = 10.0f;
  CHECK_THROWS_AS(train(net, x, y, cfg), TrainingDiverged);
}

TEST_CASE("flipout KL vanishes when the posterior equals the prior") {
  auto net = NetworkBuilder({3}).flipout_dense(2).build(Head::Regression, 0);
  auto& f = std::get<FlipoutDense>(net.mutable_layer(0));
  f.mean.fill(f.prior_mean);
  f.log_sigma.fill(std::log(f.prior_sigma));
  CHECK(flipout_kl(f) == 0.0);
  f.mean[0] = 0.5f;
  CHECK(flipout_kl(f) > 0.0);
}

TEST_CASE("checkpoint layout and round trip") {
  const auto net = NetworkBuilder({2, 6, 6})
                       .conv2d(3, 3)
                       .relu()
                       .flatten()
                       .dropconnect_dense(4, 0.3f)
                       .relu()
                       .flipout_dense(2)
                       .build(Head::Classification, 9);
  const auto bytes = encode_checkpoint(net);
  REQUIRE(bytes.size() > 8);
  CHECK(std::memcmp(bytes.data(), "UXN1", 4) == 0);
  std::uint32_t count = 0;
  std::memcpy(&count, bytes.data() + 4, 4);
  CHECK(count == net.size());
  CHECK(bytes[8] == static_cast<std::uint8_t>(LayerKind::Conv2D));
  // Conv: tag, rank 4, four dims, then weights and bias.
  std::uint32_t rank = 0;
  std::memcpy(&rank, bytes.data() + 9, 4);
  CHECK(rank == 4);
  float first = 0;
  std::memcpy(&first, bytes.data() + 9 + 4 + 16, 4);
  CHECK(first == std::get<Conv2D>(net.layer(0)).weight[0]);

  const auto fresh = NetworkBuilder({2, 6, 6})
                         .conv2d(3, 3)
                         .relu()
                         .flatten()
                         .dropconnect_dense(4, 0.3f)
                         .relu()
                         .flipout_dense(2)
                         .build(Head::Classification, 1);
  const Network back = decode_checkpoint(bytes, fresh);
  CHECK(back.same_parameters(net));
  CHECK(encode_checkpoint(back) == bytes);

  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_checkpoint(truncated, fresh), FormatError);
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad, fresh), FormatError);
  const auto other = NetworkBuilder({2, 6, 6}).conv2d(4, 3).relu().flatten().dense(2).build(Head::Classification, 1);
  CHECK_THROWS_AS(decode_checkpoint(bytes, other), FormatError);
}

TEST_CASE("ensemble manifest round trip") {
  const auto dir = oracle::scratch_dir("manifest");
  std::vector<Network> members;
  for (std::uint64_t s = 0; s < 3; ++s) members.push_back(NetworkBuilder({3}).dense(2).build(Head::Regression, s));
  save_ensemble(dir / "m.manifest", members);
  const auto manifest = read_manifest(dir / "m.manifest");
  CHECK(manifest.members.size() == 3);
  CHECK(manifest.architecture_hash == members[0].architecture_hash());
  const auto loaded = load_ensemble(dir / "m.manifest", members[0]);
  REQUIRE(loaded.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(loaded[i].same_parameters(members[i]));
}

}  // TEST_SUITE
