#include <doctest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "uxai/error.hpp"
#include "uxai/explain.hpp"

using namespace uxai;

namespace {

ModelSample eval_sample(const Network& net) { return ModelSample{&net, std::nullopt, 0}; }

double eval_output(const Network& net, const Tensor& x, std::size_t target) {
  return forward(net, x, Mode::Eval).output[target];
}

Network linear_net(const std::vector<float>& w) {
  Network net = NetworkBuilder({w.size()}).dense(1).build(Head::Regression, 0);
  auto& d = std::get<Dense>(net.mutable_layer(0));
  for (std::size_t i = 0; i < w.size(); ++i) d.weight[i] = w[i];
  d.bias[0] = 0.25f;
  return net;
}

}  // namespace

TEST_SUITE("explain") {

TEST_CASE("GBP without ReLU equals the plain gradient") {
  const auto net = NetworkBuilder({5}).dense(4).dense(2).build(Head::Regression, 3);
  Rng rng(1);
  const Tensor x = oracle::random_tensor(rng, {5});
  const auto fwd = forward(net, x, Mode::Eval);
  CHECK(guided_backprop_raw(net, fwd.tape, 1) == backward_to_input(net, fwd.tape, 1));
}

TEST_CASE("GBP single ReLU truth table") {
  // y = w2 * relu(w1 * x); the ReLU sees f = w1 * x and upstream R = w2.
  auto make = [](float w1, float w2) {
    Network net = NetworkBuilder({1}).dense(1).relu().dense(1).build(Head::Regression, 0);
    std::get<Dense>(net.mutable_layer(0)).weight[0] = w1;
    std::get<Dense>(net.mutable_layer(2)).weight[0] = w2;
    return net;
  };
  const Tensor x = Tensor::vector({1.0f});
  {
    const auto net = make(2.0f, 3.0f);
    const auto fwd = forward(net, x, Mode::Eval);
    CHECK(guided_backprop_raw(net, fwd.tape, 0)[0] == 6.0f);
  }
  {
    const auto net = make(2.0f, -3.0f);
    const auto fwd = forward(net, x, Mode::Eval);
    CHECK(guided_backprop_raw(net, fwd.tape, 0)[0] == 0.0f);
    CHECK(backward_to_input(net, fwd.tape, 0)[0] == -6.0f);
  }
  {
    const auto net = make(-2.0f, 3.0f);
    const auto fwd = forward(net, x, Mode::Eval);
    CHECK(guided_backprop_raw(net, fwd.tape, 0)[0] == 0.0f);
  }
}

TEST_CASE("GBP equals the per-neuron rule loop") {
  Rng rng(31);
  for (int c = 0; c < 25; ++c) {
    const std::size_t in = 2 + rng.index(6);
    NetworkBuilder b({in});
    b.dense(3 + rng.index(8)).relu();
    if (c % 2) b.dense(3 + rng.index(8)).relu();
    const auto net = b.dense(1 + rng.index(3)).build(Head::Regression, c);
    const Tensor x = oracle::random_tensor(rng, {in});
    const std::size_t target = rng.index(net.output_shape()[0]);
    const auto fwd = forward(net, x, Mode::Eval);
    const Tensor got = guided_backprop_raw(net, fwd.tape, target);
    const auto want = oracle::guided_backprop_loop(net, {x.values().begin(), x.values().end()}, target);
    for (std::size_t i = 0; i < in; ++i) CHECK(got[i] == want[i]);
  }
}

TEST_CASE("GBP equals the gradient when every signal is positive") {
  Rng rng(5);
  for (int c = 0; c < 10; ++c) {
    Network net = NetworkBuilder({4}).dense(6).relu().dense(5).relu().dense(1).build(Head::Regression, c);
    for (std::size_t i : net.parameterized_layers()) {
      auto& d = std::get<Dense>(net.mutable_layer(i));
      for (auto& w : d.weight.values()) w = static_cast<float>(rng.uniform(0.05, 1.0));
    }
    const Tensor x = oracle::random_tensor(rng, {4}, 0.1, 1.0);
    const auto fwd = forward(net, x, Mode::Eval);
    CHECK(guided_backprop_raw(net, fwd.tape, 0) == backward_to_input(net, fwd.tape, 0));
  }
}

TEST_CASE("image saliency reduces channels by max absolute value") {
  Tensor a({2, 1, 2}, std::vector<float>{1.0f, -4.0f, -3.0f, 2.0f});
  const Tensor r = reduce_channels(a);
  CHECK(r.shape() == Shape{1, 2});
  CHECK(r[0] == 3.0f);
  CHECK(r[1] == 4.0f);
  const Tensor v = Tensor::vector({-1.0f, 2.0f});
  CHECK(reduce_channels(v) == v);
}

TEST_CASE("IG on a linear model is w_i x_i") {
  const std::vector<float> w{0.5f, -1.25f, 2.0f, 0.75f};
  const auto net = linear_net(w);
  const Tensor x = Tensor::vector({1.0f, 2.0f, -0.5f, 3.0f});
  for (std::size_t m : {1u, 7u, 50u}) {
    const Tensor ig = integrated_gradients_raw(eval_sample(net), x, Tensor({4}), m, 0);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(ig[i] - w[i] * x[i]) < 1e-5);
  }
}

TEST_CASE("IG of the baseline itself is zero") {
  Rng rng(2);
  const auto net = oracle::random_mlp(rng, 4, false);
  const Tensor x = oracle::random_tensor(rng, net.input_shape());
  const Tensor ig = integrated_gradients_raw(eval_sample(net), x, x, 50, 0);
  for (float v : ig.values()) CHECK(v == 0.0f);
}

TEST_CASE("IG completeness against a fine Riemann oracle") {
  Rng rng(8);
  int checked = 0;
  for (int c = 0; c < 20; ++c) {
    const auto net = oracle::random_mlp(rng, 100 + c, false);
    const Tensor x = oracle::random_tensor(rng, net.input_shape());
    const Tensor base(net.input_shape());
    const auto s = eval_sample(net);
    const double delta = eval_output(net, x, 0) - eval_output(net, base, 0);
    const Tensor ig = integrated_gradients_raw(s, x, base, 50, 0);
    const Tensor fine = integrated_gradients_raw(s, x, base, 10000, 0);
    const double sum = std::accumulate(ig.values().begin(), ig.values().end(), 0.0);
    const double fine_sum = std::accumulate(fine.values().begin(), fine.values().end(), 0.0);
    CHECK(std::abs(fine_sum - delta) <= 1e-3 * std::max(1.0, std::abs(delta)));
    if (std::abs(fine_sum) < 1e-3) continue;
    CHECK(std::abs(sum - fine_sum) <= 0.02 * std::abs(fine_sum));
    ++checked;
  }
  CHECK(checked >= 15);
}

TEST_CASE("IG error shrinks with more steps on smooth nets") {
  Rng rng(13);
  for (int c = 0; c < 5; ++c) {
    Network net = NetworkBuilder({3}).dense(4).dense(1).build(Head::Regression, c);
    const Tensor x = oracle::random_tensor(rng, {3});
    const Tensor base(Shape{3});
    const auto s = eval_sample(net);
    const Tensor oracle_map = integrated_gradients_raw(s, x, base, 10000, 0);
    double prev = INFINITY;
    for (std::size_t m : {5u, 10u, 20u}) {
      const Tensor ig = integrated_gradients_raw(s, x, base, m, 0);
      double err = 0;
      for (std::size_t i = 0; i < 3; ++i) err += std::abs(ig[i] - oracle_map[i]);
      CHECK(err <= prev + 1e-6);
      prev = err;
    }
  }
}

TEST_CASE("IG argument checks") {
  const auto net = linear_net({1.0f, 1.0f});
  CHECK_THROWS_AS(integrated_gradients_raw(eval_sample(net), Tensor({2}), Tensor({2}), 0, 0), InvalidArgument);
  CHECK_THROWS_AS(integrated_gradients_raw(eval_sample(net), Tensor({2}), Tensor({3}), 5, 0), ShapeError);
}

TEST_CASE("LIME recovers a linear model") {
  const std::vector<float> w{0.8f, -1.5f, 0.3f, 2.2f, -0.7f, 0.0f, 1.1f, -0.4f};
  const auto net = linear_net(w);
  Rng data(1);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (double width : {0.0, 0.5, 3.0}) {
      LimeOptions opt;
      opt.kernel_width = width;
      Rng rng(seed);
      const Tensor x = oracle::random_tensor(data, {8}, -2, 2);
      const auto sal = lime_tabular(eval_sample(net), x, opt, rng, 0);
      for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::abs(sal.values[i] - w[i]) < 1e-2);
    }
  }
}

TEST_CASE("LIME on a constant model gives zero coefficients") {
  Network net = linear_net({0.0f, 0.0f, 0.0f});
  Rng rng(4);
  const auto sal = lime_tabular(eval_sample(net), Tensor::vector({1.0f, 2.0f, 3.0f}), {}, rng, 0);
  for (float v : sal.values.values()) CHECK(std::abs(v) < 1e-6);
}

TEST_CASE("WLS is invariant to scaling every weight") {
  Rng rng(3);
  const std::size_t rows = 50, cols = 3;
  std::vector<double> design(rows * cols), y(rows), w(rows), w2(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) design[r * cols + c] = rng.normal();
    y[r] = rng.normal();
    w[r] = rng.uniform(0.1, 1.0);
    w2[r] = 2.0 * w[r];
  }
  const auto a = weighted_least_squares(design, cols, y, w);
  const auto b = weighted_least_squares(design, cols, y, w2);
  for (std::size_t c = 0; c < cols; ++c) CHECK(a.coefficients[c] == doctest::Approx(b.coefficients[c]).epsilon(1e-12));
  CHECK(a.intercept == doctest::Approx(b.intercept).epsilon(1e-12));
}

TEST_CASE("WLS rejects a rank-deficient design") {
  std::vector<double> design{1, 2, 2, 4, 3, 6, 4, 8};
  std::vector<double> y{1, 2, 3, 4}, w{1, 1, 1, 1};
  CHECK_THROWS_AS(weighted_least_squares(design, 2, y, w), SingularDesign);
}

TEST_CASE("LIME is deterministic and finite") {
  Rng rng(9);
  const auto net = oracle::random_mlp(rng, 9, false);
  const Tensor x = oracle::random_tensor(rng, net.input_shape());
  Rng a(5), b(5);
  const auto s1 = lime_tabular(eval_sample(net), x, {}, a, 0);
  const auto s2 = lime_tabular(eval_sample(net), x, {}, b, 0);
  CHECK(s1.values == s2.values);
  CHECK(s1.values.all_finite());
}

TEST_CASE("LIME is rejected for images") {
  CHECK_THROWS_AS(validate_explainer_for_input(ExplainerKind::Lime, {3, 32, 32}), InvalidArgument);
  CHECK_NOTHROW(validate_explainer_for_input(ExplainerKind::Lime, {8}));
  CHECK_NOTHROW(validate_explainer_for_input(ExplainerKind::GuidedBackprop, {3, 32, 32}));
}

TEST_CASE("explainer names parse") {
  CHECK(parse_explainer("gbp") == ExplainerKind::GuidedBackprop);
  CHECK(parse_explainer("ig") == ExplainerKind::IntegratedGradients);
  CHECK(parse_explainer("lime") == ExplainerKind::Lime);
  CHECK_THROWS(parse_explainer("shap"));
}

}  // TEST_SUITE
