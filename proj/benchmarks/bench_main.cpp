#include <benchmark/benchmark.h>

#include "uxai/explain.hpp"
#include "uxai/metrics.hpp"
#include "uxai/network.hpp"
#include "uxai/uq.hpp"

using namespace uxai;

namespace {

Tensor random_tensor(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

Network cifar_net() {
  UqStrategy s;
  return build_network(Architecture::CifarCnn, {3, 32, 32}, 10, Head::Classification, s, 1);
}

void BM_CnnForward(benchmark::State& state) {
  const Network net = cifar_net();
  Rng rng(1);
  const Tensor x = random_tensor(rng, {static_cast<std::size_t>(state.range(0)), 3, 32, 32});
  for (auto _ : state) benchmark::DoNotOptimize(forward(net, x, Mode::Eval).output);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CnnForward)->Arg(1)->Arg(32);

void BM_CnnGradient(benchmark::State& state) {
  const Network net = cifar_net();
  Rng rng(2);
  const Tensor x = random_tensor(rng, {3, 32, 32});
  for (auto _ : state) {
    const auto fwd = forward(net, x, Mode::Eval);
    benchmark::DoNotOptimize(backward_to_input(net, fwd.tape, 3));
  }
}
BENCHMARK(BM_CnnGradient);

void BM_GuidedBackprop(benchmark::State& state) {
  const Network net = cifar_net();
  Rng rng(3);
  const Tensor x = random_tensor(rng, {3, 32, 32});
  for (auto _ : state) {
    const auto fwd = forward(net, x, Mode::Eval);
    benchmark::DoNotOptimize(guided_backprop_raw(net, fwd.tape, 3));
  }
}
BENCHMARK(BM_GuidedBackprop);

void BM_IntegratedGradients(benchmark::State& state) {
  const Network net = cifar_net();
  Rng rng(4);
  const Tensor x = random_tensor(rng, {3, 32, 32});
  const Tensor base(Shape{3, 32, 32});
  const ModelSample sample{&net, std::nullopt, 0};
  for (auto _ : state) benchmark::DoNotOptimize(integrated_gradients_raw(sample, x, base, state.range(0), 3));
}
BENCHMARK(BM_IntegratedGradients)->Arg(50);

void BM_Ssim(benchmark::State& state) {
  Rng rng(5);
  const auto side = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_tensor(rng, {side, side}), b = random_tensor(rng, {side, side});
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim)->Arg(32)->Arg(128);

void BM_LimeTabular(benchmark::State& state) {
  UqStrategy s;
  const Network net = build_network(Architecture::HousingMlp, {8}, 1, Head::Regression, s, 1);
  Rng data(6);
  const Tensor x = random_tensor(data, {8});
  const ModelSample sample{&net, std::nullopt, 0};
  LimeOptions opt;
  opt.samples = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    Rng rng(7);
    benchmark::DoNotOptimize(lime_tabular(sample, x, opt, rng, 0));
  }
}
BENCHMARK(BM_LimeTabular)->Arg(500);

}  // namespace

BENCHMARK_MAIN();
