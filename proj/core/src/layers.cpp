#include "uxai/layers.hpp"

#include <cmath>
#include <sstream>

#include "uxai/error.hpp"

namespace uxai {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void fill_uniform(Tensor& t, double limit, Rng& rng) {
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-limit, limit));
}

void check_probability(float p) {
  if (!(p >= 0.0f && p < 1.0f)) throw InvalidArgument("drop probability must lie in [0, 1)");
}

}  // namespace

LayerKind layer_kind(const Layer& layer) {
  return std::visit(Overloaded{
                        [](const Dense&) { return LayerKind::Dense; },
                        [](const Conv2D&) { return LayerKind::Conv2D; },
                        [](const ReLU&) { return LayerKind::ReLU; },
                        [](const Flatten&) { return LayerKind::Flatten; },
                        [](const Dropout&) { return LayerKind::Dropout; },
                        [](const DropConnectDense&) { return LayerKind::DropConnectDense; },
                        [](const FlipoutDense&) { return LayerKind::FlipoutDense; },
                    },
                    layer);
}

std::string_view layer_name(const Layer& layer) {
  switch (layer_kind(layer)) {
    case LayerKind::Dense: return "Dense";
    case LayerKind::Conv2D: return "Conv2D";
    case LayerKind::ReLU: return "ReLU";
    case LayerKind::Flatten: return "Flatten";
    case LayerKind::Dropout: return "Dropout";
    case LayerKind::DropConnectDense: return "DropConnectDense";
    case LayerKind::FlipoutDense: return "FlipoutDense";
  }
  return "?";
}

bool is_parameterized(const Layer& layer) {
  const auto k = layer_kind(layer);
  return k == LayerKind::Dense || k == LayerKind::Conv2D || k == LayerKind::DropConnectDense ||
         k == LayerKind::FlipoutDense;
}

bool is_stochastic(const Layer& layer) {
  const auto k = layer_kind(layer);
  return k == LayerKind::Dropout || k == LayerKind::DropConnectDense || k == LayerKind::FlipoutDense;
}

std::vector<Tensor*> parameters(Layer& layer) {
  return std::visit(Overloaded{
                        [](Dense& l) { return std::vector<Tensor*>{&l.weight, &l.bias}; },
                        [](Conv2D& l) { return std::vector<Tensor*>{&l.weight, &l.bias}; },
                        [](DropConnectDense& l) { return std::vector<Tensor*>{&l.weight, &l.bias}; },
                        [](FlipoutDense& l) { return std::vector<Tensor*>{&l.mean, &l.log_sigma, &l.bias}; },
                        [](auto&) { return std::vector<Tensor*>{}; },
                    },
                    layer);
}

std::vector<const Tensor*> parameters(const Layer& layer) {
  auto mut = parameters(const_cast<Layer&>(layer));
  return {mut.begin(), mut.end()};
}

Shape primary_parameter_shape(const Layer& layer) {
  return std::visit(Overloaded{
                        [](const Dense& l) { return Shape{l.in, l.out}; },
                        [](const Conv2D& l) { return Shape{l.out_channels, l.in_channels, l.kernel, l.kernel}; },
                        [](const DropConnectDense& l) { return Shape{l.in, l.out}; },
                        [](const FlipoutDense& l) { return Shape{l.in, l.out}; },
                        [](const auto&) { return Shape{}; },
                    },
                    layer);
}

std::size_t fan_in(const Layer& layer) {
  return std::visit(Overloaded{
                        [](const Dense& l) { return l.in; },
                        [](const Conv2D& l) { return l.in_channels * l.kernel * l.kernel; },
                        [](const DropConnectDense& l) { return l.in; },
                        [](const FlipoutDense& l) { return l.in; },
                        [](const auto&) { return std::size_t{0}; },
                    },
                    layer);
}

void initialize(Layer& layer, Rng& rng) {
  if (!is_parameterized(layer)) {
    throw InvalidArgument(std::string(layer_name(layer)) + " has no parameters to initialize");
  }
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in(layer)));
  const Shape wshape = primary_parameter_shape(layer);
  std::visit(Overloaded{
                 [&](Dense& l) {
                   l.weight = Tensor(wshape);
                   fill_uniform(l.weight, limit, rng);
                   l.bias = Tensor({l.out});
                 },
                 [&](Conv2D& l) {
                   l.weight = Tensor(wshape);
                   fill_uniform(l.weight, limit, rng);
                   l.bias = Tensor({l.out_channels});
                 },
                 [&](DropConnectDense& l) {
                   check_probability(l.p);
                   l.weight = Tensor(wshape);
                   fill_uniform(l.weight, limit, rng);
                   l.bias = Tensor({l.out});
                 },
                 [&](FlipoutDense& l) {
                   if (!(l.prior_sigma > 0.0f)) throw InvalidArgument("Flipout prior sigma must be positive");
                   l.mean = Tensor(wshape);
                   fill_uniform(l.mean, limit, rng);
                   l.log_sigma = Tensor(wshape, kFlipoutInitialLogSigma);
                   l.bias = Tensor({l.out});
                 },
                 [](auto&) {},
             },
             layer);
}

Shape layer_output_shape(const Layer& layer, const Shape& input) {
  auto expect_vector = [&](std::size_t in, std::string_view name) {
    if (input.size() != 1 || input[0] != in) {
      throw ShapeError(std::string(name) + " expects input [" + std::to_string(in) + "], got " +
                       shape_string(input));
    }
  };
  return std::visit(Overloaded{
                        [&](const Dense& l) {
                          expect_vector(l.in, "Dense");
                          return Shape{l.out};
                        },
                        [&](const DropConnectDense& l) {
                          expect_vector(l.in, "DropConnectDense");
                          return Shape{l.out};
                        },
                        [&](const FlipoutDense& l) {
                          expect_vector(l.in, "FlipoutDense");
                          return Shape{l.out};
                        },
                        [&](const Conv2D& l) {
                          if (input.size() != 3 || input[0] != l.in_channels) {
                            throw ShapeError("Conv2D expects [" + std::to_string(l.in_channels) + ",H,W], got " +
                                             shape_string(input));
                          }
                          if (l.stride == 0 || l.kernel == 0) throw ShapeError("Conv2D stride/kernel must be positive");
                          const auto h = input[1] + 2 * l.padding;
                          const auto w = input[2] + 2 * l.padding;
                          if (h < l.kernel || w < l.kernel) throw ShapeError("Conv2D kernel larger than input");
                          return Shape{l.out_channels, (h - l.kernel) / l.stride + 1, (w - l.kernel) / l.stride + 1};
                        },
                        [&](const Flatten&) { return Shape{shape_size(input)}; },
                        [&](const Dropout& l) {
                          check_probability(l.p);
                          return input;
                        },
                        [&](const ReLU&) { return input; },
                    },
                    layer);
}

std::string layer_signature(const Layer& layer) {
  std::ostringstream os;
  os << layer_name(layer);
  std::visit(Overloaded{
                 [&](const Dense& l) { os << "(" << l.in << "," << l.out << ")"; },
                 [&](const DropConnectDense& l) { os << "(" << l.in << "," << l.out << ",p=" << l.p << ")"; },
                 [&](const FlipoutDense& l) {
                   os << "(" << l.in << "," << l.out << ",prior=" << l.prior_mean << "," << l.prior_sigma << ")";
                 },
                 [&](const Conv2D& l) {
                   os << "(" << l.in_channels << "," << l.out_channels << ",k=" << l.kernel << ",s=" << l.stride
                      << ",pad=" << l.padding << ")";
                 },
                 [&](const Dropout& l) { os << "(p=" << l.p << ")"; },
                 [](const auto&) {},
             },
             layer);
  return os.str();
}

}  // namespace uxai
