#include "uxai/network.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <cstdio>
#include <sstream>

#include "uxai/error.hpp"
#include "uxai/hash.hpp"

namespace uxai {

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

namespace {

std::uint64_t next_stamp() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Shape batched(std::size_t n, const Shape& s) {
  Shape out{n};
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

// y[r,:] = b + x[r,:] W  with W [in, out]; per-element accumulation in k order.
// Each output starts at the bias and accumulates x[k] * W[k, j] in
// increasing k; every variant below keeps that order, so results are
// bit-identical to a naive loop.
using Lane8 = float __attribute__((vector_size(32)));

// Out = 8 * V outputs held in V eight-lane registers.
template <std::size_t V>
void dense_forward_lanes(const float* __restrict x, std::size_t n, std::size_t in, const float* __restrict w,
                         const float* __restrict b, float* __restrict y) {
  constexpr std::size_t Out = 8 * V;
  for (std::size_t r = 0; r < n; ++r) {
    const float* __restrict xr = x + r * in;
    Lane8 acc[V];
    std::memcpy(acc, b, sizeof acc);
    for (std::size_t k = 0; k < in; ++k) {
      const float xv = xr[k];
      Lane8 wk[V];
      std::memcpy(wk, w + k * Out, sizeof wk);
      for (std::size_t v = 0; v < V; ++v) acc[v] += xv * wk[v];
    }
    std::memcpy(y + r * Out, acc, sizeof acc);
  }
}

void dense_forward_single(const float* __restrict x, std::size_t n, std::size_t in, const float* __restrict w,
                          const float* __restrict b, float* __restrict y) {
  for (std::size_t r = 0; r < n; ++r) {
    const float* __restrict xr = x + r * in;
    float acc = b[0];
    for (std::size_t k = 0; k < in; ++k) acc += xr[k] * w[k];
    y[r] = acc;
  }
}

void dense_forward(const float* __restrict x, std::size_t n, std::size_t in, std::size_t out,
                   const float* __restrict w, const float* __restrict b, float* __restrict y) {
  switch (out) {
    case 1: return dense_forward_single(x, n, in, w, b, y);
    case 8: return dense_forward_lanes<1>(x, n, in, w, b, y);
    case 16: return dense_forward_lanes<2>(x, n, in, w, b, y);
    case 32: return dense_forward_lanes<4>(x, n, in, w, b, y);
    case 64: return dense_forward_lanes<8>(x, n, in, w, b, y);
    default: break;
  }
  for (std::size_t r = 0; r < n; ++r) {
    float* __restrict yr = y + r * out;
    const float* __restrict xr = x + r * in;
    for (std::size_t j = 0; j < out; ++j) yr[j] = b[j];
    for (std::size_t k = 0; k < in; ++k) {
      const float xv = xr[k];
      if (xv == 0.0f) continue;
      const float* __restrict wk = w + k * out;
      for (std::size_t j = 0; j < out; ++j) yr[j] += xv * wk[j];
    }
  }
}

// dx[r,k] = sum_j g[r,j] W[k,j]
void dense_backward_input(const float* g, std::size_t n, std::size_t in, std::size_t out, const float* w, float* dx) {
  for (std::size_t r = 0; r < n; ++r) {
    const float* gr = g + r * out;
    float* dxr = dx + r * in;
    for (std::size_t k = 0; k < in; ++k) {
      const float* wk = w + k * out;
      float acc = 0.0f;
      for (std::size_t j = 0; j < out; ++j) acc += gr[j] * wk[j];
      dxr[k] = acc;
    }
  }
}

// dW[k,j] += sum_r x[r,k] g[r,j]
void dense_backward_weight(const float* x, const float* g, std::size_t n, std::size_t in, std::size_t out,
                           float* dw) {
  for (std::size_t r = 0; r < n; ++r) {
    const float* xr = x + r * in;
    const float* gr = g + r * out;
    for (std::size_t k = 0; k < in; ++k) {
      const float xv = xr[k];
      if (xv == 0.0f) continue;
      float* dwk = dw + k * out;
      for (std::size_t j = 0; j < out; ++j) dwk[j] += xv * gr[j];
    }
  }
}

void bias_backward(const float* g, std::size_t n, std::size_t out, float* db) {
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < out; ++j) db[j] += g[r * out + j];
}

struct ConvGeometry {
  std::size_t c, h, w, k, s, pad, oh, ow;
  std::size_t cols() const { return c * k * k; }
  std::size_t positions() const { return oh * ow; }
};

ConvGeometry geometry(const Conv2D& l, const Shape& in, const Shape& out) {
  // `in` is batched [N, C, H, W]; `out` is a single example [O, OH, OW].
  return {l.in_channels, in[2], in[3], l.kernel, l.stride, l.padding, out[1], out[2]};
}

// col[(c*k + i)*k + j, oy*ow + ox] = x[c, oy*s + i - pad, ox*s + j - pad] (0 outside)
void im2col(const float* x, const ConvGeometry& g, float* col) {
  const std::size_t np = g.positions();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t i = 0; i < g.k; ++i) {
      for (std::size_t j = 0; j < g.k; ++j) {
        float* dst = col + ((c * g.k + i) * g.k + j) * np;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.s + i) - static_cast<long>(g.pad);
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.s + j) - static_cast<long>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.h) && ix < static_cast<long>(g.w);
            dst[oy * g.ow + ox] = inside ? x[(c * g.h + iy) * g.w + ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_add(const float* col, const ConvGeometry& g, float* dx) {
  const std::size_t np = g.positions();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t i = 0; i < g.k; ++i) {
      for (std::size_t j = 0; j < g.k; ++j) {
        const float* src = col + ((c * g.k + i) * g.k + j) * np;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.s + i) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.s + j) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            dx[(c * g.h + iy) * g.w + ix] += src[oy * g.ow + ox];
          }
        }
      }
    }
  }
}

void conv_forward(const Conv2D& l, const Tensor& x, Tensor& y) {
  const std::size_t n = x.dim(0);
  const ConvGeometry g = geometry(l, x.shape(), Shape(y.shape().begin() + 1, y.shape().end()));
  const std::size_t nk = g.cols(), np = g.positions();
  std::vector<float> col(nk * np);
  const std::size_t in_size = x.row_size(), out_size = y.row_size();
  for (std::size_t r = 0; r < n; ++r) {
    im2col(x.data() + r * in_size, g, col.data());
    float* yr = y.data() + r * out_size;
    for (std::size_t o = 0; o < l.out_channels; ++o) {
      float* yo = yr + o * np;
      const float bo = l.bias[o];
      for (std::size_t p = 0; p < np; ++p) yo[p] = bo;
      const float* wo = l.weight.data() + o * nk;
      for (std::size_t kk = 0; kk < nk; ++kk) {
        const float wv = wo[kk];
        const float* ck = col.data() + kk * np;
        for (std::size_t p = 0; p < np; ++p) yo[p] += wv * ck[p];
      }
    }
  }
}

void conv_backward(const Conv2D& l, const Tensor& x, const Tensor& gy, Tensor& dx, Tensor* dw, Tensor* db) {
  const std::size_t n = x.dim(0);
  const ConvGeometry g = geometry(l, x.shape(), Shape(gy.shape().begin() + 1, gy.shape().end()));
  const std::size_t nk = g.cols(), np = g.positions();
  std::vector<float> col(nk * np), dcol(nk * np);
  const std::size_t in_size = x.row_size(), out_size = gy.row_size();
  for (std::size_t r = 0; r < n; ++r) {
    const float* gr = gy.data() + r * out_size;
    std::fill(dcol.begin(), dcol.end(), 0.0f);
    for (std::size_t o = 0; o < l.out_channels; ++o) {
      const float* go = gr + o * np;
      const float* wo = l.weight.data() + o * nk;
      for (std::size_t kk = 0; kk < nk; ++kk) {
        const float wv = wo[kk];
        float* dk = dcol.data() + kk * np;
        for (std::size_t p = 0; p < np; ++p) dk[p] += wv * go[p];
      }
    }
    col2im_add(dcol.data(), g, dx.data() + r * in_size);
    if (dw) {
      im2col(x.data() + r * in_size, g, col.data());
      for (std::size_t o = 0; o < l.out_channels; ++o) {
        const float* go = gr + o * np;
        float* dwo = dw->data() + o * nk;
        for (std::size_t kk = 0; kk < nk; ++kk) {
          const float* ck = col.data() + kk * np;
          float acc = 0.0f;
          for (std::size_t p = 0; p < np; ++p) acc += go[p] * ck[p];
          dwo[kk] += acc;
        }
        float acc = 0.0f;
        for (std::size_t p = 0; p < np; ++p) acc += go[p];
        (*db)[o] += acc;
      }
    }
  }
}

float keep_scale(float p) { return 1.0f / (1.0f - p); }

std::vector<float> draw_mask(std::size_t count, float p, Rng& rng) {
  std::vector<float> mask(count);
  const float scale = keep_scale(p);
  for (auto& m : mask) m = (p == 0.0f || !rng.bernoulli(p)) ? scale : 0.0f;
  return mask;
}

std::vector<float> draw_normals(std::size_t count, Rng& rng) {
  std::vector<float> eps(count);
  for (auto& e : eps) e = static_cast<float>(rng.normal());
  return eps;
}

Tensor flipout_weight(const FlipoutDense& l, const Tensor& eps) {
  Tensor w(l.mean.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = l.mean[i] + std::exp(l.log_sigma[i]) * eps[i];
  return w;
}

struct ForwardContext {
  Mode mode;
  Rng* rng;
  const Noise* noise;
};

Tensor layer_forward(const Network& net, std::size_t idx, const Tensor& in, LayerRecord& rec,
                     const ForwardContext& ctx) {
  const std::size_t n = in.dim(0);
  const Layer& layer = net.layer(idx);
  const Shape out_shape = batched(n, net.shape_before(idx + 1));
  const bool noisy = ctx.mode != Mode::Eval;
  const std::vector<float>* shared =
      ctx.noise && idx < ctx.noise->per_layer.size() ? &ctx.noise->per_layer[idx] : nullptr;

  return std::visit(
      Overloaded{
          [&](const Dense& l) {
            Tensor y(out_shape);
            dense_forward(in.data(), n, l.in, l.out, l.weight.data(), l.bias.data(), y.data());
            return y;
          },
          [&](const Conv2D& l) {
            Tensor y(out_shape);
            conv_forward(l, in, y);
            return y;
          },
          [&](const ReLU&) {
            Tensor y = in;
            for (auto& v : y.values()) v = v > 0.0f ? v : 0.0f;
            return y;
          },
          [&](const Flatten&) { return in.reshaped(out_shape); },
          [&](const Dropout& l) {
            if (!noisy) return in;
            const std::size_t feat = in.row_size();
            rec.mask = Tensor(in.shape());
            for (std::size_t r = 0; r < n; ++r) {
              std::vector<float> m;
              if (ctx.mode == Mode::Train) {
                m = draw_mask(feat, l.p, *ctx.rng);
              } else {
                if (!shared || shared->size() != feat) throw InvalidArgument("noise realization does not match network");
                m = *shared;
              }
              std::copy(m.begin(), m.end(), rec.mask.row(r).begin());
            }
            Tensor y = in;
            for (std::size_t i = 0; i < y.size(); ++i) y[i] *= rec.mask[i];
            return y;
          },
          [&](const DropConnectDense& l) {
            const float* w = l.weight.data();
            if (noisy) {
              std::vector<float> m;
              if (ctx.mode == Mode::Train) {
                m = draw_mask(l.weight.size(), l.p, *ctx.rng);
              } else {
                if (!shared || shared->size() != l.weight.size())
                  throw InvalidArgument("noise realization does not match network");
                m = *shared;
              }
              rec.mask = Tensor(l.weight.shape(), std::move(m));
              rec.effective_weight = Tensor(l.weight.shape());
              for (std::size_t i = 0; i < l.weight.size(); ++i) rec.effective_weight[i] = l.weight[i] * rec.mask[i];
              w = rec.effective_weight.data();
            }
            Tensor y(out_shape);
            dense_forward(in.data(), n, l.in, l.out, w, l.bias.data(), y.data());
            return y;
          },
          [&](const FlipoutDense& l) {
            Tensor y(out_shape);
            if (!noisy) {
              dense_forward(in.data(), n, l.in, l.out, l.mean.data(), l.bias.data(), y.data());
              return y;
            }
            if (ctx.mode == Mode::StochasticEval) {
              if (!shared || shared->size() != l.mean.size())
                throw InvalidArgument("noise realization does not match network");
              rec.epsilon = Tensor(l.mean.shape(), *shared);
              rec.effective_weight = flipout_weight(l, rec.epsilon);
              dense_forward(in.data(), n, l.in, l.out, rec.effective_weight.data(), l.bias.data(), y.data());
              return y;
            }
            // Train: out = x mean + ((x * s) delta) * r + b with delta = sigma * eps.
            rec.epsilon = Tensor(l.mean.shape(), draw_normals(l.mean.size(), *ctx.rng));
            rec.sign_in = Tensor({n, l.in});
            rec.sign_out = Tensor({n, l.out});
            for (auto& v : rec.sign_in.values()) v = ctx.rng->sign();
            for (auto& v : rec.sign_out.values()) v = ctx.rng->sign();
            Tensor delta(l.mean.shape());
            for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = std::exp(l.log_sigma[i]) * rec.epsilon[i];
            dense_forward(in.data(), n, l.in, l.out, l.mean.data(), l.bias.data(), y.data());
            Tensor xs = in;
            for (std::size_t i = 0; i < xs.size(); ++i) xs[i] *= rec.sign_in[i];
            std::vector<float> zero(l.out, 0.0f);
            Tensor pert(out_shape);
            dense_forward(xs.data(), n, l.in, l.out, delta.data(), zero.data(), pert.data());
            for (std::size_t i = 0; i < y.size(); ++i) y[i] += pert[i] * rec.sign_out[i];
            return y;
          },
      },
      layer);
}

ForwardResult run_forward(const Network& net, const Tensor& x, const ForwardContext& ctx) {
  const Shape& in_shape = net.input_shape();
  ForwardResult result;
  Tensor act;
  if (x.shape() == in_shape) {
    result.tape.batched = false;
    act = x.reshaped(batched(1, in_shape));
  } else if (x.rank() == in_shape.size() + 1 && Shape(x.shape().begin() + 1, x.shape().end()) == in_shape) {
    act = x;
  } else {
    throw ShapeError("input " + shape_string(x.shape()) + " does not conform to network input " +
                     shape_string(in_shape));
  }
  result.tape.network_stamp = net.stamp();
  result.tape.mode = ctx.mode;
  result.tape.input_shape = x.shape();
  result.tape.records.resize(net.size());
  for (std::size_t i = 0; i < net.size(); ++i) {
    auto& rec = result.tape.records[i];
    Tensor next = layer_forward(net, i, act, rec, ctx);
    if (!next.all_finite()) {
      throw NonFiniteError("non-finite activation after layer " + std::to_string(i) + " (" +
                           std::string(layer_name(net.layer(i))) + ")");
    }
    rec.input = std::move(act);
    act = std::move(next);
  }
  if (!result.tape.batched) act = act.reshaped(net.output_shape());
  result.output = std::move(act);
  return result;
}

}  // namespace

Network::Network(Shape input_shape, std::vector<Layer> layers, Head head, std::uint64_t seed)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)), head_(head), seed_(seed),
      stamp_(next_stamp()) {
  if (layers_.empty()) throw InvalidArgument("network needs at least one layer");
  shapes_.push_back(input_shape_);
  for (const auto& l : layers_) shapes_.push_back(layer_output_shape(l, shapes_.back()));
  Rng rng(seed_);
  for (auto& l : layers_) {
    if (!is_parameterized(l)) continue;
    auto params = parameters(l);
    if (params.front()->empty()) {
      initialize(l, rng);
      continue;
    }
    if (params.front()->shape() != primary_parameter_shape(l)) {
      throw ShapeError(std::string(layer_name(l)) + " weight shape " + shape_string(params.front()->shape()) +
                       " inconsistent with fan-in/fan-out " + shape_string(primary_parameter_shape(l)));
    }
    if (auto* f = std::get_if<FlipoutDense>(&l); f && f->log_sigma.shape() != f->mean.shape()) {
      throw ShapeError("Flipout log-sigma shape differs from mean shape");
    }
    const std::size_t outs = std::get_if<Conv2D>(&l) ? primary_parameter_shape(l)[0] : primary_parameter_shape(l)[1];
    if (params.back()->shape() != Shape{outs}) throw ShapeError(std::string(layer_name(l)) + " bias shape mismatch");
  }
  if (shapes_.back().size() != 1) throw ShapeError("network output must be a feature vector");
}

Network::Network(const Network& other)
    : input_shape_(other.input_shape_), layers_(other.layers_), shapes_(other.shapes_), head_(other.head_),
      seed_(other.seed_), stamp_(next_stamp()) {}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    input_shape_ = other.input_shape_;
    layers_ = other.layers_;
    shapes_ = other.shapes_;
    head_ = other.head_;
    seed_ = other.seed_;
    stamp_ = next_stamp();
  }
  return *this;
}

Layer& Network::mutable_layer(std::size_t i) {
  stamp_ = next_stamp();
  return layers_.at(i);
}

std::vector<std::size_t> Network::parameterized_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (is_parameterized(layers_[i])) out.push_back(i);
  return out;
}

bool Network::has_layer(LayerKind kind) const {
  for (const auto& l : layers_)
    if (layer_kind(l) == kind) return true;
  return false;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_)
    for (const auto* p : parameters(l)) n += p->size();
  return n;
}

std::string Network::architecture_string() const {
  std::ostringstream os;
  os << "input" << shape_string(input_shape_) << ";head=" << (head_ == Head::Regression ? "regression" : "classification");
  for (const auto& l : layers_) os << ";" << layer_signature(l);
  return os.str();
}

std::uint64_t Network::architecture_hash() const { return fnv1a(architecture_string()); }

std::uint64_t Network::parameter_hash() const {
  Fnv1a h;
  h.update(architecture_string());
  for (const auto& l : layers_)
    for (const auto* p : parameters(l)) h.update(p->values());
  return h.digest();
}

bool Network::same_parameters(const Network& other) const {
  if (architecture_string() != other.architecture_string()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto a = parameters(layers_[i]);
    auto b = parameters(other.layers_[i]);
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (std::memcmp(a[k]->data(), b[k]->data(), a[k]->size() * sizeof(float)) != 0) return false;
    }
  }
  return true;
}

NetworkBuilder::NetworkBuilder(Shape input_shape) : input_shape_(input_shape), current_(std::move(input_shape)) {}

std::size_t NetworkBuilder::current_features() const {
  if (current_.size() != 1) throw ShapeError("dense layer needs a flat input; add flatten() first");
  return current_[0];
}

NetworkBuilder& NetworkBuilder::layer(Layer l) {
  current_ = layer_output_shape(l, current_);
  layers_.push_back(std::move(l));
  return *this;
}

NetworkBuilder& NetworkBuilder::dense(std::size_t out) { return layer(Dense{current_features(), out, {}, {}}); }

NetworkBuilder& NetworkBuilder::conv2d(std::size_t out_channels, std::size_t kernel, std::size_t stride,
                                       std::size_t padding) {
  if (current_.size() != 3) throw ShapeError("conv2d needs a [C,H,W] input");
  return layer(Conv2D{current_[0], out_channels, kernel, stride, padding, {}, {}});
}

NetworkBuilder& NetworkBuilder::relu() { return layer(ReLU{}); }
NetworkBuilder& NetworkBuilder::flatten() { return layer(Flatten{}); }
NetworkBuilder& NetworkBuilder::dropout(float p) { return layer(Dropout{p}); }

NetworkBuilder& NetworkBuilder::dropconnect_dense(std::size_t out, float p) {
  return layer(DropConnectDense{current_features(), out, p, {}, {}});
}

NetworkBuilder& NetworkBuilder::flipout_dense(std::size_t out, float prior_mean, float prior_sigma) {
  return layer(FlipoutDense{current_features(), out, prior_mean, prior_sigma, {}, {}, {}});
}

Network NetworkBuilder::build(Head head, std::uint64_t seed) const { return Network(input_shape_, layers_, head, seed); }

Noise draw_noise(const Network& net, Rng& rng) {
  Noise noise;
  noise.per_layer.resize(net.size());
  for (std::size_t i = 0; i < net.size(); ++i) {
    std::visit(Overloaded{
                   [&](const Dropout& l) { noise.per_layer[i] = draw_mask(shape_size(net.shape_before(i)), l.p, rng); },
                   [&](const DropConnectDense& l) { noise.per_layer[i] = draw_mask(l.weight.size(), l.p, rng); },
                   [&](const FlipoutDense& l) { noise.per_layer[i] = draw_normals(l.mean.size(), rng); },
                   [](const auto&) {},
               },
               net.layer(i));
  }
  return noise;
}

ForwardResult forward(const Network& net, const Tensor& x, Mode mode, Rng& rng) {
  if (mode == Mode::StochasticEval) {
    const Noise noise = draw_noise(net, rng);
    return run_forward(net, x, {mode, &rng, &noise});
  }
  return run_forward(net, x, {mode, &rng, nullptr});
}

ForwardResult forward(const Network& net, const Tensor& x, Mode mode) {
  if (mode != Mode::Eval) throw InvalidArgument("train and stochastic-eval forward passes need a random generator");
  return run_forward(net, x, {Mode::Eval, nullptr, nullptr});
}

ForwardResult forward(const Network& net, const Tensor& x, const Noise& noise) {
  return run_forward(net, x, {Mode::StochasticEval, nullptr, &noise});
}

Gradients backward(const Network& net, const Tape& tape, const Tensor& output_grad, ReluRule rule,
                   bool parameter_grads) {
  if (tape.network_stamp != net.stamp() || tape.records.size() != net.size()) {
    throw StaleTapeError("tape was recorded on a different network state");
  }
  const std::size_t n = tape.records.front().input.dim(0);
  const Shape out_shape = batched(n, net.output_shape());
  if (shape_size(output_grad.shape()) != shape_size(out_shape)) {
    throw ShapeError("output gradient " + shape_string(output_grad.shape()) + " does not match output " +
                     shape_string(out_shape));
  }
  Gradients result;
  if (parameter_grads) result.parameters.resize(net.size());
  Tensor g = output_grad.reshaped(out_shape);

  for (std::size_t idx = net.size(); idx-- > 0;) {
    const LayerRecord& rec = tape.records[idx];
    const Tensor& x = rec.input;
    std::vector<Tensor> pgrads;
    g = std::visit(
        Overloaded{
            [&](const Dense& l) {
              Tensor dx(x.shape());
              dense_backward_input(g.data(), n, l.in, l.out, l.weight.data(), dx.data());
              if (parameter_grads) {
                Tensor dw(l.weight.shape()), db(l.bias.shape());
                dense_backward_weight(x.data(), g.data(), n, l.in, l.out, dw.data());
                bias_backward(g.data(), n, l.out, db.data());
                pgrads = {std::move(dw), std::move(db)};
              }
              return dx;
            },
            [&](const Conv2D& l) {
              Tensor dx(x.shape());
              if (parameter_grads) {
                Tensor dw(l.weight.shape()), db(l.bias.shape());
                conv_backward(l, x, g, dx, &dw, &db);
                pgrads = {std::move(dw), std::move(db)};
              } else {
                conv_backward(l, x, g, dx, nullptr, nullptr);
              }
              return dx;
            },
            [&](const ReLU&) {
              Tensor dx(x.shape());
              for (std::size_t i = 0; i < dx.size(); ++i) {
                const bool open = x[i] > 0.0f && (rule == ReluRule::Gradient || g[i] > 0.0f);
                dx[i] = open ? g[i] : 0.0f;
              }
              return dx;
            },
            [&](const Flatten&) { return g.reshaped(x.shape()); },
            [&](const Dropout&) {
              if (rec.mask.empty()) return g;
              Tensor dx = g.reshaped(x.shape());
              for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= rec.mask[i];
              return dx;
            },
            [&](const DropConnectDense& l) {
              const Tensor& w = rec.effective_weight.empty() ? l.weight : rec.effective_weight;
              Tensor dx(x.shape());
              dense_backward_input(g.data(), n, l.in, l.out, w.data(), dx.data());
              if (parameter_grads) {
                Tensor dw(l.weight.shape()), db(l.bias.shape());
                dense_backward_weight(x.data(), g.data(), n, l.in, l.out, dw.data());
                if (!rec.mask.empty())
                  for (std::size_t i = 0; i < dw.size(); ++i) dw[i] *= rec.mask[i];
                bias_backward(g.data(), n, l.out, db.data());
                pgrads = {std::move(dw), std::move(db)};
              }
              return dx;
            },
            [&](const FlipoutDense& l) {
              Tensor dx(x.shape());
              Tensor dmean(l.mean.shape()), dlog(l.log_sigma.shape()), db(l.bias.shape());
              if (rec.sign_in.empty()) {
                const Tensor& w = rec.effective_weight.empty() ? l.mean : rec.effective_weight;
                dense_backward_input(g.data(), n, l.in, l.out, w.data(), dx.data());
                if (parameter_grads) {
                  dense_backward_weight(x.data(), g.data(), n, l.in, l.out, dmean.data());
                  if (!rec.epsilon.empty())
                    for (std::size_t i = 0; i < dlog.size(); ++i)
                      dlog[i] = dmean[i] * rec.epsilon[i] * std::exp(l.log_sigma[i]);
                }
              } else {
                Tensor delta(l.mean.shape());
                for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = std::exp(l.log_sigma[i]) * rec.epsilon[i];
                Tensor gr = g;
                for (std::size_t i = 0; i < gr.size(); ++i) gr[i] *= rec.sign_out[i];
                Tensor dpert(x.shape());
                dense_backward_input(g.data(), n, l.in, l.out, l.mean.data(), dx.data());
                dense_backward_input(gr.data(), n, l.in, l.out, delta.data(), dpert.data());
                for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dpert[i] * rec.sign_in[i];
                if (parameter_grads) {
                  dense_backward_weight(x.data(), g.data(), n, l.in, l.out, dmean.data());
                  Tensor xs = x;
                  for (std::size_t i = 0; i < xs.size(); ++i) xs[i] *= rec.sign_in[i];
                  Tensor ddelta(l.mean.shape());
                  dense_backward_weight(xs.data(), gr.data(), n, l.in, l.out, ddelta.data());
                  for (std::size_t i = 0; i < dlog.size(); ++i) dlog[i] = ddelta[i] * delta[i];
                }
              }
              if (parameter_grads) {
                bias_backward(g.data(), n, l.out, db.data());
                pgrads = {std::move(dmean), std::move(dlog), std::move(db)};
              }
              return dx;
            },
        },
        net.layer(idx));
    if (parameter_grads) result.parameters[idx] = std::move(pgrads);
  }
  result.input = tape.batched ? std::move(g) : g.reshaped(net.input_shape());
  result.input.require_finite("input gradient");
  return result;
}

Tensor backward_to_input(const Network& net, const Tape& tape, std::size_t output_index, ReluRule rule) {
  const std::size_t outputs = net.output_shape()[0];
  if (output_index >= outputs) {
    throw InvalidArgument("output index " + std::to_string(output_index) + " out of range for " +
                          std::to_string(outputs) + " outputs");
  }
  if (tape.records.empty()) throw StaleTapeError("empty tape");
  const std::size_t n = tape.records.front().input.dim(0);
  Tensor seed({n, outputs});
  for (std::size_t r = 0; r < n; ++r) seed[r * outputs + output_index] = 1.0f;
  return backward(net, tape, seed, rule, false).input;
}

Network reinitialize_layer(const Network& net, std::size_t layer_index, Rng& rng) {
  if (layer_index >= net.size()) throw InvalidArgument("layer index out of range");
  if (!is_parameterized(net.layer(layer_index))) {
    throw InvalidArgument("layer " + std::to_string(layer_index) + " (" +
                          std::string(layer_name(net.layer(layer_index))) + ") has no parameters");
  }
  Network copy = net;
  initialize(copy.mutable_layer(layer_index), rng);
  return copy;
}

Tensor softmax_rows(const Tensor& logits) {
  Tensor out = logits;
  const std::size_t n = logits.rank() == 1 ? 1 : logits.dim(0);
  const std::size_t k = logits.size() / n;
  for (std::size_t r = 0; r < n; ++r) {
    float* row = out.data() + r * k;
    float mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(row[j] - mx));
    for (std::size_t j = 0; j < k; ++j) row[j] = static_cast<float>(std::exp(static_cast<double>(row[j] - mx)) / sum);
  }
  return out;
}

}  // namespace uxai
