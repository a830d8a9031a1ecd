#include "oracles.hpp"

#include <cmath>
#include <stdexcept>
#include <variant>

namespace oracle {

using uxai::Tensor;

Tensor naive_conv2d(const uxai::Conv2D& l, const Tensor& x) {
  const std::size_t c_in = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = (h + 2 * l.padding - l.kernel) / l.stride + 1;
  const std::size_t ow = (w + 2 * l.padding - l.kernel) / l.stride + 1;
  Tensor y({l.out_channels, oh, ow});
  for (std::size_t o = 0; o < l.out_channels; ++o)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        float acc = l.bias[o];
        for (std::size_t c = 0; c < c_in; ++c)
          for (std::size_t i = 0; i < l.kernel; ++i)
            for (std::size_t j = 0; j < l.kernel; ++j) {
              const long iy = static_cast<long>(oy * l.stride + i) - static_cast<long>(l.padding);
              const long ix = static_cast<long>(ox * l.stride + j) - static_cast<long>(l.padding);
              float v = 0.0f;
              if (iy >= 0 && ix >= 0 && iy < static_cast<long>(h) && ix < static_cast<long>(w))
                v = x[(c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)];
              acc += l.weight[((o * c_in + c) * l.kernel + i) * l.kernel + j] * v;
            }
        y[(o * oh + oy) * ow + ox] = acc;
      }
  return y;
}

namespace {

std::vector<double> dense_double(const std::vector<double>& x, std::size_t in, std::size_t out,
                                 const std::vector<double>& w, const Tensor& bias) {
  std::vector<double> y(out);
  for (std::size_t j = 0; j < out; ++j) {
    double acc = bias[j];
    for (std::size_t k = 0; k < in; ++k) acc += x[k] * w[k * out + j];
    y[j] = acc;
  }
  return y;
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

std::vector<double> reference_forward(const uxai::Network& net, const std::vector<double>& x,
                                      const uxai::Noise* noise) {
  std::vector<double> a = x;
  for (std::size_t idx = 0; idx < net.size(); ++idx) {
    const uxai::Shape& in_shape = net.shape_before(idx);
    const std::vector<float>* mask = noise ? &noise->per_layer.at(idx) : nullptr;
    a = std::visit(
        Overloaded{
            [&](const uxai::Dense& l) {
              return dense_double(a, l.in, l.out, to_double(l.weight), l.bias);
            },
            [&](const uxai::DropConnectDense& l) {
              auto w = to_double(l.weight);
              if (mask)
                for (std::size_t i = 0; i < w.size(); ++i) w[i] *= (*mask)[i];
              return dense_double(a, l.in, l.out, w, l.bias);
            },
            [&](const uxai::FlipoutDense& l) {
              auto w = to_double(l.mean);
              if (mask)
                for (std::size_t i = 0; i < w.size(); ++i)
                  w[i] += std::exp(static_cast<double>(l.log_sigma[i])) * (*mask)[i];
              return dense_double(a, l.in, l.out, w, l.bias);
            },
            [&](const uxai::Conv2D& l) {
              const std::size_t c_in = in_shape[0], h = in_shape[1], w = in_shape[2];
              const std::size_t oh = (h + 2 * l.padding - l.kernel) / l.stride + 1;
              const std::size_t ow = (w + 2 * l.padding - l.kernel) / l.stride + 1;
              std::vector<double> y(l.out_channels * oh * ow);
              for (std::size_t o = 0; o < l.out_channels; ++o)
                for (std::size_t oy = 0; oy < oh; ++oy)
                  for (std::size_t ox = 0; ox < ow; ++ox) {
                    double acc = l.bias[o];
                    for (std::size_t c = 0; c < c_in; ++c)
                      for (std::size_t i = 0; i < l.kernel; ++i)
                        for (std::size_t j = 0; j < l.kernel; ++j) {
                          const long iy = static_cast<long>(oy * l.stride + i) - static_cast<long>(l.padding);
                          const long ix = static_cast<long>(ox * l.stride + j) - static_cast<long>(l.padding);
                          if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
                          acc += static_cast<double>(l.weight[((o * c_in + c) * l.kernel + i) * l.kernel + j]) *
                                 a[(c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)];
                        }
                    y[(o * oh + oy) * ow + ox] = acc;
                  }
              return y;
            },
            [&](const uxai::ReLU&) {
              auto y = a;
              for (auto& v : y) v = v > 0.0 ? v : 0.0;
              return y;
            },
            [&](const uxai::Flatten&) { return a; },
            [&](const uxai::Dropout&) {
              auto y = a;
              if (mask)
                for (std::size_t i = 0; i < y.size(); ++i) y[i] *= (*mask)[i];
              return y;
            },
        },
        net.layer(idx));
  }
  return a;
}

std::vector<double> finite_difference_gradient(const uxai::Network& net, const std::vector<double>& x,
                                               std::size_t output_index, double h, const uxai::Noise* noise) {
  std::vector<double> grad(x.size());
  std::vector<double> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = reference_forward(net, probe, noise).at(output_index);
    probe[i] = x[i] - h;
    const double down = reference_forward(net, probe, noise).at(output_index);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double naive_ssim(const Tensor& a, const Tensor& b, const uxai::SsimParams& p) {
  const std::size_t h = a.dim(0), w = a.dim(1), k = p.window;
  double lo = a[0], hi = a[0];
  for (std::size_t i = 0; i < a.size(); ++i) {
    lo = std::min({lo, static_cast<double>(a[i]), static_cast<double>(b[i])});
    hi = std::max({hi, static_cast<double>(a[i]), static_cast<double>(b[i])});
  }
  auto norm = [&](float v) { return hi > lo ? (v - lo) / (hi - lo) : 0.0; };
  std::vector<double> g(k * k);
  double gsum = 0.0;
  const double c = (static_cast<double>(k) - 1.0) / 2.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double di = static_cast<double>(i) - c, dj = static_cast<double>(j) - c;
      g[i * k + j] = std::exp(-(di * di + dj * dj) / (2.0 * p.sigma * p.sigma));
      gsum += g[i * k + j];
    }
  for (auto& v : g) v /= gsum;
  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);

  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t y = 0; y + k <= h; ++y)
    for (std::size_t x = 0; x + k <= w; ++x) {
      double ma = 0, mb = 0;
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          ma += g[i * k + j] * norm(a[(y + i) * w + x + j]);
          mb += g[i * k + j] * norm(b[(y + i) * w + x + j]);
        }
      double va = 0, vb = 0, cov = 0;
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          const double da = norm(a[(y + i) * w + x + j]) - ma;
          const double db = norm(b[(y + i) * w + x + j]) - mb;
          va += g[i * k + j] * da * da;
          vb += g[i * k + j] * db * db;
          cov += g[i * k + j] * da * db;
        }
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / static_cast<double>(count);
}

std::vector<float> guided_backprop_loop(const uxai::Network& net, const std::vector<float>& x, std::size_t target) {
  // Forward, keeping each layer's input.
  std::vector<std::vector<float>> inputs;
  std::vector<float> a = x;
  for (std::size_t idx = 0; idx < net.size(); ++idx) {
    inputs.push_back(a);
    if (const auto* d = std::get_if<uxai::Dense>(&net.layer(idx))) {
      std::vector<float> y(d->out);
      for (std::size_t j = 0; j < d->out; ++j) {
        float acc = d->bias[j];
        for (std::size_t k = 0; k < d->in; ++k) acc += a[k] * d->weight[k * d->out + j];
        y[j] = acc;
      }
      a = std::move(y);
    } else if (std::holds_alternative<uxai::ReLU>(net.layer(idx))) {
      for (auto& v : a) v = v > 0.0f ? v : 0.0f;
    } else {
      throw std::invalid_argument("guided_backprop_loop handles Dense and ReLU only");
    }
  }
  std::vector<float> r(a.size(), 0.0f);
  r.at(target) = 1.0f;
  for (std::size_t idx = net.size(); idx-- > 0;) {
    const auto& f = inputs[idx];
    if (const auto* d = std::get_if<uxai::Dense>(&net.layer(idx))) {
      std::vector<float> below(d->in);
      for (std::size_t k = 0; k < d->in; ++k) {
        float acc = 0.0f;
        for (std::size_t j = 0; j < d->out; ++j) acc += r[j] * d->weight[k * d->out + j];
        below[k] = acc;
      }
      r = std::move(below);
    } else {
      for (std::size_t i = 0; i < r.size(); ++i) {
        const bool forward_open = f[i] > 0.0f;
        const bool backward_open = r[i] > 0.0f;
        r[i] = forward_open && backward_open ? r[i] : 0.0f;
      }
    }
  }
  return r;
}

uxai::Network random_mlp(uxai::Rng& rng, std::uint64_t seed, bool with_dropout) {
  const std::size_t in = 2 + rng.index(7);
  uxai::NetworkBuilder b({in});
  const std::size_t hidden = 1 + rng.index(3);
  for (std::size_t l = 0; l < hidden; ++l) {
    b.dense(3 + rng.index(10)).relu();
    if (with_dropout && l + 1 == hidden) b.dropout(0.5f);
  }
  b.dense(1 + rng.index(3));
  return b.build(uxai::Head::Regression, seed);
}

uxai::Network random_convnet(uxai::Rng& rng, std::uint64_t seed, bool with_dropout) {
  const std::size_t c = 1 + rng.index(3), side = 6 + rng.index(5);
  uxai::NetworkBuilder b({c, side, side});
  b.conv2d(2 + rng.index(4), 3, 1 + rng.index(2), rng.index(2)).relu();
  if (rng.bernoulli(0.5)) b.conv2d(2 + rng.index(3), 3, 1, 1).relu();
  b.flatten();
  b.dense(4 + rng.index(8)).relu();
  if (with_dropout) b.dropout(0.3f);
  b.dense(2 + rng.index(3));
  return b.build(uxai::Head::Classification, seed);
}

Tensor random_tensor(uxai::Rng& rng, uxai::Shape shape, double lo, double hi) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

std::vector<double> to_double(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("uxai-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
