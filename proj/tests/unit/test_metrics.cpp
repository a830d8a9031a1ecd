#include <doctest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "uxai/error.hpp"
#include "uxai/metrics.hpp"

using namespace uxai;

TEST_SUITE("metrics") {

TEST_CASE("gaussian window sums to one") {
  for (std::size_t k : {3u, 7u, 11u}) {
    const auto w = gaussian_window(k, 1.5);
    CHECK(std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0) < 1e-9);
  }
}

TEST_CASE("ssim of a map with itself is exactly one") {
  Rng rng(1);
  for (int c = 0; c < 10; ++c) {
    const Tensor a = oracle::random_tensor(rng, {32, 32});
    CHECK(ssim(a, a) == 1.0);
  }
  CHECK(ssim(Tensor({5, 5}, 3.0f), Tensor({5, 5}, 3.0f)) == 1.0);
}

TEST_CASE("ssim is symmetric") {
  Rng rng(2);
  const Tensor a = oracle::random_tensor(rng, {20, 24}), b = oracle::random_tensor(rng, {20, 24});
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
}

TEST_CASE("ssim matches the naive per-pixel loop") {
  Rng rng(3);
  for (int c = 0; c < 10; ++c) {
    const Tensor a = oracle::random_tensor(rng, {32, 32});
    Tensor b = a;
    for (auto& v : b.values()) v += static_cast<float>(rng.normal(0.0, 0.3));
    CHECK(std::abs(ssim(a, b) - oracle::naive_ssim(a, b)) < 1e-6);
    const Tensor d = oracle::random_tensor(rng, {32, 32});
    CHECK(std::abs(ssim(a, d) - oracle::naive_ssim(a, d)) < 1e-6);
  }
}

TEST_CASE("ssim is bounded and equals one only for identical maps") {
  Rng rng(4);
  for (int c = 0; c < 20; ++c) {
    const Tensor a = oracle::random_tensor(rng, {16, 16});
    Tensor b = oracle::random_tensor(rng, {16, 16});
    if (c % 2) {
      for (auto& v : b.values()) v = -v;
    }
    const double s = ssim(a, b);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
    CHECK(s < 1.0);
  }
}

TEST_CASE("ssim is invariant to a shared affine rescaling") {
  Rng rng(5);
  for (int c = 0; c < 10; ++c) {
    const Tensor a = oracle::random_tensor(rng, {20, 20}), b = oracle::random_tensor(rng, {20, 20});
    const float scale = static_cast<float>(rng.uniform(0.1, 10.0)), shift = static_cast<float>(rng.uniform(-5, 5));
    Tensor a2 = a, b2 = b;
    for (auto& v : a2.values()) v = scale * v + shift;
    for (auto& v : b2.values()) v = scale * v + shift;
    CHECK(ssim(a2, b2) == doctest::Approx(ssim(a, b)).epsilon(1e-4));
  }
}

TEST_CASE("small maps use one uniform window") {
  const Tensor a({1, 8}, std::vector<float>{0, 1, 2, 3, 4, 5, 6, 7});
  const auto r = ssim_detailed(a, a);
  CHECK(r.uniform_window);
  CHECK(r.value == 1.0);
  CHECK_THROWS_AS(ssim(Tensor({4, 4}), Tensor({4, 5})), ShapeError);
  CHECK_THROWS_AS(ssim(Tensor({16}), Tensor({16})), ShapeError);
}

TEST_CASE("spearman basic cases") {
  const std::vector<double> xs{1, 2, 3, 4, 5, 6};
  const std::vector<double> up{0.1, 0.5, 0.7, 2.0, 3.0, 9.0};
  const std::vector<double> down{9, 3, 2, 0.7, 0.5, 0.1};
  CHECK(spearman(xs, up).value == doctest::Approx(1.0));
  CHECK(spearman(xs, down).value == doctest::Approx(-1.0));
}

TEST_CASE("spearman with ties matches hand ranks") {
  const std::vector<double> xs{1, 2, 3, 4, 5, 6};
  const std::vector<double> ys{1, 2, 2, 3, 3, 4};
  // Ranks of ys: 1, 2.5, 2.5, 4.5, 4.5, 6. Pearson on ranks by hand:
  // sum dx dy = 16.5, sum dx^2 = 17.5, sum dy^2 = 16.5.
  const double want = 16.5 / std::sqrt(17.5 * 16.5);
  CHECK(spearman(xs, ys).value == doctest::Approx(want).epsilon(1e-12));
  const auto ranks = average_ranks(ys);
  CHECK(ranks == std::vector<double>{1, 2.5, 2.5, 4.5, 4.5, 6});
}

TEST_CASE("spearman of a flat sequence is undefined") {
  const std::vector<double> xs{1, 2, 3, 4};
  const std::vector<double> flat{2, 2, 2, 2};
  const auto r = spearman(xs, flat);
  CHECK(r.undefined);
  CHECK(r.value == 0.0);
}

TEST_CASE("vector similarity cases") {
  const std::vector<float> a{1, 2, 3}, neg{-1, -2, -3}, e1{1, 0, 0}, e2{0, 1, 0}, zero{0, 0, 0};
  CHECK(vector_similarity(a, a).value == doctest::Approx(1.0));
  CHECK(vector_similarity(a, neg).value == doctest::Approx(-1.0));
  CHECK(vector_similarity(e1, e2).value == 0.0);
  CHECK(vector_similarity(a, zero).undefined);
}

}  // TEST_SUITE
