#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "otreweight/error.hpp"
#include "otreweight/transport.hpp"

using namespace otrw;

namespace {

std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t m, double floor = 0.0) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> w(m);
  double s = 0.0;
  for (auto& v : w) s += (v = e(rng) + floor);
  for (auto& v : w) v /= s;
  double t = 0.0;
  for (double v : w) t += v;
  w[0] += 1.0 - t;
  return w;
}

}  // namespace

TEST_CASE("point mass against a normal gives the variance") {
  const auto one = WeightedSample::uniform({0.0});
  CHECK(w2sq_discrete_continuous(one, ParametricFamily::normal(0, 1)) == doctest::Approx(1.0).epsilon(1e-9));
  const auto at_m = WeightedSample::uniform({3.5});
  CHECK(w2sq_discrete_continuous(at_m, ParametricFamily::normal(3.5, 0.7)) == doctest::Approx(0.7).epsilon(1e-9));
}

TEST_CASE("large normal sample is close to its law") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z;
  std::vector<double> x(10000);
  for (auto& v : x) v = z(rng);
  CHECK(w2sq_discrete_continuous(WeightedSample::uniform(x), ParametricFamily::normal(0, 1)) < 0.01);
}

TEST_CASE("discrete-continuous against the midpoint oracle") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int c = 0; c < 12; ++c) {
    const std::size_t m = 1 + rng() % 8;
    std::vector<double> atoms(m);
    for (auto& a : atoms) a = 1.5 * z(rng);
    const auto w = random_simplex(rng, m);
    const double shape = c % 2 ? 4.0 * u(rng) : 0.0;
    const oracle::Target t{u(rng), 0.5 + std::abs(u(rng)), shape};
    const auto fam = shape == 0.0 ? ParametricFamily::normal(t.location, t.scale * t.scale)
                                  : ParametricFamily::skew_normal(t.location, t.scale, shape);
    const double got = w2sq_discrete_continuous(WeightedSample(atoms, w), fam);
    const double ref = oracle::w2sq_midpoint(atoms, w, t, 20480);
    CHECK(got == doctest::Approx(ref).epsilon(1e-4));
  }
}

TEST_CASE("discrete-discrete exact cases") {
  const auto a = WeightedSample::uniform({0.0, 1.0});
  const auto b = WeightedSample::uniform({0.0, 2.0});
  CHECK(w2sq_discrete_discrete(a, b) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(w2sq_discrete_discrete(a, a) == 0.0);
  CHECK(w2sq_discrete_discrete(WeightedSample::uniform({0.0}), WeightedSample::uniform({3.0})) == 9.0);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z;
  for (int c = 0; c < 20; ++c) {
    const std::size_t ma = 1 + rng() % 6, mb = 1 + rng() % 6;
    std::vector<double> xa(ma), xb(mb);
    for (auto& v : xa) v = z(rng);
    for (auto& v : xb) v = 2.0 * z(rng) + 1.0;
    const auto wa = random_simplex(rng, ma), wb = random_simplex(rng, mb);
    CHECK(w2sq_discrete_discrete(WeightedSample(xa, wa), WeightedSample(xb, wb)) ==
          doctest::Approx(oracle::w2sq_discrete(xa, wa, xb, wb)).epsilon(1e-12));
  }
}

TEST_CASE("weight gradient matches tangent finite differences") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z;
  for (int c = 0; c < 10; ++c) {
    const std::size_t m = 2 + rng() % 5;
    std::vector<double> atoms(m);
    for (auto& a : atoms) a = z(rng);
    const auto w = random_simplex(rng, m, 0.2);
    const auto fam = c % 2 ? ParametricFamily::skew_normal(0.2, 1.1, -2.0) : ParametricFamily::normal(0, 1);
    const auto g = grad_w2sq_weights(WeightedSample(atoms, w), fam);
    const double h = 1e-6;
    for (std::size_t i = 1; i < m; ++i) {
      auto wp = w, wm = w;
      wp[i] += h;
      wp[0] -= h;
      wm[i] -= h;
      wm[0] += h;
      const double fd = (w2sq_discrete_continuous(WeightedSample(atoms, wp), fam) -
                         w2sq_discrete_continuous(WeightedSample(atoms, wm), fam)) /
                        (2.0 * h);
      CHECK(g[i] - g[0] == doctest::Approx(fd).epsilon(1e-5).scale(1e-3));
    }
  }
}

TEST_CASE("symmetric pair has opposite tangent gradients") {
  const auto g = grad_w2sq_weights(WeightedSample::uniform({-0.7, 0.7}), ParametricFamily::normal(0, 2));
  const double mean = 0.5 * (g[0] + g[1]);
  CHECK(g[0] - mean == doctest::Approx(-(g[1] - mean)).epsilon(1e-9));
  CHECK_THROWS_AS(grad_w2sq_weights(WeightedSample({0.0, 1.0}, {1.0, 0.0}), ParametricFamily::normal(0, 1)),
                  DomainError);
}

TEST_CASE("invariances") {
  const std::vector<double> atoms{-1.2, 0.4, 0.9, 2.0};
  const std::vector<double> w{0.1, 0.4, 0.3, 0.2};
  const auto base = ParametricFamily::normal(0.3, 1.4);
  const double v = w2sq_discrete_continuous(WeightedSample(atoms, w), base);
  CHECK(v > 0.0);

  std::vector<double> shifted = atoms;
  for (auto& a : shifted) a += 5.0;
  CHECK(w2sq_discrete_continuous(WeightedSample(shifted, w), ParametricFamily::normal(5.3, 1.4)) ==
        doctest::Approx(v).epsilon(1e-10));

  const std::vector<double> pa{0.9, -1.2, 2.0, 0.4}, pw{0.3, 0.1, 0.2, 0.4};
  CHECK(w2sq_discrete_continuous(WeightedSample(pa, pw), base) == doctest::Approx(v).epsilon(1e-13));
  const auto g = grad_w2sq_weights(WeightedSample(atoms, w), base);
  const auto pg = grad_w2sq_weights(WeightedSample(pa, pw), base);
  CHECK(pg[0] == doctest::Approx(g[2]).epsilon(1e-12));
  CHECK(pg[1] == doctest::Approx(g[0]).epsilon(1e-12));

  const std::vector<double> split{-1.2, 0.4, 0.4, 0.9, 2.0}, sw{0.1, 0.2, 0.2, 0.3, 0.2};
  CHECK(w2sq_discrete_continuous(WeightedSample(split, sw), base) == doctest::Approx(v).epsilon(1e-12));
}

TEST_CASE("weighted sample validation") {
  CHECK_THROWS_AS(WeightedSample({0.0, 1.0}, {0.6, 0.6}), DomainError);
  CHECK_THROWS_AS(WeightedSample({0.0, 1.0}, {1.2, -0.2}), DomainError);
  CHECK_THROWS_AS(WeightedSample({0.0}, {0.5, 0.5}), DomainError);
  const WeightedSample s({3.0, 1.0, 1.0}, {0.2, 0.3, 0.5});
  CHECK(s.order() == std::vector<std::size_t>{1, 2, 0});
  CHECK(s.cumulative().back() == doctest::Approx(1.0).epsilon(1e-15));
}
