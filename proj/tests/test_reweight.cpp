#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "otreweight/error.hpp"
#include "otreweight/reweight.hpp"
#include "otreweight/simplex.hpp"

using namespace otrw;

namespace {

struct GridBest {
  double value = -1e300;
  std::vector<double> w;
};

// Brute force over the 2-simplex at step 1e-3 with the library's W2^2
// evaluator; the transport tests cover that evaluator separately.
GridBest grid_dual(const std::vector<double>& atoms, const ParametricFamily& f, double lambda) {
  const TransportTarget t(f);
  const SortedAtoms s(atoms);
  GridBest best;
  oracle::for_each_simplex3(1e-3, [&](const std::vector<double>& w) {
    const double v = oracle::entropy(w) - lambda * t.w2sq(s, w);
    if (v > best.value) best = {v, w};
  });
  return best;
}

GridBest grid_primal(const std::vector<double>& atoms, const ParametricFamily& f, double eps) {
  const TransportTarget t(f);
  const SortedAtoms s(atoms);
  GridBest best;
  oracle::for_each_simplex3(1e-3, [&](const std::vector<double>& w) {
    if (t.w2sq(s, w) > eps) return;
    const double h = oracle::entropy(w);
    if (h > best.value) best = {h, w};
  });
  return best;
}

}  // namespace

TEST_CASE("entropy values") {
  CHECK(entropy(std::vector<double>{0.25, 0.25, 0.25, 0.25}) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  CHECK(entropy(std::vector<double>{1.0, 0.0, 0.0}) == 0.0);
  CHECK(entropy(std::vector<double>{0.25, 0.75}) == doctest::Approx(0.5623351446188083).epsilon(1e-14));
}

TEST_CASE("dual at lambda zero is uniform") {
  const auto d = solve_dual({-1.0, 0.3, 2.0, 5.0}, ParametricFamily::normal(0, 1), 0.0);
  for (double w : d.weights) CHECK(w == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("dual matches the simplex grid on the worked instance") {
  const std::vector<double> atoms{-1.0, 0.0, 1.0};
  const auto f = ParametricFamily::normal(0, 1);
  const auto d = solve_dual(atoms, f, 10.0);
  const auto g = grid_dual(atoms, f, 10.0);
  CHECK(std::abs(d.objective - g.value) <= 1e-4);
  CHECK(d.objective >= g.value - 1e-12);
  for (double w : d.weights) CHECK(w > 0.0);
}

TEST_CASE("dual and primal against simplex grids on random instances") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> z;
  for (int c = 0; c < 4; ++c) {
    std::vector<double> atoms(3);
    for (auto& a : atoms) a = 1.3 * z(rng);
    const auto f = c % 2 ? ParametricFamily::skew_normal(0.2, 0.8, 3.0) : ParametricFamily::normal(0.1, 0.5);
    const double lambda = 0.5 + 10.0 * std::abs(z(rng));
    const auto d = solve_dual(atoms, f, lambda);
    CHECK(std::abs(d.objective - grid_dual(atoms, f, lambda).value) <= 1e-3);

    const TransportTarget t(f);
    const double uniform = t.w2sq(SortedAtoms(atoms), std::vector<double>(3, 1.0 / 3.0));
    const double eps = 0.5 * (uniform + solve_dual(atoms, f, 1e6).w2sq);
    const auto p = solve_primal(atoms, f, eps);
    CHECK(p.w2sq <= eps * (1.0 + 1e-6));
    CHECK(std::abs(p.entropy - grid_primal(atoms, f, eps).value) <= 1e-3);
  }
}

TEST_CASE("primal on the worked instance") {
  const std::vector<double> atoms{-1.0, 0.0, 1.0};
  const auto f = ParametricFamily::normal(0, 0.25);
  const TransportTarget t(f);
  const double uniform = t.w2sq(SortedAtoms(atoms), std::vector<double>(3, 1.0 / 3.0));
  double minimal = 1e300;
  oracle::for_each_simplex3(1e-3, [&](const std::vector<double>& w) {
    minimal = std::min(minimal, t.w2sq(SortedAtoms(atoms), w));
  });
  const double eps = 0.5 * (uniform + minimal);
  const auto p = solve_primal(atoms, f, eps);
  CHECK(p.constraint_active);
  CHECK(std::abs(p.w2sq - eps) <= 1e-6 * std::max(eps, 1.0));
  CHECK(std::abs(p.entropy - grid_primal(atoms, f, eps).value) <= 1e-3);
  // Duality: the dual at the returned multiplier meets the constraint.
  CHECK(solve_dual(atoms, f, p.lambda).w2sq <= eps + 1e-6);
}

TEST_CASE("primal edge cases") {
  const auto f = ParametricFamily::normal(0, 1);
  const auto loose = solve_primal({-1.0, 0.5, 3.0}, f, 1e6);
  CHECK_FALSE(loose.constraint_active);
  for (double w : loose.weights) CHECK(w == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK_THROWS_AS(solve_primal({10.0, 11.0}, f, 1e-12), InfeasibleError);
  try {
    solve_primal({10.0, 11.0}, f, 1e-12);
  } catch (const InfeasibleError& e) {
    CHECK(e.best_attained() > 90.0);
  }
}

TEST_CASE("penalized path is monotone in lambda") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  std::vector<double> atoms(12);
  for (auto& a : atoms) a = 2.0 * z(rng) + 0.5;
  const auto f = ParametricFamily::normal(0, 1);
  double prev_w2 = 1e300, prev_h = 1e300;
  for (double lambda : {0.0, 0.1, 0.5, 1.0, 3.0, 10.0, 50.0}) {
    const auto d = solve_dual(atoms, f, lambda);
    CHECK(d.w2sq <= prev_w2 + 1e-9);
    CHECK(d.entropy <= prev_h + 1e-9);
    prev_w2 = d.w2sq;
    prev_h = d.entropy;
  }
}

TEST_CASE("affine map of atoms and target reparameterizes lambda") {
  const std::vector<double> atoms{-0.8, 0.1, 0.4, 1.9};
  const double a = 2.5, b = -1.0;
  std::vector<double> mapped;
  for (double s : atoms) mapped.push_back(a * s + b);
  const auto d1 = solve_dual(atoms, ParametricFamily::normal(0.2, 0.6), 4.0);
  const auto d2 = solve_dual(mapped, ParametricFamily::normal(a * 0.2 + b, a * a * 0.6), 4.0 / (a * a));
  for (std::size_t i = 0; i < atoms.size(); ++i) CHECK(d1.weights[i] == doctest::Approx(d2.weights[i]).epsilon(1e-5));
}

TEST_CASE("exponentiated gradient reaches the Gibbs distribution") {
  // max <c, w> + H(w) has the closed form w_i proportional to exp(c_i).
  const std::vector<double> c{0.3, -1.0, 2.0, 0.0};
  SimplexObjective f = [&](std::span<const double> w, std::span<double> g) {
    double v = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      v += c[i] * w[i] - w[i] * std::log(w[i]);
      g[i] = c[i] - 1.0 - std::log(w[i]);
    }
    return v;
  };
  const auto r = exponentiated_gradient_ascent(std::vector<double>(4, 0.25), f, SolverConfig{5000, 1e-14, 1.0, 0.5});
  double z = 0.0;
  for (double v : c) z += std::exp(v);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(r.weights[i] == doctest::Approx(std::exp(c[i]) / z).epsilon(1e-6));
}

TEST_CASE("simplex projection") {
  const auto p = project_to_simplex(std::vector<double>{0.5, 0.5, 0.5});
  for (double v : p) CHECK(v == doctest::Approx(1.0 / 3.0));
  const auto q = project_to_simplex(std::vector<double>{2.0, 0.0, -1.0});
  CHECK(q[0] == doctest::Approx(1.0));
  CHECK(q[1] == 0.0);
  CHECK(q[2] == 0.0);
  const auto r = project_to_simplex(std::vector<double>{0.6, 0.6});
  CHECK(r[0] == doctest::Approx(0.5));
  CHECK_THROWS_AS(validate(SolverConfig{10, 1e-9, 1.0, 1.5}), ConfigError);
}
