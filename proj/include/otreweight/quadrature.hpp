#pragma once

#include <array>
#include <cstddef>

namespace otrw {

struct QuadratureConfig {
  int nodes = 2048;     // interior nodes; used in panels of 8
  double tail = 1e-6;   // clip level delta_q; [0, tail] and [1 - tail, 1] are tails
};

// Throws ConfigError unless nodes >= 100 and 0 < tail <= 0.01.
void validate(const QuadratureConfig& quad);

// Gauss-Legendre rules on [-1, 1].
template <std::size_t N>
struct GaussRule {
  std::array<double, N> nodes;
  std::array<double, N> weights;
};
const GaussRule<8>& gauss8();
const GaussRule<32>& gauss32();

// Visits the nodes of a Gauss-Legendre rule on [a, b]: fn(t, weight).
template <std::size_t N, class F>
void for_each_node(const GaussRule<N>& rule, double a, double b, F&& fn) {
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  for (std::size_t i = 0; i < N; ++i) fn(mid + half * rule.nodes[i], half * rule.weights[i]);
}

// Nodes for integrals over (-inf, x] (lower) or [x, inf) (upper). The half
// line is mapped onto (0, 1] by t = x -/+ h (1 - u) / u, where h is the decay
// length of the integrand near x, and the 32-node rule is applied in u.
template <class F>
void for_each_lower_tail_node(double x, double h, F&& fn) {
  for_each_node(gauss32(), 0.0, 1.0, [&](double u, double wt) {
    fn(x - h * (1.0 - u) / u, wt * h / (u * u));
  });
}

template <class F>
void for_each_upper_tail_node(double x, double h, F&& fn) {
  for_each_node(gauss32(), 0.0, 1.0, [&](double u, double wt) {
    fn(x + h * (1.0 - u) / u, wt * h / (u * u));
  });
}

}  // namespace otrw
