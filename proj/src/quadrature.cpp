#include "otreweight/quadrature.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include "otreweight/error.hpp"

namespace otrw {

void validate(const QuadratureConfig& quad) {
  if (quad.nodes < 100) throw ConfigError("quadrature: nodes must be >= 100");
  if (!(quad.tail > 0.0 && quad.tail <= 0.01))
    throw ConfigError("quadrature: tail clip must lie in (0, 0.01]");
}

namespace {

// Boost stores the non-negative half of each symmetric rule.
template <std::size_t N>
GaussRule<N> expand() {
  using G = boost::math::quadrature::gauss<double, N>;
  const auto& x = G::abscissa();
  const auto& w = G::weights();
  GaussRule<N> rule{};
  std::size_t k = 0;
  for (std::size_t i = x.size(); i-- > 0;) {
    if (x[i] == 0.0) continue;
    rule.nodes[k] = -x[i];
    rule.weights[k++] = w[i];
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    rule.nodes[k] = x[i];
    rule.weights[k++] = w[i];
  }
  return rule;
}

}  // namespace

const GaussRule<8>& gauss8() {
  static const GaussRule<8> rule = expand<8>();
  return rule;
}

const GaussRule<32>& gauss32() {
  static const GaussRule<32> rule = expand<32>();
  return rule;
}

}  // namespace otrw
