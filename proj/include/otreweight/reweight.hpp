#pragma once

#include <vector>

#include "otreweight/distributions.hpp"
#include "otreweight/quadrature.hpp"
#include "otreweight/simplex.hpp"
#include "otreweight/transport.hpp"

namespace otrw {

struct DualSolution {
  std::vector<double> weights;
  double lambda = 0.0;
  double objective = 0.0;  // H(w) - lambda * W2^2
  double entropy = 0.0;
  double w2sq = 0.0;
  int iterations = 0;
  bool converged = false;
};

// argmax_w H(w) - lambda * W2^2(sum_i w_i delta_{s_i}, target), started at
// uniform weights.
DualSolution solve_dual(const std::vector<double>& atoms, const ParametricFamily& target,
                        double lambda, const SolverConfig& cfg = {},
                        const QuadratureConfig& quad = {});
DualSolution solve_dual(const SortedAtoms& atoms, const TransportTarget& target, double lambda,
                        const SolverConfig& cfg = {});

struct PrimalSolution {
  std::vector<double> weights;
  double lambda = 0.0;  // multiplier of the returned iterate; 0 when inactive
  double entropy = 0.0;
  double w2sq = 0.0;
  bool constraint_active = false;
  int bisection_steps = 0;
};

inline constexpr double kLambdaMax = 1e8;

// argmax_w H(w) subject to W2^2 <= eps, by bisection on the multiplier of
// the dual problem. Throws InfeasibleError (carrying the smallest W2^2
// reached) when even lambda = kLambdaMax leaves W2^2 above eps.
PrimalSolution solve_primal(const std::vector<double>& atoms, const ParametricFamily& target,
                            double eps, const SolverConfig& cfg = {},
                            const QuadratureConfig& quad = {});

}  // namespace otrw
