#pragma once

#include <functional>
#include <span>
#include <vector>

namespace otrw {

struct SolverConfig {
  int max_iterations = 5000;
  double tolerance = 1e-9;   // on |objective change| relative to max(1, |objective|)
  double initial_step = 1.0;
  double backtracking = 0.5;
};

// Throws ConfigError unless every field is positive and backtracking < 1.
void validate(const SolverConfig& cfg);

// Smallest log-weight kept by the multiplicative updates; keeps iterates in
// the interior of the simplex.
inline constexpr double kLogWeightFloor = -700.0;

// Objective and gradient at w; the gradient buffer has the size of w.
using SimplexObjective = std::function<double(std::span<const double> w, std::span<double> grad)>;

struct AscentResult {
  std::vector<double> weights;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Maximizes an objective over the simplex by exponentiated gradient ascent:
// log w <- log w + step * grad, renormalized. Each step is backtracked
// until the objective does not decrease, so accepted iterates are monotone.
// Stops when the accepted change is below tolerance or no step size gives
// an increase. Throws NumericalError on non-finite values at the start or
// when every trial step is non-finite.
AscentResult exponentiated_gradient_ascent(std::vector<double> start, const SimplexObjective& f,
                                           const SolverConfig& cfg);

// Euclidean projection onto the probability simplex.
std::vector<double> project_to_simplex(std::span<const double> v);

double entropy(std::span<const double> w);

}  // namespace otrw
