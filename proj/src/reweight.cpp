#include "otreweight/reweight.hpp"

#include <cmath>
#include <sstream>

#include "otreweight/error.hpp"

namespace otrw {

DualSolution solve_dual(const SortedAtoms& atoms, const TransportTarget& target, double lambda,
                        const SolverConfig& cfg) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw DomainError("solve_dual: lambda must be finite and nonnegative");
  const std::size_t m = atoms.size();
  if (m == 0) throw DomainError("solve_dual: no atoms");

  DualSolution out;
  out.lambda = lambda;
  std::vector<double> uniform(m, 1.0 / static_cast<double>(m));
  if (lambda == 0.0 || m == 1) {
    out.weights = uniform;
    out.entropy = entropy(uniform);
    out.w2sq = target.w2sq(atoms, uniform);
    out.objective = out.entropy - lambda * out.w2sq;
    out.converged = true;
    return out;
  }

  std::vector<double> w2_grad(m);
  const SimplexObjective objective = [&](std::span<const double> w, std::span<double> grad) {
    const double w2 = target.w2sq_with_gradient(atoms, w, w2_grad);
    double h = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      h -= w[i] * std::log(w[i]);
      grad[i] = -1.0 - std::log(w[i]) - lambda * w2_grad[i];
    }
    return h - lambda * w2;
  };
  AscentResult run = exponentiated_gradient_ascent(uniform, objective, cfg);
  out.weights = std::move(run.weights);
  out.objective = run.objective;
  out.entropy = entropy(out.weights);
  out.w2sq = target.w2sq(atoms, out.weights);
  out.iterations = run.iterations;
  out.converged = run.converged;
  return out;
}

DualSolution solve_dual(const std::vector<double>& atoms, const ParametricFamily& target,
                        double lambda, const SolverConfig& cfg, const QuadratureConfig& quad) {
  return solve_dual(SortedAtoms(atoms), TransportTarget(target, quad), lambda, cfg);
}

PrimalSolution solve_primal(const std::vector<double>& atoms, const ParametricFamily& target,
                            double eps, const SolverConfig& cfg, const QuadratureConfig& quad) {
  if (!(eps > 0.0)) throw DomainError("solve_primal: eps must be positive");
  const SortedAtoms sorted(atoms);
  const TransportTarget prepared(target, quad);
  const std::size_t m = sorted.size();
  if (m == 0) throw DomainError("solve_primal: no atoms");

  PrimalSolution out;
  std::vector<double> uniform(m, 1.0 / static_cast<double>(m));
  const double w2_uniform = prepared.w2sq(sorted, uniform);
  if (w2_uniform <= eps) {
    out.weights = uniform;
    out.entropy = entropy(uniform);
    out.w2sq = w2_uniform;
    return out;
  }

  const double accuracy = 1e-6 * std::max(eps, 1.0);
  DualSolution best = solve_dual(sorted, prepared, kLambdaMax, cfg);
  if (best.w2sq > eps + accuracy) {
    std::ostringstream msg;
    msg << "solve_primal: eps = " << eps << " is below the smallest W2^2 reached ("
        << best.w2sq << " at lambda = " << kLambdaMax << ")";
    throw InfeasibleError(msg.str(), best.w2sq);
  }

  // W2^2 decreases along the dual path; bisect log(lambda) between a
  // multiplier that is too small and one that is feasible.
  double lo = std::log(1e-8);
  double hi = std::log(kLambdaMax);
  out.constraint_active = true;
  int steps = 0;
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    DualSolution trial = solve_dual(sorted, prepared, std::exp(mid), cfg);
    ++steps;
    if (trial.w2sq <= eps + accuracy) {
      hi = mid;
      if (trial.entropy >= best.entropy) best = trial;
    } else {
      lo = mid;
    }
    if (std::abs(trial.w2sq - eps) <= accuracy) break;
  }
  out.weights = std::move(best.weights);
  out.lambda = best.lambda;
  out.entropy = best.entropy;
  out.w2sq = best.w2sq;
  out.bisection_steps = steps;
  return out;
}

}  // namespace otrw
