#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "otreweight/distributions.hpp"
#include "otreweight/quadrature.hpp"

namespace otrw {

// Atoms together with their stable sorting permutation. Solvers that keep
// the atoms fixed and vary the weights sort once through this type.
class SortedAtoms {
 public:
  explicit SortedAtoms(std::vector<double> atoms);

  std::size_t size() const { return atoms_.size(); }
  const std::vector<double>& atoms() const { return atoms_; }
  // order()[k] is the original index of the k-th smallest atom.
  const std::vector<std::size_t>& order() const { return order_; }
  double sorted(std::size_t k) const { return atoms_[order_[k]]; }

 private:
  std::vector<double> atoms_;
  std::vector<std::size_t> order_;
};

// Cumulative weights in sorted order. lower[k] = c_k and upper[k] = 1 - c_k
// are both accumulated directly (from the left and from the right), so
// levels next to one keep their precision.
struct CumulativeLevels {
  std::vector<double> lower;
  std::vector<double> upper;
};
CumulativeLevels cumulative_levels(const SortedAtoms& atoms, std::span<const double> weights);

// Sum_i w_i delta_{s_i} with weights on the simplex.
class WeightedSample {
 public:
  // Throws DomainError when weights are negative, non-finite, of the wrong
  // length, or do not sum to one within 1e-12.
  WeightedSample(std::vector<double> atoms, std::vector<double> weights);
  static WeightedSample uniform(std::vector<double> atoms);

  std::size_t size() const { return sorted_.size(); }
  const std::vector<double>& atoms() const { return sorted_.atoms(); }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<std::size_t>& order() const { return sorted_.order(); }
  const SortedAtoms& sorted_atoms() const { return sorted_; }
  // c_0 = 0, ..., c_m = 1 in sorted order.
  const std::vector<double>& cumulative() const { return levels_.lower; }
  const CumulativeLevels& levels() const { return levels_; }

 private:
  SortedAtoms sorted_;
  std::vector<double> weights_;
  CumulativeLevels levels_;
};

// A continuous target prepared for repeated W2^2 evaluations. The partial
// quantile moments of the standardized family are tabulated once per
// (shape, quadrature) and shared between all targets with that shape.
class TransportTarget {
 public:
  explicit TransportTarget(const ParametricFamily& family, const QuadratureConfig& quad = {});
  ~TransportTarget();
  TransportTarget(const TransportTarget&);
  TransportTarget& operator=(const TransportTarget&);

  const ParametricFamily& family() const { return family_; }

  // W2^2 between sum_i w_i delta_{atoms_i} and the target. Zero weights
  // are allowed.
  double w2sq(const SortedAtoms& atoms, std::span<const double> weights) const;

  // Same value; also writes dW2^2/dw_j (original order) into grad. Every
  // weight must be positive.
  double w2sq_with_gradient(const SortedAtoms& atoms, std::span<const double> weights,
                            std::span<double> grad) const;

  // Same value; also Q(c_k) and the target density there for the interior
  // breakpoints k = 1..m-1 of the sorted sample.
  double w2sq_with_levels(const SortedAtoms& atoms, std::span<const double> weights,
                          std::vector<double>& quantiles, std::vector<double>& densities) const;

  // Integrals of Q and Q^2 over [k/n, (k+1)/n], k = 0..n-1, where Q is the
  // target quantile function.
  struct Segments {
    std::vector<double> first;
    std::vector<double> second;
  };
  Segments uniform_segments(std::size_t n) const;

  struct Table;

 private:
  ParametricFamily family_;
  std::shared_ptr<const Table> table_;
};

double w2sq_discrete_continuous(const WeightedSample& sample, const ParametricFamily& target,
                                const QuadratureConfig& quad = {});

// Throws DomainError when some weight is zero.
std::vector<double> grad_w2sq_weights(const WeightedSample& sample,
                                      const ParametricFamily& target,
                                      const QuadratureConfig& quad = {});

// Exact: both quantile functions are piecewise constant between the merged
// cumulative-weight breakpoints.
double w2sq_discrete_discrete(const WeightedSample& a, const WeightedSample& b);

// Gradient of W2^2(a, b) with respect to b's weights and b's atom
// locations (original order). At levels where a's quantile jumps the two
// one-sided derivatives are averaged.
struct DiscreteGradient {
  double value;
  std::vector<double> weights;
  std::vector<double> atoms;
};
DiscreteGradient w2sq_discrete_discrete_gradient(const WeightedSample& a,
                                                 const WeightedSample& b);

}  // namespace otrw
