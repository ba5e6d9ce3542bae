#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "otreweight/distributions.hpp"
#include "otreweight/quadrature.hpp"
#include "otreweight/transport.hpp"

namespace otrw {

// Observations (one row each) and survey weights rescaled to sum to n.
struct SurveySample {
  Eigen::MatrixXd x;
  Eigen::VectorXd pi;
};

// Rescales positive weights to sum to the number of rows. Throws
// DomainError on non-positive or non-finite weights or a size mismatch.
SurveySample make_survey_sample(Eigen::MatrixXd x, const Eigen::VectorXd& raw_weights);

// g(x_i, theta) for every row at once: an n x r matrix.
struct EstimatingFunction {
  std::string tag;
  int dimension = 0;   // r
  int parameters = 0;  // p
  std::function<Eigen::MatrixXd(const Eigen::MatrixXd& x, const Eigen::VectorXd& theta)> evaluate;
};

// g(x, theta) = x_1 - theta_0. theta = (mu, sigma^2); sigma^2 does not
// enter g and is constrained only through the transport term.
EstimatingFunction mean_deviation();

// Logistic-regression score: rows are (y, z_1..z_k), theta = beta with an
// intercept first, g = (y - expit(beta' (1, z))) (1, z).
EstimatingFunction logistic_score(int covariates);

struct PmleFit {
  Eigen::VectorXd theta;
  Eigen::MatrixXd h;           // H_pi
  Eigen::MatrixXd v;           // V_pi
  Eigen::MatrixXd covariance;  // H^-1 V H^-1 / n, or inverse information for the MLE
  Eigen::VectorXd ci_lower;
  Eigen::VectorXd ci_upper;
};

inline constexpr double kNormalQuantile975 = 1.959963984540054;

// Normal(mu, sigma^2) pseudo likelihood on the first column. Closed-form
// stationary point; sandwich covariance. Throws FitError when H_pi is
// singular.
PmleFit pmle_normal(const SurveySample& sample);

// Weighted logistic regression by Newton's method with sandwich covariance.
PmleFit pmle_logistic(const SurveySample& sample);

// Unweighted Normal MLE with observed-information covariance.
PmleFit mle_normal(const Eigen::VectorXd& x);

struct EtelResult {
  std::vector<double> weights;
  Eigen::VectorXd lambda;
  double loglik = -std::numeric_limits<double>::infinity();
  bool hull_ok = false;
  int iterations = 0;
};

// Exponentially tilted empirical likelihood for the moment matrix g (n x r)
// with per-observation tilt multipliers pi:
// w_i proportional to exp(pi_i lambda' g_i), lambda minimizing
// n^-1 sum_i exp(pi_i eta' g_i). loglik = sum_i log w_i, or -inf when the
// origin is outside the convex hull of the g_i.
EtelResult etel(const Eigen::MatrixXd& g, const Eigen::VectorXd& pi);

// Evaluates g at theta first; throws DomainError on non-finite values.
EtelResult etel(const Eigen::VectorXd& theta, const Eigen::MatrixXd& x, const Eigen::VectorXd& pi,
                const EstimatingFunction& g);

// M pseudo-samples of size n, as row indices into the sample, from the
// weighted finite population Bayesian bootstrap with pseudo-population
// size N. Throws DomainError when N < n or M < 1.
std::vector<std::vector<std::size_t>> wfpbb_resample(const Eigen::VectorXd& pi, std::size_t population,
                                                     int replicates, std::uint64_t seed);

struct BdcmLoglik {
  double loglik = -std::numeric_limits<double>::infinity();
  std::vector<double> weights;  // in the order of the supplied atoms
  double w2sq = std::numeric_limits<double>::infinity();
  double multiplier = 0.0;      // multiplier of the transport constraint; 0 when inactive
  bool constraint_active = false;
};

// max H(w) subject to sum_i w_i g_i = 0 and W2^2(sum_i w_i delta_{s_i}, target) <= eps.
// atoms are the univariate values entering the transport term, g the n x r
// moment matrix at theta. eps = +inf drops the transport constraint.
BdcmLoglik bdcm_loglik(const std::vector<double>& atoms, const Eigen::MatrixXd& g,
                       const TransportTarget& target, double eps);

struct BdcmConfig {
  int replicates = 50;                 // M
  std::size_t population = 100000;     // N of the pseudo-populations
  double tie_break = 1e-3;             // weight of W2^2 subtracted from the loglik in the theta search
  double simplex_tolerance = 1e-6;     // Nelder-Mead size tolerance
  int max_evaluations = 2000;
  QuadratureConfig quad;
};

struct BdcmFit {
  Eigen::VectorXd theta;
  Eigen::MatrixXd covariance;
  Eigen::VectorXd ci_lower;
  Eigen::VectorXd ci_upper;
  std::vector<Eigen::VectorXd> replicate_estimates;
  int failures = 0;
};

// theta = (mu, sigma^2) with target Normal(mu, sigma^2) on the first
// column. Pseudo-samples come from wfpbb_resample; each is fitted by
// Nelder-Mead from the PMLE. Throws FitError when more than half fail.
BdcmFit bdcm_fit(const SurveySample& sample, const EstimatingFunction& g, const BdcmConfig& cfg,
                 std::uint64_t seed, int jobs = 1);

// Fits one pseudo-sample (column of values) given the PMLE start and eps.
// Returns false when the search ends at an infeasible point.
bool bdcm_fit_pseudo_sample(const std::vector<double>& values, const EstimatingFunction& g,
                            const Eigen::VectorXd& start, double eps, const BdcmConfig& cfg,
                            Eigen::VectorXd& estimate);

// Combines replicate estimates: mean, between-replicate covariance times
// (1 + 1/M), normal-theory 95% intervals.
BdcmFit combine_replicates(const std::vector<Eigen::VectorXd>& estimates, int failures);

struct SimulationConfig {
  std::size_t population = 100000;
  std::size_t n = 500;
  double mu_x = 0.0;
  double mu_z = 10.0;
  double var_x = 4.0;
  double var_z = 16.0;
  double rho = 0.5;
  double beta0 = 0.1;
  double beta1 = -1.8;
  int replicates = 100;
  int bootstrap = 50;
};

void validate(const SimulationConfig& cfg);

struct Population {
  Eigen::VectorXd x;
  Eigen::VectorXd z;
};

// Bivariate normal finite population.
Population simulate_population(const SimulationConfig& cfg, std::uint64_t seed);

// Inclusion probability Phi(beta0 + beta1 (z - mu_z) / sd_z).
double inclusion_probability(const SimulationConfig& cfg, double z);

// Draws n distinct units: a uniformly chosen unit is kept with its
// inclusion probability. Weights proportional to 1 / pi*, summing to n;
// z is not returned.
SurveySample draw_sample(const SimulationConfig& cfg, const Population& population,
                         std::uint64_t seed, std::uint64_t stream);

}  // namespace otrw
