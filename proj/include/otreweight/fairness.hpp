#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "otreweight/simplex.hpp"

namespace otrw {

// Records with the S group first: rows 0..n_s-1 are S, the rest T.
struct FairDataset {
  Eigen::MatrixXd x;  // n x p covariates
  Eigen::VectorXd y;
  std::size_t n_s = 0;

  std::size_t n() const { return static_cast<std::size_t>(y.size()); }
  std::size_t n_t() const { return n() - n_s; }
  std::size_t p() const { return static_cast<std::size_t>(x.cols()); }
};

// Throws DomainError on mismatched sizes, an empty group or non-finite data.
void validate(const FairDataset& data);

struct FairFit {
  Eigen::VectorXd theta_s;  // intercept first
  Eigen::VectorXd theta_t;
  double sigma2 = 1.0;
  std::vector<double> w;    // over the T group
  double lambda = 0.0;
  double w2sq = 0.0;        // between the fitted-value distributions
  double entropy = 0.0;
  double objective = 0.0;   // the scheme's own objective at the returned point
  int iterations = 0;
  bool converged = true;
};

// h(x, theta) = theta_0 + x' theta_{1..p} for every row of x.
Eigen::VectorXd linear_predictor(const Eigen::MatrixXd& x, const Eigen::VectorXd& theta);

// Group-wise least squares, pooled residual variance, uniform w. A zero
// residual variance is replaced by kSigma2Floor times max(1, mean y^2).
// Throws FitError on a rank-deficient design or a group with <= p rows.
FairFit fit_unconstrained(const FairDataset& data);

inline constexpr double kSigma2Floor = 1e-12;

// W2^2 between the uniform distribution of S fitted values and the
// w-weighted distribution of T fitted values.
double fairness_w2sq(const FairDataset& data, const Eigen::VectorXd& theta_s,
                     const Eigen::VectorXd& theta_t, const std::vector<double>& w);

// Post-processing: maximize -(1 - lambda) W2^2 - lambda sum w log w over w
// with the unconstrained coefficients fixed. lambda = 1 returns uniform w.
// Throws FitError when the weight solver does not converge.
FairFit fit_two_step(const FairDataset& data, double lambda, const SolverConfig& cfg = {});

// The w block of the joint objective at fixed coefficients:
// maximize -sum w_i l_i - (1 - lambda) W2^2 - lambda sum w log w from w0.
AscentResult in_model_weights(const FairDataset& data, const FairFit& at, double lambda,
                              std::vector<double> w0, const SolverConfig& cfg = {});

struct InModelConfig {
  SolverConfig weights;
  int max_cycles = 500;
  double tolerance = 1e-8;  // on the change of the joint objective per cycle
};

// Joint maximization over (theta_T, w) with theta_S at its least-squares
// value and sigma^2 held at the unconstrained estimate. Alternates a
// weight solve and a preconditioned gradient step in theta_T, each
// accepted only if the joint objective does not decrease. Starts from the
// two-step solution.
FairFit fit_in_model(const FairDataset& data, double lambda, const InModelConfig& cfg = {});

double in_model_objective(const FairDataset& data, const FairFit& fit);

struct FairPrediction {
  double value = 0.0;
  bool fallback = false;  // no kernel mass near x; value is h(x, theta_T)
};

// Per-coordinate bandwidths for the T covariates (multivariate Silverman
// rule); coordinates with zero spread get bandwidth 1.
std::vector<double> silverman_bandwidths(const FairDataset& data);

// Group S: h(x, theta_S). Group T: w-weighted Nadaraya-Watson average of
// the fitted T values with a Gaussian product kernel. An empty bandwidth
// vector selects silverman_bandwidths.
FairPrediction predict_fair(const FairDataset& data, const FairFit& fit, const Eigen::VectorXd& x,
                            bool group_t, std::vector<double> bandwidths = {});

struct FairSynthConfig {
  std::size_t n_s = 100;
  std::size_t n_t = 100;
  std::size_t p = 6;
  double intercept_s = 5.0;
  double gap = 16.0;        // added to the T intercept
  double slope_s = 1.0;     // scale of the S coefficients
  double slope_t = 15.0;    // scale of the T coefficients
  double noise = 4.0;       // residual standard deviation
};

void validate(const FairSynthConfig& cfg);

// Covariates N(0, I); coefficients drawn once per seed with the given
// scales, so T fitted values are shifted by gap and more dispersed.
FairDataset synth_fair_data(const FairSynthConfig& cfg, std::uint64_t seed);

}  // namespace otrw
