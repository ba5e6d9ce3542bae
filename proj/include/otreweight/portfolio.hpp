#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "otreweight/distributions.hpp"
#include "otreweight/quadrature.hpp"
#include "otreweight/simplex.hpp"

namespace otrw {

// n periods x d assets of excess returns.
struct ReturnMatrix {
  Eigen::MatrixXd r;
  std::vector<std::string> labels;

  std::size_t periods() const { return static_cast<std::size_t>(r.rows()); }
  std::size_t assets() const { return static_cast<std::size_t>(r.cols()); }
};

// Throws DomainError unless n >= 2, d >= 1, labels match and entries are finite.
void validate(const ReturnMatrix& returns);

inline constexpr double kZeroWeight = 1e-6;

struct PortfolioStats {
  double mean = 0.0;
  double variance = 0.0;          // 1/n normalization
  double skewness = 0.0;          // NaN when the variance is zero
  double excess_kurtosis = 0.0;   // NaN when the variance is zero
  bool higher_moments_defined = true;
  int zero_count = 0;             // weights below kZeroWeight
};

std::vector<double> portfolio_atoms(const ReturnMatrix& returns, const std::vector<double>& w);
PortfolioStats portfolio_stats(const ReturnMatrix& returns, const std::vector<double>& w);

struct MvResult {
  std::vector<double> weights;
  PortfolioStats stats;
  double kkt_residual = 0.0;  // || w - P(w + grad) ||
  int iterations = 0;
  bool degenerate = false;    // lambda = 0 with tied top means
};

// argmax over the simplex of w'mu - (lambda/2) w' Sigma w with the sample
// mean and 1/n covariance, by accelerated projected gradient until the
// KKT residual is below 1e-8. Throws NumericalError if that is not reached.
MvResult mv_weights(const ReturnMatrix& returns, double lambda);

// Skew-normal with the mean, variance and skewness of the MV portfolio.
// With clip set, a skewness outside the family is clipped to +-0.95 and
// clipped is reported; otherwise DomainError propagates.
struct MvTarget {
  ParametricFamily family;
  Moments matched;
  bool clipped = false;
};
MvTarget target_from_mv(const ReturnMatrix& returns, double lambda, bool clip = false);

inline constexpr double kClippedSkewness = 0.95;

struct PortfolioFit {
  std::vector<double> weights;
  PortfolioStats stats;
  double lambda_star = 0.0;
  double w2sq = 0.0;
  double entropy = 0.0;
  double bd_entropy = 0.0;  // entropy / log d
  double objective = 0.0;   // (1 - lambda*) W2^2 - lambda* bd_entropy, minimized
  int iterations = 0;
  bool converged = true;
};

struct PortfolioConfig {
  SolverConfig solver{20000, 1e-12, 1.0, 0.5};
  int random_starts = 4;  // Dirichlet(1) starts in addition to uniform
  QuadratureConfig quad;
};

// The minimized objective at w.
double portfolio_objective(const ReturnMatrix& returns, const ParametricFamily& target,
                           double lambda_star, const std::vector<double>& w,
                           const QuadratureConfig& quad = {});

// Minimizes (1 - lambda*) W2^2(uniform atoms w'R_i, target) - lambda* H(w)/log d
// over the simplex by exponentiated gradient from the uniform start and
// random Dirichlet starts, keeping the best. lambda* = 1 returns uniform
// weights. Throws DomainError for d < 2.
PortfolioFit entropy_w2_portfolio(const ReturnMatrix& returns, const ParametricFamily& target,
                                  double lambda_star, const PortfolioConfig& cfg,
                                  std::uint64_t seed, const std::vector<std::vector<double>>& extra_starts = {});

struct SweepResult {
  std::vector<PortfolioFit> rows;  // in grid order
  bool monotone = true;            // entropy and W2^2 nondecreasing along sorted lambda*
};

// Runs entropy_w2_portfolio for each grid point (in parallel), then
// repairs along the sorted grid by warm starts from the neighbouring
// solutions until no objective improves. Grid points must lie in [0, 1].
SweepResult sweep_lambda(const ReturnMatrix& returns, const ParametricFamily& target,
                         const std::vector<double>& grid, const PortfolioConfig& cfg,
                         std::uint64_t seed, int jobs = 1);

struct MvSweepRow {
  double lambda = 0.0;
  MvResult result;
};
std::vector<MvSweepRow> mv_sweep(const ReturnMatrix& returns, const std::vector<double>& grid,
                                 int jobs = 1);

struct PortfolioSynthConfig {
  std::size_t periods = 252;
  double crash_probability = 0.05;  // per period
  double crash_mean = 0.17;         // size of the common negative jump
  double crash_sd = 0.05;
};

void validate(const PortfolioSynthConfig& cfg);

// Five assets of monthly excess returns: Gaussian idiosyncratic parts plus
// a common crash factor with heavier loadings on the higher-mean assets,
// which makes high-return portfolios negatively skewed and leptokurtic.
ReturnMatrix synth_returns(const PortfolioSynthConfig& cfg, std::uint64_t seed);

}  // namespace otrw
