#include "otreweight/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "otreweight/error.hpp"
#include "otreweight/parallel.hpp"
#include "otreweight/rng.hpp"
#include "otreweight/transport.hpp"

namespace otrw {

void validate(const ReturnMatrix& returns) {
  if (returns.r.rows() < 2) throw DomainError("portfolio: need at least two periods");
  if (returns.r.cols() < 1) throw DomainError("portfolio: need at least one asset");
  if (!returns.labels.empty() && returns.labels.size() != returns.assets())
    throw DomainError("portfolio: one label per asset");
  if (!returns.r.allFinite()) throw DomainError("portfolio: non-finite returns");
}

namespace {

Eigen::Map<const Eigen::VectorXd> as_vector(const std::vector<double>& w) {
  return {w.data(), static_cast<Eigen::Index>(w.size())};
}

void check_weights(const ReturnMatrix& returns, const std::vector<double>& w) {
  if (w.size() != returns.assets()) throw DomainError("portfolio: one weight per asset");
}

}  // namespace

std::vector<double> portfolio_atoms(const ReturnMatrix& returns, const std::vector<double>& w) {
  check_weights(returns, w);
  const Eigen::VectorXd s = returns.r * as_vector(w);
  return {s.data(), s.data() + s.size()};
}

PortfolioStats portfolio_stats(const ReturnMatrix& returns, const std::vector<double>& w) {
  const std::vector<double> s = portfolio_atoms(returns, w);
  const double n = static_cast<double>(s.size());
  PortfolioStats out;
  out.mean = std::accumulate(s.begin(), s.end(), 0.0) / n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : s) {
    const double d = v - out.mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  out.variance = m2;
  // Relative to the scale of the returns, a spread this small is rounding.
  const double scale = std::max(std::abs(out.mean), 1e-300);
  if (m2 <= 1e-28 * scale * scale || m2 == 0.0) {
    out.variance = 0.0;
    out.skewness = std::numeric_limits<double>::quiet_NaN();
    out.excess_kurtosis = std::numeric_limits<double>::quiet_NaN();
    out.higher_moments_defined = false;
  } else {
    out.skewness = m3 / std::pow(m2, 1.5);
    out.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  }
  for (double v : w)
    if (v < kZeroWeight) ++out.zero_count;
  return out;
}

MvResult mv_weights(const ReturnMatrix& returns, double lambda) {
  validate(returns);
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw DomainError("portfolio: lambda must be >= 0");
  const Eigen::Index d = returns.r.cols();
  const double n = static_cast<double>(returns.r.rows());
  const Eigen::VectorXd mu = returns.r.colwise().mean().transpose();
  const Eigen::MatrixXd centred = returns.r.rowwise() - mu.transpose();
  const Eigen::MatrixXd sigma = centred.transpose() * centred / n;

  MvResult out;
  auto gradient = [&](const Eigen::VectorXd& w) -> Eigen::VectorXd { return mu - lambda * sigma * w; };
  auto residual = [&](const Eigen::VectorXd& w) {
    const Eigen::VectorXd moved = w + gradient(w);
    const std::vector<double> proj = project_to_simplex(std::span<const double>(moved.data(), moved.size()));
    return (w - as_vector(proj)).norm();
  };

  const double top = mu.maxCoeff();
  int ties = 0;
  for (Eigen::Index j = 0; j < d; ++j)
    if (mu(j) == top) ++ties;

  Eigen::VectorXd w;
  if (lambda == 0.0 || d == 1) {
    // Linear objective: a vertex at the largest mean.
    Eigen::Index best = 0;
    mu.maxCoeff(&best);
    w = Eigen::VectorXd::Zero(d);
    w(best) = 1.0;
    out.degenerate = lambda == 0.0 && ties > 1;
  } else {
    const double curvature = lambda * Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sigma).eigenvalues().maxCoeff();
    const double step = 1.0 / std::max(curvature, 1e-300);
    w = Eigen::VectorXd::Constant(d, 1.0 / static_cast<double>(d));
    Eigen::VectorXd y = w;
    double t = 1.0;
    auto value = [&](const Eigen::VectorXd& v) { return v.dot(mu) - 0.5 * lambda * v.dot(sigma * v); };
    int iter = 0;
    for (; iter < 200000; ++iter) {
      const Eigen::VectorXd moved = y + step * gradient(y);
      const std::vector<double> proj = project_to_simplex(std::span<const double>(moved.data(), moved.size()));
      Eigen::VectorXd next = as_vector(proj);
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      // Restart the momentum whenever it stops helping.
      if (value(next) < value(w)) {
        y = w;
        t = 1.0;
        continue;
      }
      y = next + ((t - 1.0) / t_next) * (next - w);
      w = next;
      t = t_next;
      if (iter % 16 == 0 && residual(w) <= 1e-9) break;
    }
    out.iterations = iter;
  }
  out.kkt_residual = residual(w);
  if (!(out.kkt_residual <= 1e-8))
    throw NumericalError("portfolio: mean-variance solver did not reach the KKT tolerance");
  // Exact zeros from the projection stay zero; renormalize for rounding.
  out.weights.assign(w.data(), w.data() + w.size());
  const double total = std::accumulate(out.weights.begin(), out.weights.end(), 0.0);
  for (double& v : out.weights) v /= total;
  out.stats = portfolio_stats(returns, out.weights);
  return out;
}

MvTarget target_from_mv(const ReturnMatrix& returns, double lambda, bool clip) {
  const MvResult mv = mv_weights(returns, lambda);
  if (!mv.stats.higher_moments_defined)
    throw DomainError("portfolio: the MV portfolio has zero variance; no skew-normal target");
  TargetMoments moments{mv.stats.mean, mv.stats.variance, mv.stats.skewness};
  MvTarget out{ParametricFamily::normal(0.0, 1.0), {moments.mean, moments.variance, moments.skewness}, false};
  if (clip && std::abs(moments.skewness) >= kMaxSkewNormalSkewness) {
    moments.skewness = std::copysign(kClippedSkewness, moments.skewness);
    out.clipped = true;
  }
  out.family = skew_normal_from_moments(moments);
  return out;
}

namespace {

void check_lambda_star(double lambda_star) {
  if (!(lambda_star >= 0.0 && lambda_star <= 1.0))
    throw DomainError("portfolio: lambda* must lie in [0, 1]");
}

// W2^2 of uniform atoms against the target through the per-segment
// quantile integrals: sum_k s_(k)^2/n - 2 s_(k) A_k + B_k.
struct UniformTransport {
  std::vector<double> first;
  std::vector<double> second;
  double n;

  UniformTransport(const ParametricFamily& target, std::size_t periods, const QuadratureConfig& quad)
      : n(static_cast<double>(periods)) {
    auto seg = TransportTarget(target, quad).uniform_segments(periods);
    first = std::move(seg.first);
    second = std::move(seg.second);
  }

  // Returns W2^2; writes dW2^2/ds_i (original order) into grad.
  double evaluate(const Eigen::VectorXd& s, Eigen::VectorXd* grad) const {
    std::vector<std::size_t> order(static_cast<std::size_t>(s.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s(a) < s(b); });
    double total = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const double v = s(static_cast<Eigen::Index>(order[k]));
      total += v * v / n - 2.0 * v * first[k] + second[k];
      if (grad) (*grad)(static_cast<Eigen::Index>(order[k])) = 2.0 * v / n - 2.0 * first[k];
    }
    return std::max(total, 0.0);
  }
};

struct Problem {
  const ReturnMatrix& returns;
  UniformTransport transport;
  double lambda_star;
  double bd;

  double objective(const std::vector<double>& w, double* w2sq = nullptr) const {
    const Eigen::VectorXd s = returns.r * as_vector(w);
    const double t = transport.evaluate(s, nullptr);
    if (w2sq) *w2sq = t;
    return (1.0 - lambda_star) * t - lambda_star * bd * entropy(w);
  }

  // Negated objective for the ascent.
  SimplexObjective ascent() const {
    return [this](std::span<const double> w, std::span<double> grad) {
      const Eigen::Map<const Eigen::VectorXd> wv(w.data(), static_cast<Eigen::Index>(w.size()));
      const Eigen::VectorXd s = returns.r * wv;
      Eigen::VectorXd ds(s.size());
      const double t = transport.evaluate(s, &ds);
      const Eigen::VectorXd dw = returns.r.transpose() * ds;
      double h = 0.0;
      for (std::size_t j = 0; j < w.size(); ++j) {
        h -= w[j] * std::log(w[j]);
        grad[j] = -(1.0 - lambda_star) * dw(static_cast<Eigen::Index>(j)) -
                  lambda_star * bd * (std::log(w[j]) + 1.0);
      }
      return -((1.0 - lambda_star) * t - lambda_star * bd * h);
    };
  }
};

PortfolioFit finish(const ReturnMatrix& returns, const Problem& problem, std::vector<double> w,
                    int iterations, bool converged) {
  PortfolioFit fit;
  fit.lambda_star = problem.lambda_star;
  fit.objective = problem.objective(w, &fit.w2sq);
  fit.entropy = entropy(w);
  fit.bd_entropy = problem.bd * fit.entropy;
  fit.weights = std::move(w);
  fit.stats = portfolio_stats(returns, fit.weights);
  fit.iterations = iterations;
  fit.converged = converged;
  return fit;
}

std::vector<double> dirichlet_start(std::size_t d, std::uint64_t seed, std::uint64_t index) {
  Rng rng = make_stream(seed, 0xD1A1ULL, index);
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> w(d);
  double total = 0.0;
  for (double& v : w) {
    v = std::max(expo(rng), 1e-12);
    total += v;
  }
  for (double& v : w) v /= total;
  return w;
}

}  // namespace

double portfolio_objective(const ReturnMatrix& returns, const ParametricFamily& target,
                           double lambda_star, const std::vector<double>& w,
                           const QuadratureConfig& quad) {
  validate(returns);
  check_lambda_star(lambda_star);
  check_weights(returns, w);
  if (returns.assets() < 2) throw DomainError("portfolio: the entropy scale needs d >= 2");
  const Problem problem{returns, UniformTransport(target, returns.periods(), quad), lambda_star,
                        1.0 / std::log(static_cast<double>(returns.assets()))};
  return problem.objective(w);
}

PortfolioFit entropy_w2_portfolio(const ReturnMatrix& returns, const ParametricFamily& target,
                                  double lambda_star, const PortfolioConfig& cfg, std::uint64_t seed,
                                  const std::vector<std::vector<double>>& extra_starts) {
  validate(returns);
  check_lambda_star(lambda_star);
  validate(cfg.solver);
  if (cfg.random_starts < 0) throw ConfigError("portfolio: random_starts must be >= 0");
  const std::size_t d = returns.assets();
  if (d < 2) throw DomainError("portfolio: the entropy scale needs d >= 2");
  const Problem problem{returns, UniformTransport(target, returns.periods(), cfg.quad), lambda_star,
                        1.0 / std::log(static_cast<double>(d))};

  const std::vector<double> uniform(d, 1.0 / static_cast<double>(d));
  if (lambda_star == 1.0) return finish(returns, problem, uniform, 0, true);

  std::vector<std::vector<double>> starts{uniform};
  for (int k = 0; k < cfg.random_starts; ++k)
    starts.push_back(dirichlet_start(d, seed, static_cast<std::uint64_t>(k)));
  for (const auto& s : extra_starts) {
    check_weights(returns, s);
    std::vector<double> interior(s);
    // Warm starts may sit on a face; pull them slightly inside.
    for (double& v : interior) v = 0.999 * v + 0.001 / static_cast<double>(d);
    starts.push_back(std::move(interior));
  }

  const SimplexObjective f = problem.ascent();
  PortfolioFit best;
  bool have = false;
  for (const auto& start : starts) {
    const AscentResult res = exponentiated_gradient_ascent(start, f, cfg.solver);
    PortfolioFit fit = finish(returns, problem, res.weights, res.iterations, res.converged);
    if (!have || fit.objective < best.objective) {
      best = std::move(fit);
      have = true;
    }
  }
  return best;
}

SweepResult sweep_lambda(const ReturnMatrix& returns, const ParametricFamily& target,
                         const std::vector<double>& grid, const PortfolioConfig& cfg,
                         std::uint64_t seed, int jobs) {
  if (grid.empty()) throw ConfigError("portfolio: empty lambda* grid");
  for (double l : grid) check_lambda_star(l);
  SweepResult out;
  out.rows = map_parallel<PortfolioFit>(grid.size(), jobs, [&](std::size_t k) {
    return entropy_w2_portfolio(returns, target, grid[k], cfg, seed);
  });

  std::vector<std::size_t> order(grid.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return grid[a] < grid[b]; });

  // Warm-start repair: a neighbour's solution can beat this point's own
  // multistart on a nonconvex objective.
  PortfolioConfig warm = cfg;
  warm.random_starts = 0;
  for (int pass = 0; pass < 20; ++pass) {
    bool improved = false;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      const std::size_t k = order[pos];
      if (grid[k] == 1.0) continue;
      std::vector<std::vector<double>> neighbours;
      if (pos > 0) neighbours.push_back(out.rows[order[pos - 1]].weights);
      if (pos + 1 < order.size()) neighbours.push_back(out.rows[order[pos + 1]].weights);
      PortfolioFit fit = entropy_w2_portfolio(returns, target, grid[k], warm, seed, neighbours);
      if (fit.objective < out.rows[k].objective - 1e-12 * std::max(1.0, std::abs(out.rows[k].objective))) {
        out.rows[k] = std::move(fit);
        improved = true;
      }
    }
    if (!improved) break;
  }

  for (std::size_t pos = 1; pos < order.size(); ++pos) {
    const PortfolioFit& a = out.rows[order[pos - 1]];
    const PortfolioFit& b = out.rows[order[pos]];
    const double tol_h = 1e-9 * std::max(1.0, a.entropy);
    const double tol_w = 1e-9 * std::max(1e-12, a.w2sq) + 1e-15;
    if (b.entropy < a.entropy - tol_h || b.w2sq < a.w2sq - tol_w) out.monotone = false;
  }
  return out;
}

std::vector<MvSweepRow> mv_sweep(const ReturnMatrix& returns, const std::vector<double>& grid, int jobs) {
  if (grid.empty()) throw ConfigError("portfolio: empty lambda grid");
  return map_parallel<MvSweepRow>(grid.size(), jobs, [&](std::size_t k) {
    return MvSweepRow{grid[k], mv_weights(returns, grid[k])};
  });
}

void validate(const PortfolioSynthConfig& cfg) {
  if (cfg.periods < 2) throw ConfigError("portfolio synth: need at least two periods");
  if (!(cfg.crash_probability >= 0.0 && cfg.crash_probability <= 1.0))
    throw ConfigError("portfolio synth: crash probability must lie in [0, 1]");
  if (!(cfg.crash_sd >= 0.0) || !std::isfinite(cfg.crash_mean))
    throw ConfigError("portfolio synth: bad crash size");
}

ReturnMatrix synth_returns(const PortfolioSynthConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  static const double kMean[5] = {0.026, 0.020, 0.011, 0.007, 0.005};
  static const double kSd[5] = {0.09, 0.07, 0.05, 0.045, 0.035};
  static const double kLoading[5] = {1.0, 0.8, 0.4, 0.3, 0.2};
  Rng rng = make_stream(seed, 0);
  std::normal_distribution<double> normal;
  std::bernoulli_distribution crash(cfg.crash_probability);
  ReturnMatrix out;
  out.labels = {"asset1", "asset2", "asset3", "asset4", "asset5"};
  out.r.resize(static_cast<Eigen::Index>(cfg.periods), 5);
  for (Eigen::Index i = 0; i < out.r.rows(); ++i) {
    const double market = normal(rng);
    const double jump = crash(rng) ? -(cfg.crash_mean + cfg.crash_sd * normal(rng)) : 0.0;
    for (Eigen::Index j = 0; j < 5; ++j)
      out.r(i, j) = kMean[j] + kSd[j] * (0.3 * market + std::sqrt(1.0 - 0.09) * normal(rng)) +
                    kLoading[j] * jump;
  }
  return out;
}

}  // namespace otrw
