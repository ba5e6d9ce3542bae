#include <algorithm>
#include <cmath>
#include <numeric>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include "otreweight/error.hpp"
#include "otreweight/parallel.hpp"
#include "otreweight/survey.hpp"

namespace otrw {

namespace {

constexpr double kMultiplierCap = 1e10;

// Solves the symmetric tridiagonal system (diag, off) X = B in place, column
// by column (LDL' without pivoting; the matrix is positive definite).
void tridiagonal_solve(const std::vector<double>& diag, const std::vector<double>& off,
                       Eigen::MatrixXd& b) {
  const std::size_t n = diag.size();
  std::vector<double> d(n), l(n, 0.0);
  d[0] = diag[0];
  for (std::size_t k = 1; k < n; ++k) {
    l[k] = off[k - 1] / d[k - 1];
    d[k] = diag[k] - l[k] * off[k - 1];
  }
  for (Eigen::Index col = 0; col < b.cols(); ++col) {
    for (std::size_t k = 1; k < n; ++k) b(k, col) -= l[k] * b(k - 1, col);
    for (std::size_t k = 0; k < n; ++k) b(k, col) /= d[k];
    for (std::size_t k = n - 1; k-- > 0;) b(k, col) -= l[k + 1] * b(k + 1, col);
  }
}

// max_w H(w) - nu W2^2(w) subject to sum_k w_k g_k = 0, for atoms in sorted
// order. In terms of the cumulative levels c_k the transport term is a sum
// of convex functions of one c_k each, and the entropy Hessian is
// tridiagonal, so Newton steps with the linear constraint eliminated cost
// O(m r^2).
class ConstrainedEntropy {
 public:
  ConstrainedEntropy(const SortedAtoms& atoms, const Eigen::MatrixXd& g_sorted,
                     const TransportTarget& target)
      : atoms_(atoms), g_(g_sorted), target_(target), m_(atoms.size()), r_(g_sorted.cols()) {
    a_.resize(static_cast<Eigen::Index>(m_ - 1), r_);
    for (std::size_t k = 0; k + 1 < m_; ++k)
      a_.row(static_cast<Eigen::Index>(k)) =
          g_.row(static_cast<Eigen::Index>(k)) - g_.row(static_cast<Eigen::Index>(k + 1));
  }

  struct State {
    std::vector<double> w;
    double w2sq = 0.0;
    double slope = 0.0;  // dW2^2 / dnu at the solution
  };

  // Newton iterations from state.w (feasible for the moment constraint).
  void solve(double nu, State& state) {
    const std::size_t n = m_ - 1;
    std::vector<double> q, dens, diag(n), off(n > 0 ? n - 1 : 0);
    Eigen::VectorXd phi1(static_cast<Eigen::Index>(n));
    Eigen::MatrixXd rhs(static_cast<Eigen::Index>(n), 1 + r_);
    std::vector<double> trial(m_);

    double w2 = target_.w2sq_with_levels(atoms_, state.w, q, dens);
    double value = entropy(state.w) - nu * w2;
    for (int iter = 0; iter < 200; ++iter) {
      assemble(nu, state.w, q, dens, diag, off, phi1, rhs);
      Eigen::MatrixXd sol = rhs;
      tridiagonal_solve(diag, off, sol);
      const Eigen::VectorXd x = sol.col(0);
      const Eigen::MatrixXd y = sol.rightCols(r_);
      const Eigen::MatrixXd s = a_.transpose() * y;
      const Eigen::VectorXd residual = moment(state.w);
      const Eigen::VectorXd tau =
          s.fullPivLu().solve(-residual - a_.transpose() * x);
      const Eigen::VectorXd dc = x + y * tau;

      // Newton decrement: dc' J dc = grad' dc for the constrained step.
      const double decrement = rhs.col(0).dot(dc);
      if (decrement < 1e-13 * std::max(1.0, std::abs(value))) break;

      std::vector<double> dw(m_);
      for (std::size_t k = 0; k < m_; ++k) {
        const double up = k < n ? dc(static_cast<Eigen::Index>(k)) : 0.0;
        const double down = k > 0 ? dc(static_cast<Eigen::Index>(k - 1)) : 0.0;
        dw[k] = up - down;
      }
      double t = 1.0;
      for (std::size_t k = 0; k < m_; ++k)
        if (dw[k] < 0.0) t = std::min(t, -0.9 * state.w[k] / dw[k]);

      bool accepted = false;
      for (int attempt = 0; attempt < 60; ++attempt, t *= 0.5) {
        for (std::size_t k = 0; k < m_; ++k) trial[k] = state.w[k] + t * dw[k];
        const double total = std::accumulate(trial.begin(), trial.end(), 0.0);
        for (double& v : trial) v /= total;
        std::vector<double> tq, td;
        const double trial_w2 = target_.w2sq_with_levels(atoms_, trial, tq, td);
        const double trial_value = entropy(trial) - nu * trial_w2;
        if (trial_value >= value + 1e-4 * t * decrement) {
          state.w.swap(trial);
          q.swap(tq);
          dens.swap(td);
          w2 = trial_w2;
          value = trial_value;
          accepted = true;
          break;
        }
      }
      if (!accepted) break;
    }
    state.w2sq = w2;

    // dW2^2/dnu from the implicit function theorem on the KKT system.
    assemble(nu, state.w, q, dens, diag, off, phi1, rhs);
    Eigen::MatrixXd sol(static_cast<Eigen::Index>(n), 1 + r_);
    sol.col(0) = phi1;
    sol.rightCols(r_) = a_;
    tridiagonal_solve(diag, off, sol);
    const Eigen::VectorXd z = sol.col(0);
    const Eigen::MatrixXd y = sol.rightCols(r_);
    const Eigen::MatrixXd s = a_.transpose() * y;
    const Eigen::VectorXd dtau = s.fullPivLu().solve(a_.transpose() * z);
    const Eigen::VectorXd dc = -z + y * dtau;
    state.slope = phi1.dot(dc);
  }

  Eigen::VectorXd moment(const std::vector<double>& w) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(r_);
    for (std::size_t k = 0; k < m_; ++k) out += w[k] * g_.row(static_cast<Eigen::Index>(k)).transpose();
    return out;
  }

 private:
  static double entropy(const std::vector<double>& w) {
    double h = 0.0;
    for (double v : w) h -= v * std::log(v);
    return h;
  }

  // Gradient of H - nu W2^2 in c (column 0 of rhs, with the constraint
  // normals in the remaining columns) and the tridiagonal negative Hessian.
  void assemble(double nu, const std::vector<double>& w, const std::vector<double>& q,
                const std::vector<double>& dens, std::vector<double>& diag,
                std::vector<double>& off, Eigen::VectorXd& phi1, Eigen::MatrixXd& rhs) const {
    const std::size_t n = m_ - 1;
    for (std::size_t k = 0; k < n; ++k) {
      const double s0 = atoms_.sorted(k);
      const double s1 = atoms_.sorted(k + 1);
      const auto kk = static_cast<Eigen::Index>(k);
      phi1(kk) = (s0 - s1) * (s0 + s1 - 2.0 * q[k]);
      const double phi2 = dens[k] > 0.0 ? 2.0 * (s1 - s0) / dens[k] : 0.0;
      rhs(kk, 0) = std::log(w[k + 1]) - std::log(w[k]) - nu * phi1(kk);
      diag[k] = 1.0 / w[k] + 1.0 / w[k + 1] + nu * phi2;
      if (k + 1 < n) off[k] = -1.0 / w[k + 1];
    }
    rhs.rightCols(r_) = a_;
  }

  const SortedAtoms& atoms_;
  const Eigen::MatrixXd& g_;
  const TransportTarget& target_;
  std::size_t m_;
  Eigen::Index r_;
  Eigen::MatrixXd a_;
};

double sum_log(const std::vector<double>& w) {
  double s = 0.0;
  for (double v : w) s += std::log(v);
  return s;
}

}  // namespace

BdcmLoglik bdcm_loglik(const std::vector<double>& atoms, const Eigen::MatrixXd& g,
                       const TransportTarget& target, double eps) {
  const std::size_t m = atoms.size();
  if (static_cast<std::size_t>(g.rows()) != m)
    throw DomainError("bdcm: moment matrix rows do not match the atoms");
  if (!(eps > 0.0)) throw DomainError("bdcm: eps must be positive");

  BdcmLoglik out;
  const EtelResult tilted = etel(g, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(m)));
  if (!tilted.hull_ok) return out;

  const SortedAtoms original(atoms);
  const double w2_tilted = target.w2sq(original, tilted.weights);
  if (std::isinf(eps) || w2_tilted <= eps) {
    out.loglik = tilted.loglik;
    out.weights = tilted.weights;
    out.w2sq = w2_tilted;
    return out;
  }
  if (m < 2) return out;

  // Work in sorted order with an identity permutation.
  std::vector<double> sorted_values(m);
  Eigen::MatrixXd g_sorted(g.rows(), g.cols());
  for (std::size_t k = 0; k < m; ++k) {
    sorted_values[k] = original.sorted(k);
    g_sorted.row(static_cast<Eigen::Index>(k)) = g.row(static_cast<Eigen::Index>(original.order()[k]));
  }
  const SortedAtoms sorted(sorted_values);
  ConstrainedEntropy problem(sorted, g_sorted, target);

  ConstrainedEntropy::State state;
  state.w.resize(m);
  for (std::size_t k = 0; k < m; ++k) state.w[k] = tilted.weights[original.order()[k]];

  // W2^2 along the multiplier path decreases from its value at nu = 0 (the
  // ETEL solution). Safeguarded Newton on W2^2(nu) = eps.
  const double target_accuracy = 1e-9 * eps;
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  double nu = 0.0;
  problem.solve(nu, state);
  ConstrainedEntropy::State best;
  double best_nu = 0.0;
  bool have_feasible = false;
  for (int iter = 0; iter < 100; ++iter) {
    double next = 0.0;
    if (state.slope < 0.0 && std::isfinite(state.slope))
      next = nu - (state.w2sq - eps) / state.slope;
    if (std::isinf(hi)) {
      const double ceiling = std::max(100.0 * nu, 1.0);
      if (!(next > nu) || next > ceiling) next = ceiling;
    } else if (!(next > lo && next < hi)) {
      next = lo > 0.0 ? std::sqrt(lo * hi) : 0.1 * hi;
    }
    if (next > kMultiplierCap) {
      if (std::isinf(hi)) return out;  // eps below what the moment constraint allows
      next = 0.5 * (lo + hi);
    }
    nu = next;
    problem.solve(nu, state);
    if (state.w2sq <= eps) {
      hi = nu;
      if (!have_feasible || nu <= best_nu) {
        best = state;
        best_nu = nu;
        have_feasible = true;
      }
    } else {
      lo = nu;
    }
    if (std::abs(state.w2sq - eps) <= target_accuracy) {
      best = state;
      best_nu = nu;
      have_feasible = true;
      break;
    }
    if (std::isfinite(hi) && hi - lo <= 1e-13 * hi) break;
  }
  if (!have_feasible) return out;

  out.loglik = sum_log(best.w);
  out.w2sq = best.w2sq;
  out.multiplier = best_nu;
  out.constraint_active = true;
  out.weights.assign(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) out.weights[original.order()[k]] = best.w[k];
  return out;
}

namespace {

struct SearchContext {
  const std::vector<double>* values;
  const Eigen::MatrixXd* x;
  const EstimatingFunction* g;
  double eps;
  const BdcmConfig* cfg;
  Eigen::Vector2d start;  // (mu, log sigma^2) of the feasible start
  double mu_scale;
  int evaluations = 0;
};

constexpr double kInfeasible = 1e100;

// Infeasible points grow with their distance from the start. A flat
// sentinel lets the simplex accept moves between equally bad vertices
// (nmsimplex2 accepts ties) and wander without ever contracting.
double infeasible(const SearchContext* ctx, double mu, double log_s2) {
  const double dm = (mu - ctx->start(0)) / ctx->mu_scale;
  const double ds = log_s2 - ctx->start(1);
  return kInfeasible * (1.0 + dm * dm + ds * ds);
}

// theta = (mu, log sigma^2): the search runs on the log scale so sigma^2
// stays positive.
double search_objective(const gsl_vector* v, void* params) {
  auto* ctx = static_cast<SearchContext*>(params);
  ++ctx->evaluations;
  const double mu = gsl_vector_get(v, 0);
  const double log_s2 = gsl_vector_get(v, 1);
  if (!std::isfinite(mu) || !std::isfinite(log_s2) || std::abs(log_s2) > 600.0) return kInfeasible * 1e100;
  const Eigen::Vector2d theta(mu, std::exp(log_s2));
  const Eigen::MatrixXd gm = ctx->g->evaluate(*ctx->x, theta);
  if (!gm.allFinite()) return infeasible(ctx, mu, log_s2);
  const TransportTarget target(ParametricFamily::normal(mu, theta(1)), ctx->cfg->quad);
  const BdcmLoglik res = bdcm_loglik(*ctx->values, gm, target, ctx->eps);
  if (!std::isfinite(res.loglik)) return infeasible(ctx, mu, log_s2);
  // The loglik shifted by n log n, summed term by term: near uniform weights
  // each term is tiny, so differences far below the ulp of the loglik
  // itself stay visible to the simplex.
  const double n = static_cast<double>(res.weights.size());
  double relative = 0.0;
  for (double w : res.weights) relative += std::log(n * w);
  // sigma^2 enters only through the transport constraint, so the loglik is
  // flat in it over the feasible set; the small W2^2 term picks the
  // sigma^2 closest to the weighted sample.
  return -(relative - ctx->cfg->tie_break * res.w2sq);
}

}  // namespace

bool bdcm_fit_pseudo_sample(const std::vector<double>& values, const EstimatingFunction& g,
                            const Eigen::VectorXd& start, double eps, const BdcmConfig& cfg,
                            Eigen::VectorXd& estimate) {
  const Eigen::Index n = static_cast<Eigen::Index>(values.size());
  Eigen::MatrixXd x(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) x(i, 0) = values[static_cast<std::size_t>(i)];
  SearchContext ctx{&values, &x, &g, eps, &cfg, Eigen::Vector2d(start(0), std::log(start(1))),
                    std::sqrt(start(1))};

  gsl_multimin_function fn;
  fn.n = 2;
  fn.f = &search_objective;
  fn.params = &ctx;

  gsl_vector* point = gsl_vector_alloc(2);
  gsl_vector* step = gsl_vector_alloc(2);
  gsl_vector_set(point, 0, start(0));
  gsl_vector_set(point, 1, std::log(start(1)));
  gsl_vector_set(step, 0, 0.1 * std::sqrt(start(1)));
  gsl_vector_set(step, 1, 0.1);

  gsl_multimin_fminimizer* solver =
      gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 2);
  gsl_multimin_fminimizer_set(solver, &fn, point, step);
  int status = GSL_CONTINUE;
  while (ctx.evaluations < cfg.max_evaluations && status == GSL_CONTINUE) {
    if (gsl_multimin_fminimizer_iterate(solver) != GSL_SUCCESS) break;
    status = gsl_multimin_test_size(gsl_multimin_fminimizer_size(solver), cfg.simplex_tolerance);
  }
  const double best = gsl_multimin_fminimizer_minimum(solver);
  estimate.resize(2);
  estimate(0) = gsl_vector_get(solver->x, 0);
  estimate(1) = std::exp(gsl_vector_get(solver->x, 1));
  gsl_multimin_fminimizer_free(solver);
  gsl_vector_free(point);
  gsl_vector_free(step);
  return best < kInfeasible;
}

BdcmFit combine_replicates(const std::vector<Eigen::VectorXd>& estimates, int failures) {
  if (estimates.empty()) throw FitError("bdcm: no successful replicates to combine");
  const Eigen::Index p = estimates.front().size();
  const double count = static_cast<double>(estimates.size());
  BdcmFit fit;
  fit.replicate_estimates = estimates;
  fit.failures = failures;
  fit.theta = Eigen::VectorXd::Zero(p);
  for (const auto& e : estimates) fit.theta += e;
  fit.theta /= count;
  fit.covariance = Eigen::MatrixXd::Zero(p, p);
  if (estimates.size() > 1) {
    for (const auto& e : estimates) fit.covariance += (e - fit.theta) * (e - fit.theta).transpose();
    fit.covariance *= (1.0 + 1.0 / count) / (count - 1.0);
  }
  fit.ci_lower.resize(p);
  fit.ci_upper.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double se = std::sqrt(std::max(0.0, fit.covariance(j, j)));
    fit.ci_lower(j) = fit.theta(j) - kNormalQuantile975 * se;
    fit.ci_upper(j) = fit.theta(j) + kNormalQuantile975 * se;
  }
  return fit;
}

BdcmFit bdcm_fit(const SurveySample& sample, const EstimatingFunction& g, const BdcmConfig& cfg,
                 std::uint64_t seed, int jobs) {
  if (cfg.replicates < 2) throw ConfigError("bdcm: need at least two bootstrap replicates");
  validate(cfg.quad);
  const auto draws = wfpbb_resample(sample.pi, cfg.population, cfg.replicates, seed);

  struct Outcome {
    bool ok = false;
    Eigen::VectorXd estimate;
  };
  const auto outcomes = map_parallel<Outcome>(draws.size(), jobs, [&](std::size_t m) {
    const auto n = static_cast<Eigen::Index>(draws[m].size());
    Eigen::MatrixXd pseudo(n, sample.x.cols());
    for (Eigen::Index i = 0; i < n; ++i) pseudo.row(i) = sample.x.row(static_cast<Eigen::Index>(draws[m][i]));
    // Pseudo-samples carry unit weights, so their PMLE is the plain MLE. The
    // search starts there and eps = W2^2(uniform pseudo-sample, f_start),
    // which keeps uniform weights feasible at the start.
    const PmleFit start = mle_normal(pseudo.col(0));
    const TransportTarget start_target(ParametricFamily::normal(start.theta(0), start.theta(1)), cfg.quad);
    const std::vector<double> values(pseudo.col(0).data(), pseudo.col(0).data() + n);
    const std::vector<double> uniform(values.size(), 1.0 / static_cast<double>(values.size()));
    const double eps = start_target.w2sq(SortedAtoms(values), uniform);
    Outcome out;
    try {
      out.ok = bdcm_fit_pseudo_sample(values, g, start.theta, eps, cfg, out.estimate);
    } catch (const NumericalError&) {
      out.ok = false;
    }
    return out;
  });

  std::vector<Eigen::VectorXd> estimates;
  int failures = 0;
  for (const auto& o : outcomes) {
    if (o.ok)
      estimates.push_back(o.estimate);
    else
      ++failures;
  }
  if (2 * failures > cfg.replicates)
    throw FitError("bdcm: more than half of the bootstrap replicates failed");
  return combine_replicates(estimates, failures);
}

}  // namespace otrw
