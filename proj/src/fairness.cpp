#include "otreweight/fairness.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "otreweight/error.hpp"
#include "otreweight/rng.hpp"
#include "otreweight/transport.hpp"

namespace otrw {

void validate(const FairDataset& data) {
  if (data.x.rows() != data.y.size()) throw DomainError("fairness: x and y differ in length");
  if (data.n_s == 0 || data.n_s >= data.n()) throw DomainError("fairness: both groups must be nonempty");
  if (!data.x.allFinite() || !data.y.allFinite()) throw DomainError("fairness: non-finite data");
}

namespace {

Eigen::MatrixXd design(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd d(x.rows(), x.cols() + 1);
  d.col(0).setOnes();
  d.rightCols(x.cols()) = x;
  return d;
}

Eigen::MatrixXd rows_s(const FairDataset& data) {
  return design(data.x.topRows(static_cast<Eigen::Index>(data.n_s)));
}

Eigen::MatrixXd rows_t(const FairDataset& data) {
  return design(data.x.bottomRows(static_cast<Eigen::Index>(data.n_t())));
}

Eigen::VectorXd least_squares(const Eigen::MatrixXd& d, const Eigen::VectorXd& y) {
  if (d.rows() <= d.cols() - 1) throw FitError("fairness: a group has no more rows than covariates");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d);
  if (qr.rank() < d.cols()) throw FitError("fairness: rank-deficient design");
  return qr.solve(y);
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

WeightedSample group_s_sample(const FairDataset& data, const Eigen::VectorXd& theta_s) {
  return WeightedSample::uniform(to_vector(rows_s(data) * theta_s));
}

WeightedSample group_t_sample(const FairDataset& data, const Eigen::VectorXd& theta_t,
                              const std::vector<double>& w) {
  return WeightedSample(to_vector(rows_t(data) * theta_t), w);
}

// l_i = (y_i - h_i)^2 / (2 sigma^2) over the T rows.
Eigen::VectorXd losses_t(const FairDataset& data, const Eigen::VectorXd& theta_t, double sigma2) {
  const Eigen::VectorXd r = data.y.tail(static_cast<Eigen::Index>(data.n_t())) - rows_t(data) * theta_t;
  return r.array().square() / (2.0 * sigma2);
}

double loss_s(const FairDataset& data, const FairFit& fit) {
  const Eigen::VectorXd r = data.y.head(static_cast<Eigen::Index>(data.n_s)) - rows_s(data) * fit.theta_s;
  return r.squaredNorm() / (2.0 * fit.sigma2) / static_cast<double>(data.n_s);
}

double entropy_term(const std::vector<double>& w) { return entropy(w); }

void finish(const FairDataset& data, FairFit& fit) {
  fit.w2sq = fairness_w2sq(data, fit.theta_s, fit.theta_t, fit.w);
  fit.entropy = entropy_term(fit.w);
}

}  // namespace

Eigen::VectorXd linear_predictor(const Eigen::MatrixXd& x, const Eigen::VectorXd& theta) {
  if (theta.size() != x.cols() + 1) throw DomainError("fairness: coefficient length mismatch");
  return design(x) * theta;
}

FairFit fit_unconstrained(const FairDataset& data) {
  validate(data);
  FairFit fit;
  const Eigen::VectorXd ys = data.y.head(static_cast<Eigen::Index>(data.n_s));
  const Eigen::VectorXd yt = data.y.tail(static_cast<Eigen::Index>(data.n_t()));
  fit.theta_s = least_squares(rows_s(data), ys);
  fit.theta_t = least_squares(rows_t(data), yt);
  const double rss = (ys - rows_s(data) * fit.theta_s).squaredNorm() +
                     (yt - rows_t(data) * fit.theta_t).squaredNorm();
  fit.sigma2 = rss / static_cast<double>(data.n());
  const double floor = kSigma2Floor * std::max(1.0, data.y.squaredNorm() / static_cast<double>(data.n()));
  if (!(fit.sigma2 > floor)) fit.sigma2 = floor;
  fit.w.assign(data.n_t(), 1.0 / static_cast<double>(data.n_t()));
  finish(data, fit);
  fit.objective = -loss_s(data, fit) - losses_t(data, fit.theta_t, fit.sigma2).mean();
  return fit;
}

double fairness_w2sq(const FairDataset& data, const Eigen::VectorXd& theta_s,
                     const Eigen::VectorXd& theta_t, const std::vector<double>& w) {
  return w2sq_discrete_discrete(group_s_sample(data, theta_s), group_t_sample(data, theta_t, w));
}

namespace {

// -(1 - lambda) W2^2 - lambda sum w log w - sum w_i l_i for fixed atoms.
SimplexObjective weight_objective(const WeightedSample& s_group, const std::vector<double>& atoms_t,
                                  const Eigen::VectorXd& losses, double lambda) {
  return [&s_group, atoms_t, losses, lambda](std::span<const double> w, std::span<double> grad) {
    const WeightedSample t_group(atoms_t, std::vector<double>(w.begin(), w.end()));
    const DiscreteGradient d = w2sq_discrete_discrete_gradient(s_group, t_group);
    double value = -(1.0 - lambda) * d.value;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double l = losses.size() ? losses(static_cast<Eigen::Index>(i)) : 0.0;
      value -= w[i] * l + lambda * (w[i] > 0.0 ? w[i] * std::log(w[i]) : 0.0);
      grad[i] = -l - (1.0 - lambda) * d.weights[i] - lambda * (std::log(w[i]) + 1.0);
    }
    return value;
  };
}

void check_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("fairness: lambda must lie in [0, 1]");
}

}  // namespace

FairFit fit_two_step(const FairDataset& data, double lambda, const SolverConfig& cfg) {
  check_lambda(lambda);
  validate(cfg);
  FairFit fit = fit_unconstrained(data);
  fit.lambda = lambda;
  if (lambda < 1.0) {
    const WeightedSample s_group = group_s_sample(data, fit.theta_s);
    const auto f = weight_objective(s_group, to_vector(rows_t(data) * fit.theta_t), Eigen::VectorXd(), lambda);
    const AscentResult res = exponentiated_gradient_ascent(fit.w, f, cfg);
    if (!res.converged) {
      std::ostringstream msg;
      msg << "fairness: two-step weight solver did not converge after " << res.iterations
          << " iterations (objective " << res.objective << ")";
      throw FitError(msg.str());
    }
    fit.w = res.weights;
    fit.iterations = res.iterations;
  }
  finish(data, fit);
  fit.objective = -(1.0 - lambda) * fit.w2sq - lambda * -fit.entropy;
  return fit;
}

AscentResult in_model_weights(const FairDataset& data, const FairFit& at, double lambda,
                              std::vector<double> w0, const SolverConfig& cfg) {
  check_lambda(lambda);
  const WeightedSample s_group = group_s_sample(data, at.theta_s);
  const auto f = weight_objective(s_group, to_vector(rows_t(data) * at.theta_t),
                                  losses_t(data, at.theta_t, at.sigma2), lambda);
  return exponentiated_gradient_ascent(std::move(w0), f, cfg);
}

double in_model_objective(const FairDataset& data, const FairFit& fit) {
  const Eigen::VectorXd l = losses_t(data, fit.theta_t, fit.sigma2);
  double weighted = 0.0;
  double neg_entropy = 0.0;
  for (std::size_t i = 0; i < fit.w.size(); ++i) {
    weighted += fit.w[i] * l(static_cast<Eigen::Index>(i));
    if (fit.w[i] > 0.0) neg_entropy += fit.w[i] * std::log(fit.w[i]);
  }
  return -loss_s(data, fit) - weighted -
         (1.0 - fit.lambda) * fairness_w2sq(data, fit.theta_s, fit.theta_t, fit.w) -
         fit.lambda * neg_entropy;
}

FairFit fit_in_model(const FairDataset& data, double lambda, const InModelConfig& cfg) {
  check_lambda(lambda);
  validate(cfg.weights);
  if (cfg.max_cycles < 1 || !(cfg.tolerance > 0.0)) throw ConfigError("fairness: bad in-model configuration");

  FairFit fit = fit_two_step(data, lambda, cfg.weights);
  fit.lambda = lambda;
  const Eigen::MatrixXd dt = rows_t(data);
  const Eigen::VectorXd yt = data.y.tail(static_cast<Eigen::Index>(data.n_t()));
  const WeightedSample s_group = group_s_sample(data, fit.theta_s);
  double current = in_model_objective(data, fit);
  fit.converged = false;
  int cycle = 0;
  for (; cycle < cfg.max_cycles; ++cycle) {
    const double start = current;

    // w block; the ascent only accepts non-decreasing steps.
    AscentResult wres = in_model_weights(data, fit, lambda, fit.w, cfg.weights);
    FairFit trial = fit;
    trial.w = wres.weights;
    const double after_w = in_model_objective(data, trial);
    if (after_w >= current) {
      fit = trial;
      current = after_w;
    }

    // theta_T block: gradient of the joint objective, scaled by the
    // Gauss-Newton curvature of the loss plus the W2 term.
    const Eigen::VectorXd atoms = dt * fit.theta_t;
    const DiscreteGradient d = w2sq_discrete_discrete_gradient(
        s_group, WeightedSample(to_vector(atoms), fit.w));
    const Eigen::Map<const Eigen::VectorXd> wv(fit.w.data(), static_cast<Eigen::Index>(fit.w.size()));
    const Eigen::Map<const Eigen::VectorXd> datoms(d.atoms.data(), static_cast<Eigen::Index>(d.atoms.size()));
    const Eigen::VectorXd residual = yt - atoms;
    const Eigen::VectorXd grad =
        dt.transpose() * (wv.cwiseProduct(residual) / fit.sigma2 - (1.0 - lambda) * datoms);
    Eigen::MatrixXd curvature =
        dt.transpose() * wv.asDiagonal() * dt * (1.0 / fit.sigma2 + 2.0 * (1.0 - lambda));
    curvature.diagonal().array() += 1e-10 * std::max(1.0, curvature.diagonal().maxCoeff());
    const Eigen::VectorXd step = curvature.ldlt().solve(grad);
    if (step.allFinite()) {
      double t = 1.0;
      for (int attempt = 0; attempt < 40; ++attempt, t *= 0.5) {
        trial = fit;
        trial.theta_t = fit.theta_t + t * step;
        const double value = in_model_objective(data, trial);
        if (std::isfinite(value) && value > current) {
          fit = trial;
          current = value;
          break;
        }
      }
    }

    if (std::abs(current - start) < cfg.tolerance) {
      fit.converged = true;
      ++cycle;
      break;
    }
  }
  fit.iterations = cycle;
  finish(data, fit);
  fit.objective = current;
  return fit;
}

std::vector<double> silverman_bandwidths(const FairDataset& data) {
  const Eigen::MatrixXd xt = data.x.bottomRows(static_cast<Eigen::Index>(data.n_t()));
  const double n = static_cast<double>(xt.rows());
  const double p = static_cast<double>(xt.cols());
  const double factor = std::pow(4.0 / (p + 2.0), 1.0 / (p + 4.0)) * std::pow(n, -1.0 / (p + 4.0));
  std::vector<double> out(static_cast<std::size_t>(xt.cols()));
  for (Eigen::Index j = 0; j < xt.cols(); ++j) {
    const double mean = xt.col(j).mean();
    const double sd = n > 1.0 ? std::sqrt((xt.col(j).array() - mean).square().sum() / (n - 1.0)) : 0.0;
    out[static_cast<std::size_t>(j)] = sd > 0.0 ? factor * sd : 1.0;
  }
  return out;
}

FairPrediction predict_fair(const FairDataset& data, const FairFit& fit, const Eigen::VectorXd& x,
                            bool group_t, std::vector<double> bandwidths) {
  if (x.size() != data.x.cols()) throw DomainError("fairness: covariate length mismatch");
  Eigen::VectorXd xt(x.size() + 1);
  xt(0) = 1.0;
  xt.tail(x.size()) = x;
  FairPrediction out;
  if (!group_t) {
    out.value = xt.dot(fit.theta_s);
    return out;
  }
  if (bandwidths.empty()) bandwidths = silverman_bandwidths(data);
  if (bandwidths.size() != static_cast<std::size_t>(x.size()))
    throw DomainError("fairness: bandwidth length mismatch");
  for (double b : bandwidths)
    if (!(b > 0.0)) throw DomainError("fairness: bandwidths must be positive");

  const Eigen::MatrixXd tx = data.x.bottomRows(static_cast<Eigen::Index>(data.n_t()));
  const Eigen::VectorXd fitted = rows_t(data) * fit.theta_t;
  // Kernel weights in log space, shifted by the largest, so that a narrow
  // bandwidth still resolves the nearest points.
  std::vector<double> log_k(static_cast<std::size_t>(tx.rows()));
  double top = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < tx.rows(); ++i) {
    double e = 0.0;
    for (Eigen::Index j = 0; j < tx.cols(); ++j) {
      const double u = (x(j) - tx(i, j)) / bandwidths[static_cast<std::size_t>(j)];
      e -= 0.5 * u * u;
    }
    const double wi = fit.w[static_cast<std::size_t>(i)];
    log_k[static_cast<std::size_t>(i)] = wi > 0.0 ? e + std::log(wi) : -std::numeric_limits<double>::infinity();
    top = std::max(top, log_k[static_cast<std::size_t>(i)]);
  }
  // Gaussian kernel mass below exp(-700) everywhere counts as empty.
  if (!(top > -700.0)) {
    out.value = xt.dot(fit.theta_t);
    out.fallback = true;
    return out;
  }
  double num = 0.0;
  double den = 0.0;
  for (Eigen::Index i = 0; i < tx.rows(); ++i) {
    const double k = std::exp(log_k[static_cast<std::size_t>(i)] - top);
    num += k * fitted(i);
    den += k;
  }
  out.value = num / den;
  return out;
}

void validate(const FairSynthConfig& cfg) {
  if (cfg.n_s < cfg.p + 2 || cfg.n_t < cfg.p + 2)
    throw ConfigError("fairness synth: each group needs at least p + 2 records");
  if (!(cfg.noise > 0.0)) throw ConfigError("fairness synth: noise must be positive");
  if (!std::isfinite(cfg.gap) || !std::isfinite(cfg.slope_s) || !std::isfinite(cfg.slope_t) ||
      !std::isfinite(cfg.intercept_s))
    throw ConfigError("fairness synth: coefficients must be finite");
}

FairDataset synth_fair_data(const FairSynthConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Rng coef_rng = make_stream(seed, 0);
  Rng data_rng = make_stream(seed, 1);
  std::normal_distribution<double> normal;
  const auto p = static_cast<Eigen::Index>(cfg.p);
  const double scale = cfg.p > 0 ? 1.0 / std::sqrt(static_cast<double>(cfg.p)) : 0.0;
  Eigen::VectorXd beta_s(p), beta_t(p);
  for (Eigen::Index j = 0; j < p; ++j) beta_s(j) = cfg.slope_s * scale * normal(coef_rng);
  for (Eigen::Index j = 0; j < p; ++j) beta_t(j) = cfg.slope_t * scale * normal(coef_rng);

  FairDataset data;
  const auto n = static_cast<Eigen::Index>(cfg.n_s + cfg.n_t);
  data.n_s = cfg.n_s;
  data.x.resize(n, p);
  data.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) data.x(i, j) = normal(data_rng);
    const bool is_t = i >= static_cast<Eigen::Index>(cfg.n_s);
    const double mean = cfg.intercept_s + (is_t ? cfg.gap + data.x.row(i).dot(beta_t)
                                                : data.x.row(i).dot(beta_s));
    data.y(i) = mean + cfg.noise * normal(data_rng);
  }
  return data;
}

}  // namespace otrw
