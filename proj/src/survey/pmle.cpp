#include <cmath>

#include "otreweight/error.hpp"
#include "otreweight/survey.hpp"

namespace otrw {

namespace {

void attach_intervals(PmleFit& fit) {
  const Eigen::Index p = fit.theta.size();
  fit.ci_lower.resize(p);
  fit.ci_upper.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double se = std::sqrt(std::max(0.0, fit.covariance(j, j)));
    fit.ci_lower(j) = fit.theta(j) - kNormalQuantile975 * se;
    fit.ci_upper(j) = fit.theta(j) + kNormalQuantile975 * se;
  }
}

Eigen::MatrixXd sandwich(const Eigen::MatrixXd& h, const Eigen::MatrixXd& v, double n) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(h);
  if (!lu.isInvertible()) throw FitError("pmle: H_pi is singular");
  const Eigen::MatrixXd h_inv = lu.inverse();
  Eigen::MatrixXd cov = h_inv * v * h_inv.transpose() / n;
  return 0.5 * (cov + cov.transpose());
}

}  // namespace

PmleFit pmle_normal(const SurveySample& sample) {
  const Eigen::Index n = sample.x.rows();
  if (n < 2) throw FitError("pmle: need at least two observations");
  const Eigen::VectorXd x = sample.x.col(0);
  const Eigen::VectorXd& pi = sample.pi;
  const double dn = static_cast<double>(n);

  const double mu = pi.dot(x) / dn;
  const double s2 = (pi.array() * (x.array() - mu).square()).sum() / dn;
  if (!(s2 > 0.0)) throw FitError("pmle: weighted variance is zero");

  PmleFit fit;
  fit.theta = Eigen::Vector2d(mu, s2);
  fit.h = Eigen::Matrix2d::Zero();
  fit.v = Eigen::Matrix2d::Zero();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = x(i) - mu;
    const Eigen::Vector2d score(r / s2, -0.5 / s2 + 0.5 * r * r / (s2 * s2));
    Eigen::Matrix2d hess;
    hess << -1.0 / s2, -r / (s2 * s2), -r / (s2 * s2), 0.5 / (s2 * s2) - r * r / (s2 * s2 * s2);
    fit.h += pi(i) * hess;
    fit.v += pi(i) * score * score.transpose();
  }
  fit.h /= dn;
  fit.v /= dn;
  fit.covariance = sandwich(fit.h, fit.v, dn);
  attach_intervals(fit);
  return fit;
}

PmleFit pmle_logistic(const SurveySample& sample) {
  const Eigen::Index n = sample.x.rows();
  const Eigen::Index k = sample.x.cols() - 1;
  if (k < 0) throw FitError("pmle: logistic model needs a response column");
  Eigen::MatrixXd design(n, k + 1);
  design.col(0).setOnes();
  design.rightCols(k) = sample.x.rightCols(k);
  const Eigen::VectorXd y = sample.x.col(0);
  const Eigen::VectorXd& pi = sample.pi;
  const double dn = static_cast<double>(n);

  auto loglik = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = design * beta;
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      // log(1 + e^eta) without overflow
      const double softplus = eta(i) > 0 ? eta(i) + std::log1p(std::exp(-eta(i)))
                                         : std::log1p(std::exp(eta(i)));
      total += pi(i) * (y(i) * eta(i) - softplus);
    }
    return total;
  };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k + 1);
  Eigen::MatrixXd hess(k + 1, k + 1);
  Eigen::VectorXd grad(k + 1);
  double current = loglik(beta);
  bool converged = false;
  for (int iter = 0; iter < 100; ++iter) {
    const Eigen::VectorXd eta = design * beta;
    grad.setZero();
    hess.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = 1.0 / (1.0 + std::exp(-eta(i)));
      grad += pi(i) * (y(i) - p) * design.row(i).transpose();
      hess -= pi(i) * p * (1.0 - p) * design.row(i).transpose() * design.row(i);
    }
    if (grad.norm() <= 1e-10 * dn) {
      converged = true;
      break;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(-hess);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all())
      throw FitError("pmle: logistic information matrix is singular");
    const Eigen::VectorXd step = ldlt.solve(grad);
    double t = 1.0;
    double next = loglik(beta + step);
    while (next < current && t > 1e-12) {
      t *= 0.5;
      next = loglik(beta + t * step);
    }
    beta += t * step;
    current = next;
  }
  if (!converged) throw FitError("pmle: logistic Newton iterations did not converge");

  PmleFit fit;
  fit.theta = beta;
  fit.h = Eigen::MatrixXd::Zero(k + 1, k + 1);
  fit.v = Eigen::MatrixXd::Zero(k + 1, k + 1);
  const Eigen::VectorXd eta = design * beta;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-eta(i)));
    const Eigen::VectorXd score = (y(i) - p) * design.row(i).transpose();
    fit.h -= pi(i) * p * (1.0 - p) * design.row(i).transpose() * design.row(i);
    fit.v += pi(i) * score * score.transpose();
  }
  fit.h /= dn;
  fit.v /= dn;
  fit.covariance = sandwich(fit.h, fit.v, dn);
  attach_intervals(fit);
  return fit;
}

PmleFit mle_normal(const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  if (n < 2) throw FitError("mle: need at least two observations");
  const double dn = static_cast<double>(n);
  const double mu = x.mean();
  const double s2 = (x.array() - mu).square().sum() / dn;
  if (!(s2 > 0.0)) throw FitError("mle: variance is zero");
  PmleFit fit;
  fit.theta = Eigen::Vector2d(mu, s2);
  // Observed information at the MLE is n diag(1/s2, 1/(2 s2^2)).
  fit.h = Eigen::Matrix2d::Zero();
  fit.h(0, 0) = -1.0 / s2;
  fit.h(1, 1) = -0.5 / (s2 * s2);
  fit.v = -fit.h;
  fit.covariance = Eigen::Matrix2d::Zero();
  fit.covariance(0, 0) = s2 / dn;
  fit.covariance(1, 1) = 2.0 * s2 * s2 / dn;
  attach_intervals(fit);
  return fit;
}

}  // namespace otrw
