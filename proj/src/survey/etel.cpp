#include <cmath>

#include "otreweight/error.hpp"
#include "otreweight/survey.hpp"

namespace otrw {

namespace {

// log sum_i exp(v_i) and the softmax of v.
double log_sum_exp(const Eigen::VectorXd& v, Eigen::VectorXd* softmax) {
  const double top = v.maxCoeff();
  const Eigen::ArrayXd e = (v.array() - top).exp();
  const double total = e.sum();
  if (softmax) *softmax = (e / total).matrix();
  return top + std::log(total);
}

}  // namespace

EtelResult etel(const Eigen::MatrixXd& g, const Eigen::VectorXd& pi) {
  const Eigen::Index n = g.rows();
  const Eigen::Index r = g.cols();
  if (pi.size() != n) throw DomainError("etel: weight count does not match g");
  if (n == 0) throw DomainError("etel: empty sample");
  if (!g.allFinite()) throw DomainError("etel: non-finite estimating-function values");

  // The minimizer of n^-1 sum exp(a_i' eta) also minimizes the log of that
  // sum, which is better conditioned: a_i = pi_i g_i.
  const Eigen::MatrixXd a = g.array().colwise() * pi.array();
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());

  EtelResult out;
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(r);
  Eigen::VectorXd p(n);
  double value = log_sum_exp(a * eta, &p);
  bool converged = false;
  int iter = 0;
  for (; iter < 500; ++iter) {
    const Eigen::VectorXd grad = a.transpose() * p;
    if (grad.norm() <= 1e-11 * scale) {
      converged = true;
      break;
    }
    const Eigen::MatrixXd hess =
        a.transpose() * p.asDiagonal() * a - grad * grad.transpose();
    const double ridge = 1e-14 * std::max(hess.trace(), 1e-300);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess + ridge * Eigen::MatrixXd::Identity(r, r));
    Eigen::VectorXd dir = -grad;
    if (ldlt.info() == Eigen::Success && (ldlt.vectorD().array() > 0.0).all()) dir = -ldlt.solve(grad);
    const double slope = grad.dot(dir);
    double t = 1.0;
    Eigen::VectorXd p_next(n);
    double next = log_sum_exp(a * (eta + dir), &p_next);
    if (!(next <= value + 1e-4 * slope)) {
      // Close to the root the decrease falls below rounding in the value;
      // the full Newton step is still taken when it shrinks the gradient.
      const bool newton_helps =
          std::isfinite(next) && (a.transpose() * p_next).norm() < 0.5 * grad.norm();
      if (!newton_helps) {
        while (!(next <= value + 1e-4 * t * slope) && t > 1e-20) {
          t *= 0.5;
          next = log_sum_exp(a * (eta + t * dir), &p_next);
        }
        if (!(next < value)) {
          // No decrease left in double precision. Inside the hull the
          // gradient is then at rounding level; outside it stays bounded
          // away from zero.
          converged = grad.norm() <= 1e-8 * scale;
          break;
        }
      }
    }
    eta += t * dir;
    value = next;
    p = p_next;
    // Outside the hull the infimum is approached only as |eta| -> inf.
    if (eta.norm() > 1e6) break;
  }
  out.iterations = iter;
  out.lambda = eta;
  if (!converged) return out;

  out.hull_ok = true;
  out.weights.assign(p.data(), p.data() + n);
  const Eigen::VectorXd v = a * eta;
  out.loglik = (v.array() - value).sum();
  return out;
}

EtelResult etel(const Eigen::VectorXd& theta, const Eigen::MatrixXd& x, const Eigen::VectorXd& pi,
                const EstimatingFunction& g) {
  const Eigen::MatrixXd values = g.evaluate(x, theta);
  if (!values.allFinite()) throw DomainError("etel: non-finite estimating-function values");
  return etel(values, pi);
}

}  // namespace otrw
