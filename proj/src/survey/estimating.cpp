#include <cmath>

#include "otreweight/error.hpp"
#include "otreweight/survey.hpp"

namespace otrw {

SurveySample make_survey_sample(Eigen::MatrixXd x, const Eigen::VectorXd& raw_weights) {
  if (x.rows() != raw_weights.size())
    throw DomainError("survey: weight count does not match the number of observations");
  if (x.rows() == 0) throw DomainError("survey: empty sample");
  if (!x.allFinite()) throw DomainError("survey: observations must be finite");
  for (double p : raw_weights)
    if (!(p > 0.0) || !std::isfinite(p))
      throw DomainError("survey: weights must be positive and finite");
  SurveySample out;
  out.x = std::move(x);
  out.pi = raw_weights * (static_cast<double>(raw_weights.size()) / raw_weights.sum());
  return out;
}

EstimatingFunction mean_deviation() {
  EstimatingFunction g;
  g.tag = "mean-deviation";
  g.dimension = 1;
  g.parameters = 2;
  g.evaluate = [](const Eigen::MatrixXd& x, const Eigen::VectorXd& theta) {
    Eigen::MatrixXd out = x.col(0).array() - theta(0);
    return out;
  };
  return g;
}

EstimatingFunction logistic_score(int covariates) {
  if (covariates < 0) throw ConfigError("logistic score: negative covariate count");
  EstimatingFunction g;
  g.tag = "logistic-score";
  g.dimension = covariates + 1;
  g.parameters = covariates + 1;
  g.evaluate = [covariates](const Eigen::MatrixXd& x, const Eigen::VectorXd& beta) {
    if (x.cols() != covariates + 1)
      throw DomainError("logistic score: rows must hold (y, z_1..z_k)");
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd design(n, covariates + 1);
    design.col(0).setOnes();
    design.rightCols(covariates) = x.rightCols(covariates);
    const Eigen::VectorXd eta = design * beta;
    Eigen::MatrixXd out(n, covariates + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = 1.0 / (1.0 + std::exp(-eta(i)));
      out.row(i) = (x(i, 0) - p) * design.row(i);
    }
    return out;
  };
  return g;
}

}  // namespace otrw
