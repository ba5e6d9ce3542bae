#include <cmath>
#include <numbers>
#include <random>

#include "otreweight/error.hpp"
#include "otreweight/rng.hpp"
#include "otreweight/survey.hpp"

namespace otrw {

void validate(const SimulationConfig& cfg) {
  if (cfg.n < 2) throw ConfigError("survey: n must be at least 2");
  if (cfg.population < cfg.n) throw ConfigError("survey: population must be at least n");
  if (!(cfg.rho > -1.0 && cfg.rho < 1.0)) throw ConfigError("survey: rho must lie in (-1, 1)");
  if (!(cfg.var_x > 0.0) || !(cfg.var_z > 0.0))
    throw ConfigError("survey: variances must be positive");
  if (!std::isfinite(cfg.mu_x) || !std::isfinite(cfg.mu_z) || !std::isfinite(cfg.beta0) ||
      !std::isfinite(cfg.beta1))
    throw ConfigError("survey: means and selection coefficients must be finite");
  if (cfg.replicates < 1) throw ConfigError("survey: replicates must be at least 1");
  if (cfg.bootstrap < 1) throw ConfigError("survey: bootstrap replicates must be at least 1");
}

Population simulate_population(const SimulationConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Rng rng = make_stream(seed, 0);
  std::normal_distribution<double> normal;
  const double sx = std::sqrt(cfg.var_x);
  const double sz = std::sqrt(cfg.var_z);
  const double resid = std::sqrt(1.0 - cfg.rho * cfg.rho);
  Population pop;
  const auto size = static_cast<Eigen::Index>(cfg.population);
  pop.x.resize(size);
  pop.z.resize(size);
  for (Eigen::Index s = 0; s < size; ++s) {
    const double e1 = normal(rng);
    const double e2 = normal(rng);
    pop.z(s) = cfg.mu_z + sz * e1;
    pop.x(s) = cfg.mu_x + sx * (cfg.rho * e1 + resid * e2);
  }
  return pop;
}

double inclusion_probability(const SimulationConfig& cfg, double z) {
  // Z is standardized before entering the probit; with Z on its raw scale
  // (mean 10) beta1 = -1.8 would give essentially zero inclusion probability.
  const double eta = cfg.beta0 + cfg.beta1 * (z - cfg.mu_z) / std::sqrt(cfg.var_z);
  return 0.5 * std::erfc(-eta / std::numbers::sqrt2);
}

SurveySample draw_sample(const SimulationConfig& cfg, const Population& population,
                         std::uint64_t seed, std::uint64_t stream) {
  validate(cfg);
  const auto size = static_cast<std::size_t>(population.x.size());
  if (size < cfg.n) throw ConfigError("survey: population smaller than n");
  Rng rng = make_stream(seed, 1, stream);
  std::uniform_int_distribution<std::size_t> unit(0, size - 1);
  std::uniform_real_distribution<double> accept(0.0, 1.0);
  std::vector<char> taken(size, 0);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(cfg.n), 1);
  Eigen::VectorXd inverse(static_cast<Eigen::Index>(cfg.n));
  std::size_t got = 0;
  std::size_t attempts = 0;
  while (got < cfg.n) {
    if (++attempts > 1000 * size) throw NumericalError("survey: sampling did not fill the sample");
    const std::size_t s = unit(rng);
    if (taken[s]) continue;
    const double p = inclusion_probability(cfg, population.z(static_cast<Eigen::Index>(s)));
    if (accept(rng) >= p) continue;
    taken[s] = 1;
    x(static_cast<Eigen::Index>(got), 0) = population.x(static_cast<Eigen::Index>(s));
    inverse(static_cast<Eigen::Index>(got)) = 1.0 / p;
    ++got;
  }
  return make_survey_sample(std::move(x), inverse);
}

}  // namespace otrw
