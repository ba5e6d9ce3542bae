#include "otreweight/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "otreweight/error.hpp"

namespace otrw {

void validate(const SolverConfig& cfg) {
  if (cfg.max_iterations <= 0) throw ConfigError("solver: max_iterations must be positive");
  if (!(cfg.tolerance > 0.0)) throw ConfigError("solver: tolerance must be positive");
  if (!(cfg.initial_step > 0.0)) throw ConfigError("solver: initial_step must be positive");
  if (!(cfg.backtracking > 0.0 && cfg.backtracking < 1.0))
    throw ConfigError("solver: backtracking must lie in (0, 1)");
}

double entropy(std::span<const double> w) {
  double h = 0.0;
  for (double v : w)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

std::vector<double> project_to_simplex(std::span<const double> v) {
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    cumulative += u[k];
    const double t = (cumulative - 1.0) / static_cast<double>(k + 1);
    if (u[k] - t > 0.0) theta = t;
  }
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(0.0, v[i] - theta);
  return out;
}

namespace {

// w = softmax(log_w) with the floor applied; returns false if non-finite.
bool normalize(std::vector<double>& log_w, std::vector<double>& w) {
  const double top = *std::max_element(log_w.begin(), log_w.end());
  if (!std::isfinite(top)) return false;
  double total = 0.0;
  for (double v : log_w) total += std::exp(v - top);
  const double lse = top + std::log(total);
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    log_w[i] = std::max(log_w[i] - lse, kLogWeightFloor);
    w[i] = std::exp(log_w[i]);
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return true;
}

std::string describe(const std::vector<double>& w, double value, int iteration) {
  std::ostringstream out;
  out << "iteration " << iteration << ", objective " << value << ", weights [";
  for (std::size_t i = 0; i < std::min<std::size_t>(w.size(), 8); ++i) out << (i ? ", " : "") << w[i];
  if (w.size() > 8) out << ", ...";
  out << "]";
  return out.str();
}

constexpr double kMaxLogStep = 20.0;

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

AscentResult exponentiated_gradient_ascent(std::vector<double> start, const SimplexObjective& f,
                                           const SolverConfig& cfg) {
  validate(cfg);
  const std::size_t m = start.size();
  if (m == 0) throw DomainError("simplex solver: empty weight vector");

  std::vector<double> log_w(m), w(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (!(start[i] > 0.0)) throw DomainError("simplex solver: start must be interior");
    log_w[i] = std::log(start[i]);
  }
  normalize(log_w, w);

  std::vector<double> grad(m), trial_grad(m), trial_log(m), trial_w(m);
  double value = f(w, grad);
  if (!std::isfinite(value) || !all_finite(grad))
    throw NumericalError("simplex solver: non-finite objective or gradient at start; " +
                         describe(w, value, 0));

  AscentResult result;
  double step = cfg.initial_step;
  int iteration = 0;
  for (; iteration < cfg.max_iterations; ++iteration) {
    // The gradient is only defined up to a constant on the simplex;
    // centring it keeps the trial log-weights well scaled.
    double mean_grad = 0.0;
    for (std::size_t i = 0; i < m; ++i) mean_grad += w[i] * grad[i];
    // Stationary on the simplex: the gradient is constant on the support.
    double spread = 0.0;
    double largest = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      spread += w[i] * (grad[i] - mean_grad) * (grad[i] - mean_grad);
      largest = std::max(largest, std::abs(grad[i] - mean_grad));
    }
    if (spread <= 1e-3 * cfg.tolerance * std::max(1.0, std::abs(value))) {
      result.converged = true;
      break;
    }

    // No weight moves by more than a factor exp(kMaxLogStep) per iteration,
    // so a large first gradient cannot push weights onto the floor where
    // they would take many iterations to recover.
    if (step * largest > kMaxLogStep) step = kMaxLogStep / largest;

    bool accepted = false;
    bool saw_finite = false;
    double trial_value = value;
    int attempt = 0;
    for (; attempt < 80; ++attempt) {
      for (std::size_t i = 0; i < m; ++i) trial_log[i] = log_w[i] + step * (grad[i] - mean_grad);
      if (normalize(trial_log, trial_w)) {
        trial_value = f(trial_w, trial_grad);
        if (std::isfinite(trial_value) && all_finite(trial_grad)) {
          saw_finite = true;
          if (trial_value >= value) {
            accepted = true;
            break;
          }
        }
      }
      step *= cfg.backtracking;
    }
    if (!accepted) {
      if (!saw_finite)
        throw NumericalError("simplex solver: every trial step was non-finite; " +
                             describe(w, value, iteration));
      result.converged = true;
      break;
    }
    const double change = trial_value - value;
    log_w.swap(trial_log);
    w.swap(trial_w);
    grad.swap(trial_grad);
    value = trial_value;
    // Grow the step only after a full step was accepted; otherwise the next
    // iteration starts from the length that just worked.
    if (attempt == 0) step = std::min(step / cfg.backtracking, cfg.initial_step);
    // A small change after a step shorter than the previous one says little
    // about optimality; only steps at least that long can end the run here.
    if (attempt <= 1 && change <= cfg.tolerance * std::max(1.0, std::abs(value))) {
      result.converged = true;
      ++iteration;
      break;
    }
  }
  result.weights = std::move(w);
  result.objective = value;
  result.iterations = iteration;
  return result;
}

}  // namespace otrw
