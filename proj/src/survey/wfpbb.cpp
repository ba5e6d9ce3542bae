#include <algorithm>
#include <cmath>

#include "otreweight/error.hpp"
#include "otreweight/rng.hpp"
#include "otreweight/survey.hpp"

namespace otrw {

// Weighted Polya urn. With weights rescaled to sum to N, the k-th of the
// N - n urn draws picks unit i with probability proportional to
// (w_i - 1) + l_i (N - n) / n, where l_i counts earlier draws of i. The
// first part is a fixed distribution; the second is proportional to draw
// counts, i.e. a uniform pick among the earlier draws.
std::vector<std::vector<std::size_t>> wfpbb_resample(const Eigen::VectorXd& pi, std::size_t population,
                                                     int replicates, std::uint64_t seed) {
  const std::size_t n = static_cast<std::size_t>(pi.size());
  if (n == 0) throw DomainError("wfpbb: empty sample");
  if (population < n) throw DomainError("wfpbb: population size N must be at least n");
  if (replicates < 1) throw DomainError("wfpbb: need at least one replicate");
  for (double p : pi)
    if (!(p > 0.0) || !std::isfinite(p)) throw DomainError("wfpbb: weights must be positive");

  const double dn = static_cast<double>(n);
  const double extra = static_cast<double>(population - n);
  const double total_pi = pi.sum();
  std::vector<double> base_cumulative(n);
  double base_total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = pi(static_cast<Eigen::Index>(i)) * static_cast<double>(population) / total_pi;
    base_total += std::max(0.0, w - 1.0);
    base_cumulative[i] = base_total;
  }
  const double growth = extra / dn;

  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(replicates));
  for (int m = 0; m < replicates; ++m) {
    Rng rng = make_stream(seed, static_cast<std::uint64_t>(m));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<std::size_t> history;
    history.reserve(population - n);
    for (std::size_t k = 0; k < population - n; ++k) {
      const double draw_mass = growth * static_cast<double>(history.size());
      const double u = unit(rng) * (base_total + draw_mass);
      std::size_t pick;
      if (u < base_total || history.empty()) {
        pick = static_cast<std::size_t>(
            std::upper_bound(base_cumulative.begin(), base_cumulative.end(), std::min(u, base_total)) -
            base_cumulative.begin());
        pick = std::min(pick, n - 1);
      } else {
        std::uniform_int_distribution<std::size_t> earlier(0, history.size() - 1);
        pick = history[earlier(rng)];
      }
      history.push_back(pick);
    }
    // Pseudo-population: every observed unit once plus the urn draws. The
    // pseudo-sample is n i.i.d. uniform picks from it.
    std::uniform_int_distribution<std::size_t> member(0, population - 1);
    auto& sample = out[static_cast<std::size_t>(m)];
    sample.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = member(rng);
      sample[i] = j < n ? j : history[j - n];
    }
  }
  return out;
}

}  // namespace otrw
