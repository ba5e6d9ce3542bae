#include "otreweight/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <tuple>

#include "otreweight/error.hpp"

namespace otrw {

SortedAtoms::SortedAtoms(std::vector<double> atoms) : atoms_(std::move(atoms)) {
  for (double a : atoms_)
    if (!std::isfinite(a)) throw DomainError("transport: atoms must be finite");
  order_.resize(atoms_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::stable_sort(order_.begin(), order_.end(),
                   [this](std::size_t i, std::size_t j) { return atoms_[i] < atoms_[j]; });
}

CumulativeLevels cumulative_levels(const SortedAtoms& atoms, std::span<const double> weights) {
  const std::size_t m = atoms.size();
  CumulativeLevels out;
  out.lower.assign(m + 1, 0.0);
  out.upper.assign(m + 1, 0.0);
  for (std::size_t k = 0; k < m; ++k) out.lower[k + 1] = out.lower[k] + weights[atoms.order()[k]];
  for (std::size_t k = m; k-- > 0;) out.upper[k] = out.upper[k + 1] + weights[atoms.order()[k]];
  out.lower[m] = 1.0;
  out.upper[0] = 1.0;
  return out;
}

namespace {

void check_simplex(std::span<const double> w, std::size_t m) {
  if (w.size() != m) throw DomainError("transport: weight vector has the wrong length");
  if (m == 0) throw DomainError("transport: sample is empty");
  double total = 0.0;
  for (double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw DomainError("transport: weights must be finite and nonnegative");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) throw DomainError("transport: weights must sum to one");
}

}  // namespace

WeightedSample::WeightedSample(std::vector<double> atoms, std::vector<double> weights)
    : sorted_(std::move(atoms)), weights_(std::move(weights)) {
  check_simplex(weights_, sorted_.size());
  levels_ = cumulative_levels(sorted_, weights_);
}

WeightedSample WeightedSample::uniform(std::vector<double> atoms) {
  const std::size_t m = atoms.size();
  if (m == 0) throw DomainError("transport: sample is empty");
  std::vector<double> w(m, 1.0 / static_cast<double>(m));
  // Uniform weights may miss one by a few ulps for large m; absorb that in
  // the first entry so the simplex check is exact.
  double total = 0.0;
  for (double v : w) total += v;
  w[0] += 1.0 - total;
  return WeightedSample(std::move(atoms), std::move(w));
}

// Partial quantile moments of a standardized skew-normal Z with mean m0:
// M_k(c) = int_0^c (Q(q) - m0)^k dq for k = 1, 2, evaluated in x-space as
// int_{-inf}^{Q(c)} (z - m0)^k f(z) dz.
//
// Levels: geometric panels delta, 2 delta, ... up to the first uniform
// level, uniform panels of width 8 / nodes, and the mirror image at the top.
// Each panel is integrated with 8-point Gauss-Legendre in z; the two tails
// beyond delta use the 32-point half-line rule.
struct TransportTarget::Table {
  double shape = 0.0;
  double m0 = 0.0;
  double tail = 0.0;
  std::vector<double> lower;  // c_j
  std::vector<double> upper;  // 1 - c_j
  std::vector<double> x;      // Q(c_j)
  std::vector<double> m1;
  std::vector<double> m2;
  double total1 = 0.0;
  double total2 = 0.0;

  struct Partial {
    double x;
    double m1;
    double m2;
  };

  void add_panel(double a, double b, double& s1, double& s2) const {
    for_each_node(gauss8(), a, b, [&](double z, double wt) {
      const double y = z - m0;
      const double f = wt * standard_sn::pdf(z, shape);
      s1 += f * y;
      s2 += f * y * y;
    });
  }

  void lower_tail(double x_end, double level, double& s1, double& s2) const {
    const double dens = standard_sn::pdf(x_end, shape);
    double h = level / dens;
    if (!(dens > 0.0) || !std::isfinite(h)) h = 1.0 / std::max(1.0, std::abs(x_end));
    for_each_lower_tail_node(x_end, h, [&](double z, double wt) {
      const double y = z - m0;
      const double f = wt * standard_sn::pdf(z, shape);
      s1 += f * y;
      s2 += f * y * y;
    });
  }

  void upper_tail(double x_start, double level, double& s1, double& s2) const {
    const double dens = standard_sn::pdf(x_start, shape);
    double h = level / dens;
    if (!(dens > 0.0) || !std::isfinite(h)) h = 1.0 / std::max(1.0, std::abs(x_start));
    for_each_upper_tail_node(x_start, h, [&](double z, double wt) {
      const double y = z - m0;
      const double f = wt * standard_sn::pdf(z, shape);
      s1 += f * y;
      s2 += f * y * y;
    });
  }

  Table(double shape_, const QuadratureConfig& quad) : shape(shape_), tail(quad.tail) {
    m0 = standard_sn::mean(shape);
    const std::size_t panels = static_cast<std::size_t>((quad.nodes + 7) / 8);
    const double width = 1.0 / static_cast<double>(panels);

    std::vector<double> geometric;
    for (double level = tail; level < width && level < 0.5; level *= 2.0) geometric.push_back(level);
    if (geometric.empty()) geometric.push_back(tail);

    for (double level : geometric) {
      lower.push_back(level);
      upper.push_back(1.0 - level);
    }
    for (std::size_t k = 1; k < panels; ++k) {
      const double level = static_cast<double>(k) * width;
      if (level <= geometric.back() || level >= 1.0 - geometric.back()) continue;
      lower.push_back(level);
      upper.push_back(static_cast<double>(panels - k) * width);
    }
    for (std::size_t i = geometric.size(); i-- > 0;) {
      lower.push_back(1.0 - geometric[i]);
      upper.push_back(geometric[i]);
    }

    x.resize(lower.size());
    for (std::size_t j = 0; j < lower.size(); ++j)
      x[j] = lower[j] <= 0.5 ? standard_sn::quantile(lower[j], shape)
                             : standard_sn::upper_quantile(upper[j], shape);

    m1.assign(lower.size(), 0.0);
    m2.assign(lower.size(), 0.0);
    lower_tail(x[0], lower[0], m1[0], m2[0]);
    for (std::size_t j = 0; j + 1 < lower.size(); ++j) {
      double s1 = 0.0, s2 = 0.0;
      add_panel(x[j], x[j + 1], s1, s2);
      m1[j + 1] = m1[j] + s1;
      m2[j + 1] = m2[j] + s2;
    }
    double s1 = 0.0, s2 = 0.0;
    upper_tail(x.back(), upper.back(), s1, s2);
    total1 = m1.back() + s1;
    total2 = m2.back() + s2;
  }

  // c and u = 1 - c describe the same level; whichever is smaller is used.
  Partial partial(double c, double u) const {
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (c <= 0.0) return {-inf, 0.0, 0.0};
    if (u <= 0.0) return {inf, total1, total2};
    if (c < tail) {
      Partial p{standard_sn::quantile(c, shape), 0.0, 0.0};
      lower_tail(p.x, c, p.m1, p.m2);
      return p;
    }
    if (u < tail) {
      Partial p{standard_sn::upper_quantile(u, shape), 0.0, 0.0};
      double s1 = 0.0, s2 = 0.0;
      upper_tail(p.x, u, s1, s2);
      p.m1 = total1 - s1;
      p.m2 = total2 - s2;
      return p;
    }
    std::size_t j = 0;
    double z = 0.0;
    if (c <= 0.5) {
      j = static_cast<std::size_t>(std::upper_bound(lower.begin(), lower.end(), c) - lower.begin()) - 1;
      z = standard_sn::quantile(c, shape);
    } else {
      // upper is decreasing; find the last j with upper[j] >= u.
      j = static_cast<std::size_t>(
              std::upper_bound(upper.begin(), upper.end(), u, std::greater<double>()) -
              upper.begin()) - 1;
      z = standard_sn::upper_quantile(u, shape);
    }
    Partial p{z, m1[j], m2[j]};
    add_panel(x[j], z, p.m1, p.m2);
    return p;
  }
};

namespace {

std::shared_ptr<const TransportTarget::Table> shared_table(double shape,
                                                           const QuadratureConfig& quad) {
  static std::mutex mutex;
  static std::map<std::tuple<double, int, double>, std::shared_ptr<const TransportTarget::Table>>
      cache;
  const auto key = std::make_tuple(shape, quad.nodes, quad.tail);
  {
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  auto table = std::make_shared<const TransportTarget::Table>(shape, quad);
  std::lock_guard<std::mutex> lock(mutex);
  if (cache.size() >= 512) cache.clear();
  return cache.emplace(key, std::move(table)).first->second;
}

}  // namespace

TransportTarget::TransportTarget(const ParametricFamily& family, const QuadratureConfig& quad)
    : family_(family) {
  validate(quad);
  table_ = shared_table(family.shape(), quad);
}

TransportTarget::~TransportTarget() = default;
TransportTarget::TransportTarget(const TransportTarget&) = default;
TransportTarget& TransportTarget::operator=(const TransportTarget&) = default;

namespace {

struct Evaluation {
  double value;
  std::vector<double> quantile;  // Q(c_k) in original units, k = 1..m-1
};

// W2^2 = omega^2 sum_k int_{c_{k-1}}^{c_k} (t_k - (Q_std(q) - m0))^2 dq with
// t_k the standardized, mean-centred atom.
Evaluation evaluate(const TransportTarget::Table& table, const ParametricFamily& family,
                    const SortedAtoms& atoms, std::span<const double> weights, bool keep_quantiles) {
  const std::size_t m = atoms.size();
  if (weights.size() != m) throw DomainError("transport: weight vector has the wrong length");
  const CumulativeLevels levels = cumulative_levels(atoms, weights);
  const double omega = family.scale();
  const double centre = family.location() + omega * table.m0;

  Evaluation out{0.0, {}};
  if (keep_quantiles) out.quantile.resize(m > 0 ? m - 1 : 0);
  double prev1 = 0.0, prev2 = 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    double next1 = table.total1, next2 = table.total2;
    if (k + 1 < m) {
      const auto p = table.partial(levels.lower[k + 1], levels.upper[k + 1]);
      next1 = p.m1;
      next2 = p.m2;
      if (keep_quantiles) out.quantile[k] = family.location() + omega * p.x;
    }
    const double w = weights[atoms.order()[k]];
    const double t = (atoms.sorted(k) - centre) / omega;
    sum += t * t * w - 2.0 * t * (next1 - prev1) + (next2 - prev2);
    prev1 = next1;
    prev2 = next2;
  }
  out.value = std::max(0.0, omega * omega * sum);
  return out;
}

}  // namespace

double TransportTarget::w2sq(const SortedAtoms& atoms, std::span<const double> weights) const {
  return evaluate(*table_, family_, atoms, weights, false).value;
}

double TransportTarget::w2sq_with_gradient(const SortedAtoms& atoms,
                                           std::span<const double> weights,
                                           std::span<double> grad) const {
  const std::size_t m = atoms.size();
  if (grad.size() != m) throw DomainError("transport: gradient buffer has the wrong length");
  for (double w : weights)
    if (!(w > 0.0))
      throw DomainError("transport: the weight gradient needs strictly positive weights");
  const Evaluation ev = evaluate(*table_, family_, atoms, weights, true);
  // dW2^2/dc_k = (s_(k) - Q(c_k))^2 - (s_(k+1) - Q(c_k))^2; a weight in
  // sorted position j moves every c_k with k >= j.
  double suffix = 0.0;
  grad[atoms.order()[m - 1]] = 0.0;
  for (std::size_t k = m - 1; k-- > 0;) {
    const double q = ev.quantile[k];
    const double a = atoms.sorted(k) - q;
    const double b = atoms.sorted(k + 1) - q;
    suffix += a * a - b * b;
    grad[atoms.order()[k]] = suffix;
  }
  return ev.value;
}

double TransportTarget::w2sq_with_levels(const SortedAtoms& atoms,
                                         std::span<const double> weights,
                                         std::vector<double>& quantiles,
                                         std::vector<double>& densities) const {
  Evaluation ev = evaluate(*table_, family_, atoms, weights, true);
  densities.resize(ev.quantile.size());
  for (std::size_t k = 0; k < ev.quantile.size(); ++k) densities[k] = pdf(family_, ev.quantile[k]);
  quantiles = std::move(ev.quantile);
  return ev.value;
}

TransportTarget::Segments TransportTarget::uniform_segments(std::size_t n) const {
  if (n == 0) throw DomainError("transport: segment count must be positive");
  const Table& t = *table_;
  const double omega = family_.scale();
  const double centre = family_.location() + omega * t.m0;
  const double dn = static_cast<double>(n);
  Segments out;
  out.first.resize(n);
  out.second.resize(n);
  double prev1 = 0.0, prev2 = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    double next1 = t.total1, next2 = t.total2;
    if (k + 1 < n) {
      const auto p = t.partial(static_cast<double>(k + 1) / dn, static_cast<double>(n - k - 1) / dn);
      next1 = p.m1;
      next2 = p.m2;
    }
    const double dc = 1.0 / dn;
    const double d1 = next1 - prev1;
    const double d2 = next2 - prev2;
    out.first[k] = centre * dc + omega * d1;
    out.second[k] = centre * centre * dc + 2.0 * centre * omega * d1 + omega * omega * d2;
    prev1 = next1;
    prev2 = next2;
  }
  return out;
}

double w2sq_discrete_continuous(const WeightedSample& sample, const ParametricFamily& target,
                                const QuadratureConfig& quad) {
  return TransportTarget(target, quad).w2sq(sample.sorted_atoms(), sample.weights());
}

std::vector<double> grad_w2sq_weights(const WeightedSample& sample,
                                      const ParametricFamily& target,
                                      const QuadratureConfig& quad) {
  std::vector<double> grad(sample.size());
  TransportTarget(target, quad).w2sq_with_gradient(sample.sorted_atoms(), sample.weights(), grad);
  return grad;
}

namespace {

// Walks the merged breakpoints of two cumulative-weight sequences, calling
// fn(i, j, length) for each interval where a sits on sorted atom i and b on
// sorted atom j.
template <class F>
void merge_levels(const std::vector<double>& ca, const std::vector<double>& cb, F&& fn) {
  std::size_t i = 0, j = 0;
  double q = 0.0;
  const std::size_t ma = ca.size() - 1, mb = cb.size() - 1;
  while (i < ma && j < mb) {
    const double next = std::min(ca[i + 1], cb[j + 1]);
    if (next > q) fn(i, j, next - q);
    q = std::max(q, next);
    const bool adv_a = ca[i + 1] <= next;
    const bool adv_b = cb[j + 1] <= next;
    if (adv_a) ++i;
    if (adv_b) ++j;
  }
}

}  // namespace

double w2sq_discrete_discrete(const WeightedSample& a, const WeightedSample& b) {
  double sum = 0.0;
  merge_levels(a.cumulative(), b.cumulative(), [&](std::size_t i, std::size_t j, double len) {
    const double d = a.sorted_atoms().sorted(i) - b.sorted_atoms().sorted(j);
    sum += len * d * d;
  });
  return sum;
}

DiscreteGradient w2sq_discrete_discrete_gradient(const WeightedSample& a,
                                                 const WeightedSample& b) {
  const auto& sa = a.sorted_atoms();
  const auto& sb = b.sorted_atoms();
  const auto& ca = a.cumulative();
  const auto& cb = b.cumulative();
  const std::size_t mb = b.size();

  DiscreteGradient out{0.0, std::vector<double>(mb, 0.0), std::vector<double>(mb, 0.0)};
  merge_levels(ca, cb, [&](std::size_t i, std::size_t j, double len) {
    const double d = sb.sorted(j) - sa.sorted(i);
    out.value += len * d * d;
    out.atoms[sb.order()[j]] += 2.0 * len * d;
  });

  // Derivative with respect to each interior breakpoint c_k of b, then
  // suffix sums. a's quantile at c_k: the atom whose segment contains c_k,
  // averaged over both sides when c_k is one of a's breakpoints.
  std::vector<double> dc(mb, 0.0);
  std::size_t i = 0;
  for (std::size_t k = 0; k + 1 < mb; ++k) {
    const double c = cb[k + 1];
    while (i + 1 < a.size() && ca[i + 1] < c) ++i;
    const double lo = sb.sorted(k);
    const double hi = sb.sorted(k + 1);
    auto side = [&](double qa) { return (qa - lo) * (qa - lo) - (qa - hi) * (qa - hi); };
    if (i + 1 < a.size() && ca[i + 1] == c)
      dc[k] = 0.5 * (side(sa.sorted(i)) + side(sa.sorted(i + 1)));
    else
      dc[k] = side(sa.sorted(i));
  }
  double suffix = 0.0;
  for (std::size_t k = mb; k-- > 0;) {
    if (k + 1 < mb) suffix += dc[k];
    out.weights[sb.order()[k]] = suffix;
  }
  return out;
}

}  // namespace otrw
