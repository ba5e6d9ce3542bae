#include "otreweight/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/owens_t.hpp>

#include "otreweight/error.hpp"
#include "otreweight/quadrature.hpp"

namespace otrw {

ParametricFamily ParametricFamily::normal(double mean, double variance) {
  if (!std::isfinite(mean)) throw DomainError("normal: mean must be finite");
  if (!(variance > 0.0) || !std::isfinite(variance))
    throw DomainError("normal: variance must be positive and finite");
  return ParametricFamily(Kind::Normal, mean, std::sqrt(variance), 0.0);
}

ParametricFamily ParametricFamily::skew_normal(double location, double scale, double shape) {
  if (!std::isfinite(location) || !std::isfinite(shape))
    throw DomainError("skew-normal: location and shape must be finite");
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw DomainError("skew-normal: scale must be positive and finite");
  return ParametricFamily(Kind::SkewNormal, location, scale, shape);
}

std::string ParametricFamily::describe() const {
  std::ostringstream out;
  out.precision(17);
  if (kind_ == Kind::Normal)
    out << "Normal(mean=" << location_ << ", variance=" << scale_ * scale_ << ")";
  else
    out << "SkewNormal(location=" << location_ << ", scale=" << scale_ << ", shape=" << shape_
        << ")";
  return out.str();
}

namespace standard_sn {

namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double phi(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }
double Phi(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// P(Z <= z) for z <= 0.
double lower_cdf(double z, double shape) {
  if (shape == 0.0) return Phi(z);
  const double base = Phi(z);
  const double direct = base - 2.0 * boost::math::owens_t(z, shape);
  // For shape > 0 the lower tail is thinner than the normal one and the
  // difference cancels; integrate the density directly once it does.
  if (shape < 0.0 || direct >= 1e-2 * base) return direct;
  const double a = 1.0 + shape * shape;
  const double h = std::min(1.0 / (a * std::abs(z)), 1.0 / std::sqrt(a));
  double sum = 0.0;
  for_each_lower_tail_node(z, h, [&](double t, double wt) { sum += wt * pdf(t, shape); });
  return sum;
}

}  // namespace

double pdf(double z, double shape) {
  if (shape == 0.0) return phi(z);
  return 2.0 * phi(z) * Phi(shape * z);
}

double cdf(double z, double shape) {
  if (z <= 0.0) return lower_cdf(z, shape);
  return 1.0 - lower_cdf(-z, -shape);
}

double sf(double z, double shape) {
  if (z >= 0.0) return lower_cdf(-z, -shape);
  return 1.0 - lower_cdf(z, shape);
}

double mean(double shape) {
  const double delta = shape / std::sqrt(1.0 + shape * shape);
  return delta * std::sqrt(2.0 / std::numbers::pi);
}

namespace {

// Solves cdf(z) = q for q <= 0.5 by Newton steps on log cdf, falling back to
// bisection whenever a step leaves the bracket.
double solve_lower(double q, double shape) {
  const double z_normal = -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * q);
  const double m = mean(shape);
  const double sd = std::sqrt(1.0 - m * m);
  double lo = m + sd * z_normal - 10.0;
  double hi = m + sd * z_normal + 10.0;
  while (cdf(lo, shape) > q) lo -= 2.0 * (hi - lo);
  while (cdf(hi, shape) < q) hi += 2.0 * (hi - lo);

  const double log_q = std::log(q);
  double z = std::clamp(m + sd * z_normal, lo, hi);
  for (int iter = 0; iter < 200; ++iter) {
    const double f = cdf(z, shape);
    if (std::abs(f - q) <= 1e-13 * q) return z;
    if (f < q)
      lo = z;
    else
      hi = z;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(z)))
      return z;
    double next = std::numeric_limits<double>::quiet_NaN();
    const double dens = pdf(z, shape);
    if (f > 0.0 && dens > 0.0) next = z - (std::log(f) - log_q) * f / dens;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    z = next;
  }
  return z;
}

}  // namespace

double quantile(double q, double shape) {
  if (!(q > 0.0 && q < 1.0)) throw DomainError("quantile: level must lie in (0, 1)");
  if (q > 0.5) return upper_quantile(1.0 - q, shape);
  if (shape == 0.0) return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * q);
  return solve_lower(q, shape);
}

double upper_quantile(double u, double shape) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("quantile: level must lie in (0, 1)");
  if (u > 0.5) return quantile(1.0 - u, shape);
  // X ~ SN(shape) implies -X ~ SN(-shape).
  if (shape == 0.0) return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u);
  return -solve_lower(u, -shape);
}

}  // namespace standard_sn

double pdf(const ParametricFamily& family, double x) {
  const double z = (x - family.location()) / family.scale();
  return standard_sn::pdf(z, family.shape()) / family.scale();
}

double cdf(const ParametricFamily& family, double x) {
  return standard_sn::cdf((x - family.location()) / family.scale(), family.shape());
}

double survival(const ParametricFamily& family, double x) {
  return standard_sn::sf((x - family.location()) / family.scale(), family.shape());
}

double quantile(const ParametricFamily& family, double q) {
  return family.location() + family.scale() * standard_sn::quantile(q, family.shape());
}

double upper_quantile(const ParametricFamily& family, double u) {
  return family.location() + family.scale() * standard_sn::upper_quantile(u, family.shape());
}

Moments moments(const ParametricFamily& family) {
  const double alpha = family.shape();
  const double delta = alpha / std::sqrt(1.0 + alpha * alpha);
  const double b = std::sqrt(2.0 / std::numbers::pi);
  const double bd = b * delta;
  const double omega = family.scale();
  Moments out{};
  out.mean = family.location() + omega * bd;
  out.variance = omega * omega * (1.0 - bd * bd);
  out.skewness = 0.5 * (4.0 - std::numbers::pi) * bd * bd * bd / std::pow(1.0 - bd * bd, 1.5);
  return out;
}

ParametricFamily skew_normal_from_moments(const TargetMoments& target) {
  if (!(target.variance > 0.0) || !std::isfinite(target.variance))
    throw DomainError("skew-normal moments: variance must be positive");
  if (!std::isfinite(target.mean) || !std::isfinite(target.skewness))
    throw DomainError("skew-normal moments: mean and skewness must be finite");
  if (std::abs(target.skewness) >= kMaxSkewNormalSkewness) {
    std::ostringstream msg;
    msg << "skew-normal moments: |skewness| = " << std::abs(target.skewness)
        << " is not below the skew-normal bound " << kMaxSkewNormalSkewness;
    throw DomainError(msg.str());
  }
  const double b = std::sqrt(2.0 / std::numbers::pi);
  // Invert gamma = ((4 - pi)/2) (b d)^3 / (1 - (b d)^2)^{3/2} for (b d)^2.
  const double c = std::pow(2.0 * std::abs(target.skewness) / (4.0 - std::numbers::pi), 2.0 / 3.0);
  const double bd_sq = c / (1.0 + c);
  const double delta = std::copysign(std::sqrt(bd_sq) / b, target.skewness);
  const double alpha = target.skewness == 0.0 ? 0.0 : delta / std::sqrt(1.0 - delta * delta);
  const double omega = std::sqrt(target.variance / (1.0 - bd_sq));
  const double zeta = target.mean - omega * b * delta;
  return ParametricFamily::skew_normal(zeta, omega, alpha);
}

}  // namespace otrw
