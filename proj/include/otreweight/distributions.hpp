#pragma once

#include <string>

namespace otrw {

// Supremum of |skewness| over the skew-normal family (the delta -> 1 limit).
inline constexpr double kMaxSkewNormalSkewness = 0.99527;

// Continuous target f_theta. A Normal(mu, s2) is stored as its skew-normal
// equivalent (location mu, scale sqrt(s2), shape 0) plus a tag, so both
// variants share one evaluation path and agree exactly at shape 0.
class ParametricFamily {
 public:
  enum class Kind { Normal, SkewNormal };

  static ParametricFamily normal(double mean, double variance);
  static ParametricFamily skew_normal(double location, double scale, double shape);

  Kind kind() const { return kind_; }
  double location() const { return location_; }
  double scale() const { return scale_; }
  double shape() const { return shape_; }
  // Normal parameters; for a skew-normal these are location and scale^2.
  double mean_parameter() const { return location_; }
  double variance_parameter() const { return scale_ * scale_; }

  std::string describe() const;

 private:
  ParametricFamily(Kind kind, double location, double scale, double shape)
      : kind_(kind), location_(location), scale_(scale), shape_(shape) {}

  Kind kind_;
  double location_;
  double scale_;
  double shape_;
};

struct Moments {
  double mean;
  double variance;
  double skewness;
};

// Target (mean, variance, skewness) of a portfolio return distribution.
struct TargetMoments {
  double mean;
  double variance;
  double skewness;
};

double pdf(const ParametricFamily& family, double x);
double cdf(const ParametricFamily& family, double x);
// 1 - cdf, computed without cancellation in the upper tail.
double survival(const ParametricFamily& family, double x);
// Throws DomainError unless 0 < q < 1.
double quantile(const ParametricFamily& family, double q);
// quantile(1 - u) evaluated from u directly, so levels within 1e-16 of one
// stay resolvable.
double upper_quantile(const ParametricFamily& family, double u);
Moments moments(const ParametricFamily& family);

// Throws DomainError naming kMaxSkewNormalSkewness when |skewness| is too
// large, and when the variance is not positive.
ParametricFamily skew_normal_from_moments(const TargetMoments& target);

// Standardized skew-normal with location 0 and scale 1; shape 0 is N(0, 1).
namespace standard_sn {

double pdf(double z, double shape);
double cdf(double z, double shape);
double sf(double z, double shape);
double quantile(double q, double shape);
double upper_quantile(double u, double shape);
double mean(double shape);

}  // namespace standard_sn

}  // namespace otrw
