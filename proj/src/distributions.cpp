#include "tiee/distributions.hpp"

#include <cmath>
#include <numbers>

#include "tiee/errors.hpp"

namespace tiee::dist {

namespace {
void require_open_unit(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("probability must lie in (0,1)");
}
}  // namespace

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_quantile(double p) {
  require_open_unit(p);
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= 1 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const double q = std::sqrt(-2 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  // Halley refinement against the erfc-based CDF; tail side avoids cancellation.
  const double e = (p < 0.5) ? normal_cdf(x) - p : -(0.5 * std::erfc(x / std::numbers::sqrt2) - (1 - p));
  const double u = e * std::sqrt(2 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1 + 0.5 * x * u);
}

double student_t3_cdf(double t) {
  const double s = t / std::sqrt(3.0);
  return 0.5 + (std::atan(s) + s / (1 + s * s)) / std::numbers::pi;
}

double student_t3_quantile(double p) {
  require_open_unit(p);
  if (p == 0.5) return 0.0;
  const double q = p < 0.5 ? p : 1.0 - p;  // exact for p >= 0.5
  const double target = std::numbers::pi * q;
  // h(eps) = eps - sin(2 eps)/2 is the upper-tail mass (times pi) at
  // t = sqrt(3) cot(eps); it is increasing and convex on (0, pi/2].
  auto h = [](double eps) {
    if (eps < 0.1) {
      const double e2 = eps * eps;
      return eps * e2 * (2.0 / 3 - e2 * (2.0 / 15 - e2 * (4.0 / 315 - e2 * (2.0 / 2835))));
    }
    return eps - 0.5 * std::sin(2 * eps);
  };
  const double half_pi = 0.5 * std::numbers::pi;
  double eps = std::min(std::cbrt(1.5 * target), half_pi);
  for (int it = 0; it < 100; ++it) {
    const double s = std::sin(eps);
    const double slope = 2 * s * s;
    double next = eps - (h(eps) - target) / slope;
    if (!(next > 0.0)) next = 0.5 * eps;
    if (next > half_pi) next = half_pi;
    const bool done = std::abs(next - eps) <= 4e-16 * eps;
    eps = next;
    if (done) break;
  }
  const double t = std::sqrt(3.0) / std::tan(eps);
  return p < 0.5 ? -t : t;
}

double frechet_quantile(double p, double shape, double scale) {
  require_open_unit(p);
  return scale * std::pow(-std::log(p), -1.0 / shape);
}

double pareto_quantile(double p, double shape, double scale) {
  require_open_unit(p);
  return scale * std::pow(1.0 - p, -1.0 / shape);
}

double weibull_quantile(double p, double shape, double scale) {
  require_open_unit(p);
  return scale * std::pow(-std::log1p(-p), 1.0 / shape);
}

double exponential_quantile(double p, double rate) {
  require_open_unit(p);
  return -std::log1p(-p) / rate;
}

}  // namespace tiee::dist
