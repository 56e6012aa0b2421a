#pragma once

// Closed-form or iterated inverse CDFs used by the data-generating processes,
// plus the standard normal quantile used by the confidence intervals.

namespace tiee::dist {

double normal_cdf(double z);
/// Acklam's rational approximation refined by one Halley step (|err| < 1e-14).
double normal_quantile(double p);

/// Student-t with 3 degrees of freedom. The CDF is elementary; the inverse is
/// obtained by a safeguarded Newton solve in the angle t = sqrt(3) cot(eps).
double student_t3_cdf(double t);
double student_t3_quantile(double p);

double frechet_quantile(double p, double shape, double scale = 1.0);
double pareto_quantile(double p, double shape, double scale);
double weibull_quantile(double p, double shape, double scale);
double exponential_quantile(double p, double rate);

}  // namespace tiee::dist
