#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tiee/dataset.hpp"
#include "tiee/propensity.hpp"

namespace tiee {

/// Generalized Pareto tail above threshold u carrying body mass p_u = F(u).
/// When `beta_sigma` is non-empty the scale is exp(beta' (1, x_cov)) and
/// `sigma` holds the value at the unit this tail was evaluated for.
struct GpdTail {
  double u = 0.0;
  double p_u = 0.0;
  double sigma = 1.0;
  double xi = 0.0;
  std::vector<double> beta_sigma;
};

/// |xi| at or below this uses the exponential limit formulas.
inline constexpr double kXiZero = 1e-8;
inline constexpr double kXiMin = -0.9;
inline constexpr double kXiMax = 5.0;

/// p_u = 1 - n^{-0.35}, i.e. k = n^{0.65} exceedances.
double default_threshold_level(std::size_t n);

double gpd_quantile(const GpdTail& tail, double tau);
double gpd_cdf(const GpdTail& tail, double y);
/// Tail-relative growth h(tau) with Q(tau) = u + sigma * h(tau).
double gpd_unit_excess(double xi, double p_u, double tau);
/// log density of an exceedance e > 0; -inf outside the support.
double gpd_log_density(double e, double sigma, double xi);

struct GpdFit {
  double sigma = 1.0;
  double xi = 0.0;
  bool fallback = false;  ///< true when the PWM start was returned
  int evaluations = 0;
  double log_likelihood = 0.0;
};

/// Probability-weighted-moment estimates (Hosking & Wallis), weighted plotting
/// positions; clamped into the admissible box.
GpdFit gpd_pwm(const WeightedSample& exceedances);

/// Weighted GPD maximum likelihood over sigma > 0, xi in [-0.9, 5] by
/// Nelder-Mead on (log sigma, xi) from the PWM start.
GpdFit fit_gpd(const WeightedSample& exceedances);

struct GpdCovariateFit {
  std::vector<std::size_t> covariates;  ///< dataset covariate columns in the scale model
  Eigen::VectorXd beta_sigma;           ///< intercept first
  double xi = 0.0;
  bool fallback = false;
  int exceedances = 0;

  double sigma_at(std::span<const double> x) const;
};

/// Weighted GPD regression with log-linear scale on the exceedances of `arm`
/// above u; `arm.source()` must index into `data`. An empty covariate list
/// gives the intercept-only model.
GpdCovariateFit fit_gpd_covariate(const Dataset& data, const WeightedSample& arm, double u,
                                  std::span<const std::size_t> covariates);

enum class EviMethod { hill, pickands };

struct EviEstimate {
  double gamma = 0.0;
  EviMethod method = EviMethod::hill;
  double tau_n = 0.0;
};

/// Direct weighted Hill sum: (1/normalizer) sum_{y_i > q} w_i (log y_i - log q).
double weighted_hill(std::span<const double> values, std::span<const double> weights, double q,
                     double normalizer);

/// Causal Hill estimator for arm d at intermediate upper level tau_n
/// (tail mass 1 - tau_n above the IPW-weighted arm quantile).
EviEstimate hill_causal(const Dataset& data, const PropensityFit& fit, int d, double tau_n);

/// Weissman extrapolation q * (tail_mass / p_n)^gamma; heavy tails only.
double hill_extrapolate(double q_intermediate, double tail_mass, double p_n, double gamma);

/// Pickands-type EVI from a tail quantile function s -> Q(1 - s), evaluated at
/// upper-tail probabilities l^r tau_n and m l^r tau_n for r = 0..R. Spacings
/// are Q(1 - l^r tau_n) - Q(1 - m l^r tau_n) and must be positive.
EviEstimate pickands_evi(const std::function<double(double)>& tail_quantile, double tau_n, double l,
                         double m, int R, std::span<const double> weights);

}  // namespace tiee
