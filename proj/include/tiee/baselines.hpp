#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tiee/dataset.hpp"
#include "tiee/propensity.hpp"

namespace tiee {

enum class BaselineMethod { zhang_firpo, causal_hill, pickands };

std::string to_string(BaselineMethod m);

struct BaselineResult {
  BaselineMethod method = BaselineMethod::zhang_firpo;
  double theta1 = 0.0;
  double theta0 = 0.0;
  double delta = 0.0;
  std::optional<std::pair<double, double>> ci;
  double gamma1 = std::numeric_limits<double>::quiet_NaN();
  double gamma0 = std::numeric_limits<double>::quiet_NaN();
  bool at_boundary = false;  ///< some arm quantile is that arm's maximum
  std::vector<std::string> diagnostics;
};

struct ZhangFirpoOptions {
  bool interval = true;
  int B = 500;
  double alpha = 0.10;
  std::uint64_t seed = 0;
};

/// Subsample size ceil(n^0.8).
std::size_t bootstrap_subsample_size(std::size_t n);

/// IPW weighted quantile per arm; interval from a b-out-of-n bootstrap with the
/// propensity refit on every resample (basic interval from the quantiles of
/// sqrt(b)(delta* - delta_hat), rescaled by 1/sqrt(n)).
BaselineResult zhang_firpo(const Dataset& data, const PropensityFit& fit, double tau,
                           const ZhangFirpoOptions& options = {});
/// Several levels on the same bootstrap resamples.
std::vector<BaselineResult> zhang_firpo(const Dataset& data, const PropensityFit& fit,
                                        std::span<const double> taus, const ZhangFirpoOptions& options = {});

/// Causal Hill index at intermediate upper level tau_n, Weissman extrapolation
/// from Q(tau_n) to tau, delta-method normal interval.
BaselineResult causal_hill(const Dataset& data, const PropensityFit& fit, double tau, double tau_n,
                           double alpha = 0.10);

struct PickandsOptions {
  double l = 0.5;
  double m = 2.0;
  int R = 3;
  /// Upper-tail base probability; NaN selects n^{-0.35}.
  double tail_prob = std::numeric_limits<double>::quiet_NaN();
};

/// GPD-form extrapolation from the upper-tail level s to p = 1 - tau using the
/// spacing q(s) - q(m s), where q(s) = Q(1 - s). Exact when Q is a GPD tail.
double pickands_extrapolate(double q_s, double q_ms, double s, double p, double m, double gamma);

BaselineResult pickands_quantile(const Dataset& data, const PropensityFit& fit, double tau,
                                 const PickandsOptions& options = {});

}  // namespace tiee
