#include "tiee/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "tiee/distributions.hpp"
#include "tiee/errors.hpp"
#include "tiee/evt.hpp"
#include "tiee/rng.hpp"

namespace tiee {

std::string to_string(BaselineMethod m) {
  switch (m) {
    case BaselineMethod::zhang_firpo: return "zhang_firpo";
    case BaselineMethod::causal_hill: return "causal_hill";
    case BaselineMethod::pickands: return "pickands";
  }
  return "unknown";
}

std::size_t bootstrap_subsample_size(std::size_t n) {
  return static_cast<std::size_t>(std::ceil(std::pow(static_cast<double>(n), 0.8) - 1e-9));
}

std::vector<BaselineResult> zhang_firpo(const Dataset& data, const PropensityFit& fit,
                                        std::span<const double> taus, const ZhangFirpoOptions& options) {
  data.require_both_arms();
  const WeightedSample w1 = ipw_weights(fit, data, 1);
  const WeightedSample w0 = ipw_weights(fit, data, 0);
  std::vector<BaselineResult> out(taus.size());
  for (std::size_t t = 0; t < taus.size(); ++t) {
    BaselineResult& r = out[t];
    r.method = BaselineMethod::zhang_firpo;
    const std::size_t i1 = weighted_quantile_index(w1, taus[t]);
    const std::size_t i0 = weighted_quantile_index(w0, taus[t]);
    r.theta1 = w1.values()[i1];
    r.theta0 = w0.values()[i0];
    r.delta = r.theta1 - r.theta0;
    r.at_boundary = i1 + 1 == w1.size() || i0 + 1 == w0.size();
    if (r.at_boundary) r.diagnostics.push_back("tau beyond the weighted ECDF range; arm maximum returned");
  }
  if (!options.interval) return out;

  const std::size_t n = data.n();
  const std::size_t b = bootstrap_subsample_size(n);
  const double root_b = std::sqrt(static_cast<double>(b));
  std::vector<std::vector<double>> dev(taus.size());
  int failed = 0;
  std::vector<std::size_t> idx(b);
  for (int rep = 0; rep < options.B; ++rep) {
    CounterRng rng(derive_seed(options.seed, static_cast<std::uint64_t>(rep)));
    for (auto& i : idx) i = static_cast<std::size_t>(rng.next_index(n));
    try {
      const Dataset sub = data.select(idx);
      sub.require_both_arms();
      const PropensityFit f = fit_glm(sub, fit.spec);
      const WeightedSample s1 = ipw_weights(f, sub, 1);
      const WeightedSample s0 = ipw_weights(f, sub, 0);
      for (std::size_t t = 0; t < taus.size(); ++t) {
        const double star = weighted_quantile(s1, taus[t]) - weighted_quantile(s0, taus[t]);
        dev[t].push_back(root_b * (star - out[t].delta));
      }
    } catch (const Error&) {
      ++failed;
    }
  }
  const double root_n = std::sqrt(static_cast<double>(n));
  for (std::size_t t = 0; t < taus.size(); ++t) {
    BaselineResult& r = out[t];
    if (failed > 0) r.diagnostics.push_back(std::to_string(failed) + " bootstrap resamples failed");
    if (dev[t].size() < 2) {
      r.diagnostics.push_back("too few bootstrap resamples for an interval");
      continue;
    }
    const WeightedSample boot = WeightedSample::unit(std::move(dev[t]));
    const double lo = weighted_quantile(boot, options.alpha / 2.0);
    const double hi = weighted_quantile(boot, 1.0 - options.alpha / 2.0);
    r.ci = std::make_pair(r.delta - hi / root_n, r.delta - lo / root_n);
  }
  return out;
}

BaselineResult zhang_firpo(const Dataset& data, const PropensityFit& fit, double tau,
                           const ZhangFirpoOptions& options) {
  const double taus[] = {tau};
  return zhang_firpo(data, fit, taus, options).front();
}

BaselineResult causal_hill(const Dataset& data, const PropensityFit& fit, double tau, double tau_n,
                           double alpha) {
  data.require_both_arms();
  if (!(tau > 0.0 && tau < 1.0)) throw DomainError("tau must lie in (0,1)");
  BaselineResult r;
  r.method = BaselineMethod::causal_hill;
  const double tail_mass = 1.0 - tau_n;
  const double p = 1.0 - tau;
  double var = 0.0;
  for (int d : {1, 0}) {
    const WeightedSample arm = ipw_weights(fit, data, d);
    const double q = weighted_quantile(arm, tau_n);
    // An empty exceedance set makes the Hill sum exactly zero.
    if (!(arm.values().back() > q))
      throw HeavyTailViolationError("causal Hill index is 0 in arm d=" + std::to_string(d) +
                                    ": no outcomes above the intermediate quantile");
    const EviEstimate evi = hill_causal(data, fit, d, tau_n);
    const double theta = hill_extrapolate(q, tail_mass, p, evi.gamma);
    const double lr = std::log(tail_mass / p);
    const double k = static_cast<double>(data.arm_size(d)) * tail_mass;
    var += theta * theta * evi.gamma * evi.gamma * (1.0 + lr * lr) / k;
    (d == 1 ? r.theta1 : r.theta0) = theta;
    (d == 1 ? r.gamma1 : r.gamma0) = evi.gamma;
  }
  r.delta = r.theta1 - r.theta0;
  const double half = dist::normal_quantile(1.0 - alpha / 2.0) * std::sqrt(var);
  r.ci = std::make_pair(r.delta - half, r.delta + half);
  return r;
}

double pickands_extrapolate(double q_s, double q_ms, double s, double p, double m, double gamma) {
  const double spread = q_s - q_ms;
  const double ratio = s / p;
  if (std::abs(gamma) <= kXiZero) return q_s + spread * std::log(ratio) / std::log(m);
  return q_s + spread * std::expm1(gamma * std::log(ratio)) / -std::expm1(-gamma * std::log(m));
}

BaselineResult pickands_quantile(const Dataset& data, const PropensityFit& fit, double tau,
                                 const PickandsOptions& options) {
  data.require_both_arms();
  if (!(tau > 0.0 && tau < 1.0)) throw DomainError("tau must lie in (0,1)");
  BaselineResult r;
  r.method = BaselineMethod::pickands;
  const double s = std::isnan(options.tail_prob) ? std::pow(static_cast<double>(data.n()), -0.35)
                                                 : options.tail_prob;
  const std::vector<double> w(static_cast<std::size_t>(options.R), 1.0 / options.R);
  for (int d : {1, 0}) {
    const WeightedSample arm = ipw_weights(fit, data, d);
    auto q = [&](double t) { return weighted_quantile(arm, 1.0 - t); };
    const EviEstimate evi = pickands_evi(q, s, options.l, options.m, options.R, w);
    const double theta = pickands_extrapolate(q(s), q(options.m * s), s, 1.0 - tau, options.m, evi.gamma);
    (d == 1 ? r.theta1 : r.theta0) = theta;
    (d == 1 ? r.gamma1 : r.gamma0) = evi.gamma;
  }
  r.delta = r.theta1 - r.theta0;
  return r;
}

}  // namespace tiee
