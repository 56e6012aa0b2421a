#include "tiee/evt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tiee/errors.hpp"
#include "tiee/optim.hpp"

namespace tiee {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kMinExceedances = 10;

void check_exceedances(const WeightedSample& e) {
  if (e.size() < kMinExceedances)
    throw InsufficientTailDataError("need at least 10 exceedances, got " + std::to_string(e.size()));
  if (!(e.total_weight() > 0.0)) throw InsufficientTailDataError("exceedances carry zero total weight");
  if (e.values().front() <= 0.0) throw DomainError("exceedances must be strictly positive");
  if (e.values().front() == e.values().back())
    throw DegenerateTailError("all exceedances are equal");
}

// Smallest sigma keeping every exceedance inside a bounded support.
double support_floor(double xi, double max_excess) {
  return xi < 0.0 ? -xi * max_excess * (1.0 + 1e-9) : 0.0;
}
}  // namespace

double default_threshold_level(std::size_t n) {
  if (n < 20) throw TooFewObservationsError("threshold rule needs n >= 20, got " + std::to_string(n));
  return 1.0 - std::pow(static_cast<double>(n), -0.35);
}

double gpd_unit_excess(double xi, double p_u, double tau) {
  const double ratio = (1.0 - p_u) / (1.0 - tau);
  if (std::abs(xi) > kXiZero) return std::expm1(xi * std::log(ratio)) / xi;
  return std::log(ratio);
}

double gpd_quantile(const GpdTail& tail, double tau) {
  if (!(tau > tail.p_u)) throw DomainError("target level is in the body, not the tail (tau <= p_u)");
  if (!(tau < 1.0)) throw DomainError("tail quantile level must be < 1");
  return tail.u + tail.sigma * gpd_unit_excess(tail.xi, tail.p_u, tau);
}

double gpd_cdf(const GpdTail& tail, double y) {
  if (y < tail.u) throw DomainError("gpd_cdf evaluated below the threshold");
  const double z = (y - tail.u) / tail.sigma;
  double survival;
  if (std::abs(tail.xi) > kXiZero) {
    const double base = 1.0 + tail.xi * z;
    if (base <= 0.0) return 1.0;  // beyond a finite upper endpoint
    survival = std::exp(-std::log1p(tail.xi * z) / tail.xi);
  } else {
    survival = std::exp(-z);
  }
  return tail.p_u + (1.0 - tail.p_u) * (1.0 - survival);
}

double gpd_log_density(double e, double sigma, double xi) {
  if (!(sigma > 0.0) || e < 0.0) return -kInf;
  const double z = e / sigma;
  if (std::abs(xi) <= kXiZero) return -std::log(sigma) - z;
  const double t = xi * z;
  if (t <= -1.0) return -kInf;
  return -std::log(sigma) - (1.0 + 1.0 / xi) * std::log1p(t);
}

GpdFit gpd_pwm(const WeightedSample& e) {
  const double total = e.total_weight();
  double a0 = 0.0, a1 = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double w = e.weights()[i];
    const double plotting = (e.cumulative(i) - 0.5 * w) / total;
    a0 += w * e.values()[i];
    a1 += w * e.values()[i] * (1.0 - plotting);
  }
  a0 /= total;
  a1 /= total;
  GpdFit fit;
  fit.fallback = true;
  const double denom = a0 - 2.0 * a1;
  if (denom > 0.0 && a1 > 0.0) {
    fit.xi = 2.0 - a0 / denom;
    fit.sigma = 2.0 * a0 * a1 / denom;
  } else {
    fit.xi = 0.0;
    fit.sigma = a0;
  }
  fit.xi = std::clamp(fit.xi, kXiMin, kXiMax);
  fit.sigma = std::max({fit.sigma, support_floor(fit.xi, e.values().back()), 1e-12 * a0});
  return fit;
}

GpdFit fit_gpd(const WeightedSample& e) {
  check_exceedances(e);
  const GpdFit start = gpd_pwm(e);
  const double scale = static_cast<double>(e.size()) / e.total_weight();
  auto negloglik = [&](double sigma, double xi) {
    double ll = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) {
      const double v = gpd_log_density(e.values()[i], sigma, xi);
      if (!std::isfinite(v)) return kInf;
      ll += e.weights()[i] * v;
    }
    return -ll * scale;
  };
  auto objective = [&](const Eigen::VectorXd& p) {
    if (p[1] < kXiMin || p[1] > kXiMax) return kInf;
    return negloglik(std::exp(p[0]), p[1]);
  };
  const double start_value = negloglik(start.sigma, start.xi);
  const auto res = nelder_mead(objective, Eigen::Vector2d(std::log(start.sigma), start.xi));
  GpdFit fit = start;
  fit.evaluations = res.evaluations;
  fit.log_likelihood = -start_value;
  if (std::isfinite(res.value) && (res.value <= start_value || !std::isfinite(start_value))) {
    fit.sigma = std::exp(res.x[0]);
    fit.xi = res.x[1];
    fit.fallback = false;
    fit.log_likelihood = -res.value;
  }
  fit.log_likelihood /= scale;
  return fit;
}

double GpdCovariateFit::sigma_at(std::span<const double> x) const {
  double eta = beta_sigma[0];
  for (std::size_t j = 0; j < covariates.size(); ++j) eta += beta_sigma[static_cast<Eigen::Index>(j) + 1] * x[covariates[j]];
  return std::exp(eta);
}

GpdCovariateFit fit_gpd_covariate(const Dataset& data, const WeightedSample& arm, double u,
                                  std::span<const std::size_t> covariates) {
  for (auto c : covariates)
    if (c >= data.cov_dim()) throw UsageError("tail model refers to a missing covariate");
  std::vector<double> excess, weights;
  std::vector<std::size_t> source;
  for (std::size_t i = 0; i < arm.size(); ++i) {
    if (arm.values()[i] <= u) continue;
    if (arm.source(i) == WeightedSample::npos) throw UsageError("tail regression needs dataset-backed samples");
    excess.push_back(arm.values()[i] - u);
    weights.push_back(arm.weights()[i]);
    source.push_back(arm.source(i));
  }
  const WeightedSample ex(excess, weights, source);
  check_exceedances(ex);

  const Eigen::Index p = static_cast<Eigen::Index>(covariates.size()) + 1;
  const Eigen::Index m = static_cast<Eigen::Index>(ex.size());
  Eigen::MatrixXd Z(m, p);
  for (Eigen::Index i = 0; i < m; ++i) {
    Z(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < p; ++j) Z(i, j) = data.covariate(ex.source(static_cast<std::size_t>(i)), covariates[static_cast<std::size_t>(j - 1)]);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) throw SingularDesignError("tail scale design is rank deficient on the exceedances");

  const GpdFit base = fit_gpd(ex);
  const double scale = static_cast<double>(m) / ex.total_weight();
  std::vector<double> ev(ex.values().begin(), ex.values().end());
  std::vector<double> wv(ex.weights().begin(), ex.weights().end());
  auto objective = [&](const Eigen::VectorXd& theta) {
    const double xi = theta[p];
    if (xi < kXiMin || xi > kXiMax) return kInf;
    const Eigen::VectorXd eta = Z * theta.head(p);
    double ll = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double v = gpd_log_density(ev[static_cast<std::size_t>(i)], std::exp(eta[i]), xi);
      if (!std::isfinite(v)) return kInf;
      ll += wv[static_cast<std::size_t>(i)] * v;
    }
    return -ll * scale;
  };
  Eigen::VectorXd start = Eigen::VectorXd::Zero(p + 1);
  start[0] = std::log(base.sigma);
  start[p] = base.xi;
  const double start_value = objective(start);

  GpdCovariateFit fit;
  fit.covariates.assign(covariates.begin(), covariates.end());
  fit.exceedances = static_cast<int>(m);
  fit.beta_sigma = start.head(p);
  fit.xi = base.xi;
  fit.fallback = base.fallback;
  if (p == 1) return fit;

  NelderMeadOptions opt;
  opt.max_evaluations = 4000;
  const auto res = nelder_mead(objective, start, opt);
  if (std::isfinite(res.value) && res.value <= start_value) {
    fit.beta_sigma = res.x.head(p);
    fit.xi = res.x[p];
  }
  return fit;
}

double weighted_hill(std::span<const double> values, std::span<const double> weights, double q,
                     double normalizer) {
  if (!(q > 0.0)) throw LogDomainError("Hill threshold must be positive for the log transform");
  if (!(normalizer > 0.0)) throw DomainError("Hill normalizer must be positive");
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] > q)) continue;
    acc += weights[i] * (std::log(values[i]) - std::log(q));
    ++count;
  }
  if (count == 0) throw InsufficientTailDataError("no observations above the Hill threshold");
  return acc / normalizer;
}

EviEstimate hill_causal(const Dataset& data, const PropensityFit& fit, int d, double tau_n) {
  if (!(tau_n > 0.0 && tau_n < 1.0)) throw DomainError("intermediate level must lie in (0,1)");
  const WeightedSample arm = ipw_weights(fit, data, d);
  const double q = weighted_quantile(arm, tau_n);
  std::vector<double> values, weights;
  for (std::size_t i = 0; i < arm.size(); ++i) {
    if (!(arm.values()[i] > q)) continue;
    const std::size_t src = arm.source(i);
    values.push_back(arm.values()[i]);
    weights.push_back(1.0 / fit.pi_arm(src, d));
  }
  if (values.size() < kMinExceedances)
    throw InsufficientTailDataError("causal Hill needs at least 10 exceedances in arm d=" +
                                    std::to_string(d) + ", got " + std::to_string(values.size()));
  if (!(q > 0.0)) throw LogDomainError("intermediate quantile is not positive; Hill needs positive tail outcomes");
  const double tail_mass = 1.0 - tau_n;
  const double gamma = weighted_hill(values, weights, q, static_cast<double>(data.n()) * tail_mass);
  return {gamma, EviMethod::hill, tau_n};
}

double hill_extrapolate(double q_intermediate, double tail_mass, double p_n, double gamma) {
  if (!(gamma > 0.0))
    throw HeavyTailViolationError("Weissman extrapolation needs gamma > 0 (heavy tails only)");
  if (!(p_n > 0.0 && p_n <= tail_mass && tail_mass < 1.0))
    throw DomainError("extrapolation needs 0 < p_n <= tail mass < 1");
  return q_intermediate * std::pow(tail_mass / p_n, gamma);
}

EviEstimate pickands_evi(const std::function<double(double)>& tail_quantile, double tau_n, double l,
                         double m, int R, std::span<const double> weights) {
  if (!(l > 0.0) || l == 1.0) throw DomainError("Pickands spacing l must be positive and != 1");
  if (!(m > 1.0)) throw DomainError("Pickands ratio m must exceed 1");
  if (R < 1 || weights.size() != static_cast<std::size_t>(R))
    throw DomainError("Pickands needs R >= 1 weights");
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (std::abs(wsum - 1.0) > 1e-9) throw DomainError("Pickands weights must sum to one");
  if (!(tau_n > 0.0)) throw DomainError("Pickands base level must be positive");

  auto log_spacing = [&](int r) {
    const double lo = std::pow(l, r) * tau_n;
    const double hi = m * lo;
    if (!(lo < 1.0 && hi < 1.0)) throw DomainError("Pickands level reaches 1; lower tau_n");
    const double spacing = tail_quantile(lo) - tail_quantile(hi);
    if (!(spacing > 0.0) || !std::isfinite(spacing))
      throw DegenerateSpacingError("nonpositive quantile spacing in Pickands estimator");
    return std::log(spacing);
  };
  double prev = log_spacing(0);
  double gamma = 0.0;
  for (int r = 1; r <= R; ++r) {
    const double cur = log_spacing(r);
    gamma -= weights[static_cast<std::size_t>(r - 1)] * (cur - prev) / std::log(l);
    prev = cur;
  }
  return {gamma, EviMethod::pickands, tau_n};
}

}  // namespace tiee
