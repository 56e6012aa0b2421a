#include "tiee/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tiee/distributions.hpp"
#include "tiee/errors.hpp"

namespace tiee {

double moment_variance(std::span<const double> g) {
  if (g.size() < 2) throw InsufficientDataError("moment variance needs at least two values");
  const double n = static_cast<double>(g.size());
  double s = 0.0, s2 = 0.0;
  for (double v : g) {
    s += v;
    s2 += v * v;
  }
  const double mean = s / n;
  return std::max(s2 / n - mean * mean, 0.0);
}

double moment_covariance(std::span<const double> g1, std::span<const double> g0) {
  if (g1.size() != g0.size()) throw UsageError("moment covariance needs aligned g-values");
  if (g1.size() < 2) throw InsufficientDataError("moment covariance needs at least two values");
  const double n = static_cast<double>(g1.size());
  double a = 0.0, b = 0.0, ab = 0.0;
  for (std::size_t i = 0; i < g1.size(); ++i) {
    a += g1[i];
    b += g0[i];
    ab += g1[i] * g0[i];
  }
  return ab / n - (a / n) * (b / n);
}

double weighted_kde(const WeightedSample& sample, double x) {
  const double W = sample.total_weight();
  if (!(W > 0.0)) throw DegenerateWeightsError("KDE sample has zero total weight");
  double mean = 0.0, sw2 = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    mean += sample.weights()[i] * sample.values()[i];
    sw2 += sample.weights()[i] * sample.weights()[i];
  }
  mean /= W;
  double var = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double e = sample.values()[i] - mean;
    var += sample.weights()[i] * e * e;
  }
  const double sd = std::sqrt(var / W);
  const double iqr = weighted_quantile(sample, 0.75) - weighted_quantile(sample, 0.25);
  double spread = sd;
  if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) return 0.0;
  const double n_eff = W * W / sw2;
  const double bw = 0.9 * spread * std::pow(n_eff, -0.2);
  double acc = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double z = (x - sample.values()[i]) / bw;
    if (std::abs(z) > 40.0) continue;
    acc += sample.weights()[i] * std::exp(-0.5 * z * z);
  }
  return acc / (W * bw * std::sqrt(2.0 * std::numbers::pi));
}

double phi_derivative(const std::function<double(double)>& S, double theta_hat, PhiMethod method,
                      double local_spacing, const std::function<WeightedSample()>& atoms) {
  auto finite_difference = [&] {
    double h = std::max(1e-3 * std::abs(theta_hat), 5.0 * local_spacing);
    if (!(h > 0.0)) h = 1e-6;
    return (S(theta_hat + h) - S(theta_hat - h)) / (2.0 * h);
  };
  auto kde = [&] {
    if (!atoms) throw UsageError("KDE derivative needs the reconstructed atoms");
    return weighted_kde(atoms(), theta_hat);
  };
  double value = 0.0;
  switch (method) {
    case PhiMethod::finite_difference: value = finite_difference(); break;
    case PhiMethod::kde: value = kde(); break;
    case PhiMethod::automatic:
      value = finite_difference();
      if (value == 0.0 && atoms) value = kde();
      break;
  }
  if (value == 0.0) throw FlatMomentError("moment function is flat at theta_hat; no interval can be formed");
  return value;
}

double eqte_variance(const VarianceComponents& c, std::string* warning) {
  if (c.PhiPrime1 == 0.0 || c.PhiPrime0 == 0.0)
    throw FlatMomentError("zero moment derivative; EQTE variance undefined");
  const double v = c.Sigma11 / (c.PhiPrime1 * c.PhiPrime1) + c.Sigma00 / (c.PhiPrime0 * c.PhiPrime0) -
                   2.0 * c.Sigma10 / (c.PhiPrime1 * c.PhiPrime0);
  if (v < 0.0) {
    if (warning) *warning = "EQTE variance plug-in was negative (" + std::to_string(v) + "); floored at 0";
    return 0.0;
  }
  return v;
}

std::pair<double, double> confidence_interval(double delta_hat, double sigma_delta_sq, std::size_t n,
                                              double alpha) {
  if (!(sigma_delta_sq >= 0.0)) throw DomainError("variance must be nonnegative");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0,1)");
  if (n == 0) throw DomainError("sample size must be positive");
  const double z = dist::normal_quantile(1.0 - alpha / 2.0);
  const double half = z * std::sqrt(sigma_delta_sq / static_cast<double>(n));
  return {delta_hat - half, delta_hat + half};
}

double sandwich_variance(double sigma_sq, double phi_prime, SandwichParts& parts) {
  if (phi_prime == 0.0) throw FlatMomentError("zero moment derivative; sandwich variance undefined");
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(parts.M);
  if (parts.M.rows() == 0 || !lu.isInvertible()) throw SingularNuisanceError("nuisance Jacobian M is singular");
  const Eigen::MatrixXd Minv = lu.inverse();
  parts.V_zeta = Minv * parts.Sigma_psi * Minv.transpose();
  parts.C = Minv * parts.Sigma_g_psi.transpose();
  const double quad = (parts.A_zeta * parts.V_zeta * parts.A_zeta.transpose())(0, 0);
  const double cross = (parts.A_zeta * parts.C)(0, 0);
  return (sigma_sq + quad - 2.0 * cross) / (phi_prime * phi_prime);
}

namespace {

double moment_at(const Dataset& data, const PropensityFit& fit, const Eigen::MatrixXd& design,
                 const Eigen::VectorXd& coefficients, const TieeConfig& config, const TieeEstimate& est) {
  PropensityFit perturbed = fit;
  perturbed.coefficients = coefficients;
  perturbed.pi = propensity_at(design, coefficients, fit.spec);
  const WeightedSample w = ipw_weights(perturbed, data, est.d);
  const ReconstructedQuantile recon = reconstruct_quantile(data, w, est.p_u, config.tail_mode, config.tail_covariates);
  const QuantileGrid grid = make_grid(config, est.p_u, data.n());
  return DiscretizedSignal(recon, grid)(est.theta_hat) - est.tau;
}

}  // namespace

SandwichParts sandwich_parts(const Dataset& data, const PropensityFit& fit, const TieeConfig& config,
                             const TieeEstimate& est) {
  const Eigen::Index n = fit.scores.rows(), k = fit.scores.cols();
  if (static_cast<std::size_t>(n) != data.n() || est.g_values.size() != data.n())
    throw UsageError("sandwich inputs were produced on different samples");
  SandwichParts parts;
  parts.M = fit.jacobian;
  const Eigen::RowVectorXd psi_mean = fit.scores.colwise().mean();
  const Eigen::MatrixXd centered = fit.scores.rowwise() - psi_mean;
  parts.Sigma_psi = centered.transpose() * centered / static_cast<double>(n);
  const Eigen::Map<const Eigen::VectorXd> g(est.g_values.data(), n);
  const Eigen::VectorXd gc = g.array() - g.mean();
  parts.Sigma_g_psi = (gc.transpose() * centered) / static_cast<double>(n);

  parts.A_zeta = Eigen::RowVectorXd::Zero(k);
  if (config.signal == Signal::ipw) {
    const Eigen::MatrixXd design = build_design(data, fit.spec);
    for (Eigen::Index j = 0; j < k; ++j) {
      const double h = 1e-2 * std::max(1.0, std::abs(fit.coefficients[j]));
      Eigen::VectorXd up = fit.coefficients, down = fit.coefficients;
      up[j] += h;
      down[j] -= h;
      parts.A_zeta[j] = (moment_at(data, fit, design, up, config, est) -
                         moment_at(data, fit, design, down, config, est)) / (2.0 * h);
    }
  }
  return parts;
}

EqteResult infer_eqte(const Dataset& data, const PropensityFit* fit, const TieeConfig& config,
                      const TieeEstimate& est1, const TieeEstimate& est0, const InferenceOptions& options) {
  EqteResult r = eqte(est1, est0);
  std::vector<double> g1 = est1.g_values, g0 = est0.g_values;
  if (options.tail_nuisance)
    for (auto [est, g] : {std::pair{&est1, &g1}, std::pair{&est0, &g0}})
      for (std::size_t i = 0; i < est->tail_correction.size() && i < g->size(); ++i)
        (*g)[i] -= est->tail_correction[i];
  if (options.sandwich) {
    if (fit == nullptr) throw UsageError("sandwich variance needs the propensity fit");
    // Nuisance-adjusted influence values g - A M^{-1} psi; their variance is the sandwich form.
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(fit->jacobian);
    if (!lu.isInvertible()) throw SingularNuisanceError("nuisance Jacobian M is singular");
    const Eigen::MatrixXd Minv = lu.inverse();
    for (auto [est, g] : {std::pair{&est1, &g1}, std::pair{&est0, &g0}}) {
      const SandwichParts parts = sandwich_parts(data, *fit, config, *est);
      const Eigen::VectorXd proj = fit->scores * (Minv.transpose() * parts.A_zeta.transpose());
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= proj[static_cast<Eigen::Index>(i)];
    }
  }
  if (est1.phi_prime == 0.0 || est0.phi_prime == 0.0) {
    r.warnings.push_back("flat moment function in at least one arm; interval omitted");
    return r;
  }
  VarianceComponents c;
  c.Sigma11 = moment_variance(g1);
  c.Sigma00 = moment_variance(g0);
  c.Sigma10 = moment_covariance(g1, g0);
  c.PhiPrime1 = est1.phi_prime;
  c.PhiPrime0 = est0.phi_prime;
  std::string warning;
  r.sigma_delta_sq = eqte_variance(c, &warning);
  if (!warning.empty()) r.warnings.push_back(warning);
  r.ci = confidence_interval(r.delta, r.sigma_delta_sq, data.n(), options.alpha);
  return r;
}

EqteResult estimate_eqte(const Dataset& data, const PropensityFit* fit, const TieeConfig& config,
                         const InferenceOptions& options) {
  data.require_both_arms();
  const TieeEstimate e1 = estimate_tiee(data, fit, 1, config);
  const TieeEstimate e0 = estimate_tiee(data, fit, 0, config);
  return infer_eqte(data, fit, config, e1, e0, options);
}

}  // namespace tiee
