#include "tiee/tiee.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "tiee/errors.hpp"
#include "tiee/inference.hpp"

namespace tiee {

namespace {
constexpr double kLevelSlack = 1e-12;
}

std::string to_string(Signal s) { return s == Signal::ipw ? "ipw" : "naive"; }
std::string to_string(TailMode m) { return m == TailMode::covariate ? "covariate" : "constant"; }

QuantileGrid::QuantileGrid(std::vector<double> levels) : levels_(std::move(levels)) {
  if (levels_.size() < 2 || levels_.front() != 0.0)
    throw UsageError("grid needs p_0 = 0 and at least one positive level");
  for (std::size_t k = 1; k < levels_.size(); ++k)
    if (!(levels_[k] > levels_[k - 1])) throw UsageError("grid levels must be strictly increasing");
  if (levels_.back() > 1.0) throw UsageError("grid levels must not exceed 1");
}

QuantileGrid QuantileGrid::uniform(std::size_t K) {
  if (K == 0) throw UsageError("grid size must be positive");
  std::vector<double> p(K + 1);
  for (std::size_t k = 0; k <= K; ++k) p[k] = static_cast<double>(k) / static_cast<double>(K);
  return QuantileGrid(std::move(p));
}

QuantileGrid QuantileGrid::tail_refined(std::size_t K, double p_u, double tau) {
  if (K == 0) throw UsageError("grid size must be positive");
  if (!(p_u > 0.0 && p_u < 1.0)) throw DomainError("threshold level must lie in (0,1)");
  if (!(tau > 0.0 && tau < 1.0)) throw DomainError("target level must lie in (0,1)");
  std::vector<double> p{0.0};
  for (std::size_t k = 1; k < K; ++k) {
    const double v = static_cast<double>(k) / static_cast<double>(K);
    if (v >= p_u - kLevelSlack) break;
    p.push_back(v);
  }
  p.push_back(p_u);
  const double top = 1.0 - p_u;
  const double bottom = std::min(1.0 - tau, top) / 10.0;
  const double h = std::log(top / bottom) / static_cast<double>(K);
  for (std::size_t j = 1; j <= K; ++j) p.push_back(1.0 - top * std::exp(-h * static_cast<double>(j)));
  return QuantileGrid(std::move(p));
}

std::size_t default_grid_size(std::size_t n) { return n <= 1000 ? 800 : 2000; }

ReconstructedQuantile::ReconstructedQuantile(WeightedSample body, double p_u, double xi,
                                             std::vector<TailUnit> tail_units, TailMode mode,
                                             std::size_t n_total)
    : body_(std::move(body)), p_u_(p_u), xi_(xi), tail_(std::move(tail_units)), mode_(mode), n_total_(n_total) {
  if (!(p_u_ > 0.0 && p_u_ < 1.0)) throw DomainError("threshold level must lie in (0,1)");
  if (tail_.empty()) throw InsufficientTailDataError("reconstruction needs at least one tail unit");
  for (const TailUnit& t : tail_) {
    if (!(t.sigma > 0.0) || !std::isfinite(t.sigma)) throw DomainError("tail scale must be positive and finite");
    if (!(t.weight > 0.0) || !std::isfinite(t.weight)) throw DomainError("tail unit weight must be positive");
    tail_weight_ += t.weight;
  }
  if (mode_ == TailMode::constant)
    for (const TailUnit& t : tail_)
      if (t.sigma != tail_[0].sigma) throw UsageError("constant tail mode needs one shared scale");
  u_ = weighted_quantile(body_, p_u_);
  exceedances = static_cast<int>(tail_.size());

  tail_of_body_.assign(body_.size(), -1);
  std::vector<std::pair<std::size_t, int>> by_source;
  for (std::size_t j = 0; j < tail_.size(); ++j) by_source.emplace_back(tail_[j].source, static_cast<int>(j));
  std::sort(by_source.begin(), by_source.end());
  for (std::size_t i = 0; i < body_.size(); ++i) {
    if (body_.values()[i] <= u_) continue;
    const auto it = std::lower_bound(by_source.begin(), by_source.end(), std::make_pair(body_.source(i), -1));
    if (it != by_source.end() && it->first == body_.source(i)) tail_of_body_[i] = it->second;
  }
}

double ReconstructedQuantile::operator()(std::size_t j, double p) const {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile level must lie in (0,1)");
  if (p <= p_u_) return weighted_quantile(body_, p);
  return u_ + tail_.at(j).sigma * gpd_unit_excess(xi_, p_u_, p);
}

GpdTail ReconstructedQuantile::unit_tail(std::size_t j) const {
  return {u_, p_u_, unit_sigma(j), xi_, beta_sigma};
}

double ReconstructedQuantile::mean_sigma() const {
  double acc = 0.0;
  for (const TailUnit& t : tail_) acc += t.weight * t.sigma;
  return acc / tail_weight_;
}

WeightedSample signal_weights(const Dataset& data, const PropensityFit* fit, int d, Signal signal) {
  if (signal == Signal::ipw) {
    if (fit == nullptr) throw UsageError("IPW signal requires a propensity fit");
    return ipw_weights(*fit, data, d);
  }
  std::vector<double> values, weights;
  std::vector<std::size_t> source;
  for (std::size_t i = 0; i < data.n(); ++i) {
    if (data.d(i) != d) continue;
    values.push_back(data.y(i));
    weights.push_back(1.0);
    source.push_back(i);
  }
  if (values.empty()) throw EmptyArmError("arm d=" + std::to_string(d) + " has no units");
  return WeightedSample(std::move(values), std::move(weights), std::move(source));
}

ReconstructedQuantile reconstruct_quantile(const Dataset& data, const WeightedSample& weights,
                                           double p_u, TailMode mode,
                                           std::span<const std::size_t> tail_covariates) {
  if (weights.size() == 0) throw EmptyArmError("arm has no units");
  if (!(p_u > 0.0 && p_u < 1.0)) throw DomainError("threshold level must lie in (0,1)");
  const double u = weighted_quantile(weights, p_u);

  std::vector<TailUnit> tail;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights.values()[i] <= u) continue;
    TailUnit t;
    t.source = weights.source(i);
    t.weight = weights.weights()[i];
    t.excess = weights.values()[i] - u;
    tail.push_back(std::move(t));
  }

  if (mode == TailMode::constant) {
    std::vector<double> excess, w;
    for (const TailUnit& t : tail) {
      excess.push_back(t.excess);
      w.push_back(t.weight);
    }
    const GpdFit g = fit_gpd(WeightedSample(std::move(excess), std::move(w)));
    for (TailUnit& t : tail) {
      t.sigma = g.sigma;
      t.design = {1.0};
    }
    ReconstructedQuantile r(weights, p_u, g.xi, std::move(tail), mode, data.n());
    r.tail_fallback = g.fallback;
    r.beta_sigma = {std::log(g.sigma)};
    return r;
  }

  std::vector<std::size_t> covs(tail_covariates.begin(), tail_covariates.end());
  if (covs.empty())
    for (std::size_t j = 0; j < data.cov_dim(); ++j) covs.push_back(j);
  const GpdCovariateFit g = fit_gpd_covariate(data, weights, u, covs);
  for (TailUnit& t : tail) {
    if (t.source == WeightedSample::npos || t.source >= data.n())
      throw UsageError("arm sample sources must index the dataset");
    const auto x = data.x(t.source);
    t.sigma = g.sigma_at(x);
    t.design.assign(1, 1.0);
    for (std::size_t c : g.covariates) t.design.push_back(x[c]);
  }
  ReconstructedQuantile r(weights, p_u, g.xi, std::move(tail), mode, data.n());
  r.tail_fallback = g.fallback;
  r.beta_sigma.assign(g.beta_sigma.data(), g.beta_sigma.data() + g.beta_sigma.size());
  return r;
}

double integrated_signal(std::span<const double> unit_weights, const UnitQuantile& quantile,
                         const QuantileGrid& grid, double theta) {
  double acc = 0.0, total = 0.0;
  for (std::size_t i = 0; i < unit_weights.size(); ++i) {
    total += unit_weights[i];
    double s = 0.0;
    for (std::size_t k = 1; k <= grid.K(); ++k)
      if (quantile(i, grid.level(k)) <= theta) s += grid.width(k);
    acc += unit_weights[i] * s;
  }
  if (!(total > 0.0)) throw DegenerateWeightsError("unit weights sum to zero");
  return acc / total;
}

double integrated_signal(const ReconstructedQuantile& recon, const QuantileGrid& grid, double theta) {
  std::vector<double> w;
  for (const TailUnit& t : recon.tail_units()) w.push_back(t.weight);
  // p = 1 lies outside the quantile's domain; its atom is +inf unless the tail is bounded.
  auto q = [&](std::size_t i, double p) {
    if (p < 1.0) return recon(i, p);
    return recon.u() + recon.unit_sigma(i) * gpd_unit_excess(recon.xi(), recon.p_u(), 1.0);
  };
  return integrated_signal(w, q, grid, theta);
}

double signal_root(std::span<const double> unit_weights, const UnitQuantile& quantile,
                   const QuantileGrid& grid, double tau) {
  std::vector<double> values, weights;
  double total = 0.0;
  for (double w : unit_weights) total += w;
  if (!(total > 0.0)) throw DegenerateWeightsError("unit weights sum to zero");
  for (std::size_t i = 0; i < unit_weights.size(); ++i)
    for (std::size_t k = 1; k <= grid.K(); ++k) {
      values.push_back(quantile(i, grid.level(k)));
      weights.push_back(unit_weights[i] * grid.width(k) / total);
    }
  const double reach = grid.level(grid.K());
  if (tau > reach + kLevelSlack)
    throw ExtrapolationBoundError("target level exceeds the grid's top level");
  const WeightedSample atoms(std::move(values), std::move(weights));
  const double level = std::min(tau / atoms.total_weight(), 1.0 - 1e-15);
  return weighted_quantile(atoms, level);
}

DiscretizedSignal::DiscretizedSignal(const ReconstructedQuantile& recon, const QuantileGrid& grid)
    : recon_(recon), grid_(grid) {
  while (last_body_ + 1 <= grid_.K() && grid_.level(last_body_ + 1) <= recon_.p_u()) ++last_body_;
  body_values_.assign(last_body_ + 1, -std::numeric_limits<double>::infinity());
  for (std::size_t k = 1; k <= last_body_; ++k) body_values_[k] = weighted_quantile(recon_.body(), grid_.level(k));
  for (std::size_t k = last_body_ + 1; k <= grid_.K(); ++k)
    tail_excess_.push_back(gpd_unit_excess(recon_.xi(), recon_.p_u(), grid_.level(k)));
  total_weight_ = recon_.tail_weight();
}

double DiscretizedSignal::atom(std::size_t unit, std::size_t k) const {
  if (k <= last_body_) return body_values_[k];
  return recon_.u() + recon_.unit_sigma(unit) * tail_excess_[k - last_body_ - 1];
}

double DiscretizedSignal::representative(std::size_t k) const {
  if (k <= last_body_) return body_values_[k];
  return recon_.u() + recon_.mean_sigma() * tail_excess_[k - last_body_ - 1];
}

std::size_t DiscretizedSignal::tail_count(std::size_t unit, double theta) const {
  if (theta <= recon_.u()) return 0;
  std::size_t lo = 0, hi = tail_excess_.size();
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (atom(unit, last_body_ + 1 + mid) <= theta) lo = mid + 1;
    else hi = mid;
  }
  return lo;
}

double DiscretizedSignal::body_cumulative(double theta) const {
  const auto it = std::upper_bound(body_values_.begin() + 1, body_values_.end(), theta);
  const auto m = static_cast<std::size_t>(it - body_values_.begin()) - 1;
  return grid_.level(m);
}

double DiscretizedSignal::unit_signal(std::size_t body_index, double theta) const {
  const int j = recon_.tail_of_body(body_index);
  if (j < 0) return recon_.body().values()[body_index] <= theta ? 1.0 : 0.0;
  const double base = grid_.level(last_body_);
  return (grid_.level(last_body_ + tail_count(static_cast<std::size_t>(j), theta)) - base) / (1.0 - base);
}

double DiscretizedSignal::operator()(double theta) const {
  const double body = body_cumulative(theta);
  if (theta <= recon_.u() || tail_excess_.empty()) return body;
  const double base = grid_.level(last_body_);
  if (recon_.mode() == TailMode::constant) return body + grid_.level(last_body_ + tail_count(0, theta)) - base;
  double acc = 0.0;
  for (std::size_t i = 0; i < recon_.units(); ++i)
    acc += recon_.unit_weight(i) * (grid_.level(last_body_ + tail_count(i, theta)) - base);
  return body + acc / total_weight_;
}

double DiscretizedSignal::max_atom() const {
  double best = body_values_.size() > 1 ? body_values_.back() : -std::numeric_limits<double>::infinity();
  if (tail_excess_.empty()) return best;
  std::size_t j = tail_excess_.size();
  while (j > 0 && !std::isfinite(tail_excess_[j - 1])) --j;
  if (j == 0) return best;
  const std::size_t units = recon_.mode() == TailMode::constant ? 1 : recon_.units();
  for (std::size_t i = 0; i < units; ++i) best = std::max(best, atom(i, last_body_ + j));
  return best;
}

double DiscretizedSignal::root(double tau) const {
  const double target = tau - kLevelSlack;
  if (last_body_ >= 1 && grid_.level(last_body_) >= target) {
    std::size_t k = 1;
    while (grid_.level(k) < target) ++k;
    return body_values_[k];
  }
  double lo = recon_.u();
  double hi = max_atom();
  if (!std::isfinite(hi) || (*this)(hi) < target)
    throw ExtrapolationBoundError("integrated signal never reaches tau on the grid; refine the tail grid or raise R*");
  for (;;) {
    const double mid = lo + 0.5 * (hi - lo);
    if (mid <= lo || mid >= hi) break;
    if ((*this)(mid) >= target) hi = mid;
    else lo = mid;
  }
  return hi;
}

double DiscretizedSignal::local_spacing(double theta) const {
  const double s = (*this)(theta);
  std::size_t k = 1;
  while (k < grid_.K() && grid_.level(k) < s - kLevelSlack) ++k;
  auto gap = [&](std::size_t a) { return representative(a + 1) - representative(a); };
  double sp = k < grid_.K() ? gap(k) : std::numeric_limits<double>::infinity();
  if (!std::isfinite(sp) && k >= 2) sp = gap(k - 1);
  return std::isfinite(sp) ? std::max(sp, 0.0) : 0.0;
}

WeightedSample DiscretizedSignal::atoms() const {
  std::vector<double> values, weights;
  for (std::size_t k = 1; k <= last_body_; ++k) {
    values.push_back(body_values_[k]);
    weights.push_back(grid_.width(k));
  }
  const std::size_t units = recon_.mode() == TailMode::constant ? 1 : recon_.units();
  for (std::size_t i = 0; i < units; ++i) {
    const double w = recon_.mode() == TailMode::constant ? 1.0 : recon_.unit_weight(i) / total_weight_;
    for (std::size_t k = last_body_ + 1; k <= grid_.K(); ++k) {
      const double a = atom(i, k);
      if (!std::isfinite(a)) continue;
      values.push_back(a);
      weights.push_back(w * grid_.width(k));
    }
  }
  return WeightedSample(std::move(values), std::move(weights));
}

double tau_eff(double tau, double p_u) {
  if (!(p_u >= 0.0 && p_u < 1.0)) throw DomainError("threshold level must lie in [0,1)");
  return (tau - p_u) / (1.0 - p_u);
}

namespace {

struct TailScore {
  double log_sigma = 0.0;
  double xi = 0.0;
};

TailScore gpd_score(double e, double sigma, double xi) {
  const double t = e / sigma;
  const double z = 1.0 + xi * t;
  if (!(z > 0.0)) throw SingularNuisanceError("exceedance outside the fitted GPD support");
  TailScore s;
  s.log_sigma = -1.0 + (1.0 + xi) * t / z;
  if (std::abs(xi) < 1e-4)
    s.xi = 0.5 * t * t - t + xi * (t * t - 2.0 * t * t * t / 3.0);
  else
    s.xi = std::log1p(xi * t) / (xi * xi) - (1.0 + 1.0 / xi) * t / z;
  return s;
}

double gpd_cdf_unit(double y, double sigma, double xi) {
  if (y <= 0.0) return 0.0;
  const double t = y / sigma;
  if (std::abs(xi) <= kXiZero) return -std::expm1(-t);
  const double z = 1.0 + xi * t;
  if (z <= 0.0) return 1.0;
  return -std::expm1(-std::log1p(xi * t) / xi);
}

}  // namespace

std::vector<double> tail_nuisance_correction(const ReconstructedQuantile& recon, double theta) {
  const auto& units = recon.tail_units();
  const std::size_t n = recon.n_total();
  const std::size_t p = recon.beta_sigma.size();
  if (p == 0) throw SingularNuisanceError("reconstruction carries no tail scale parameters");
  for (const TailUnit& t : units)
    if (t.design.size() != p) throw UsageError("tail unit design does not match the scale model");
  const std::size_t q = p + 1;

  Eigen::VectorXd eta(q);
  for (std::size_t k = 0; k < p; ++k) eta[k] = recon.beta_sigma[k];
  eta[p] = recon.xi();

  auto sigma_of = [&](const TailUnit& t, const Eigen::VectorXd& e) {
    double lin = 0.0;
    for (std::size_t k = 0; k < p; ++k) lin += e[k] * t.design[k];
    return std::exp(lin);
  };
  auto score = [&](const TailUnit& t, const Eigen::VectorXd& e) {
    const TailScore s = gpd_score(t.excess, sigma_of(t, e), e[p]);
    Eigen::VectorXd v(q);
    for (std::size_t k = 0; k < p; ++k) v[k] = t.weight * s.log_sigma * t.design[k];
    v[p] = t.weight * s.xi;
    return v;
  };
  auto mean_score = [&](const Eigen::VectorXd& e) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(q);
    for (const TailUnit& t : units) acc += score(t, e);
    return Eigen::VectorXd(acc / static_cast<double>(n));
  };
  const double mass = 1.0 - recon.p_u();
  auto smooth_signal = [&](const Eigen::VectorXd& e) {
    double acc = 0.0;
    for (const TailUnit& t : units) acc += t.weight * gpd_cdf_unit(theta - recon.u(), sigma_of(t, e), e[p]);
    return recon.p_u() + mass * acc / recon.tail_weight();
  };

  Eigen::MatrixXd M(q, q);
  Eigen::RowVectorXd A(q);
  for (std::size_t k = 0; k < q; ++k) {
    const double h = 1e-5 * std::max(1.0, std::abs(eta[k]));
    Eigen::VectorXd up = eta, dn = eta;
    up[k] += h;
    dn[k] -= h;
    M.col(k) = (mean_score(up) - mean_score(dn)) / (2.0 * h);
    A[k] = (smooth_signal(up) - smooth_signal(dn)) / (2.0 * h);
  }
  if (!M.allFinite() || !A.allFinite()) throw SingularNuisanceError("tail score Jacobian is not finite");
  Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
  if (lu.rank() < static_cast<Eigen::Index>(q)) throw SingularNuisanceError("tail score Jacobian is singular");
  // A M^{-1} psi_i = (M^{-T} A^T) . psi_i
  const Eigen::VectorXd coef = M.transpose().fullPivLu().solve(A.transpose());

  std::vector<double> out(n, 0.0);
  for (const TailUnit& t : units) {
    if (t.source >= n) throw UsageError("tail units must map to dataset rows");
    out[t.source] = coef.dot(score(t, eta));
  }
  return out;
}

QuantileGrid make_grid(const TieeConfig& config, double p_u, std::size_t n) {
  const std::size_t K = config.K == 0 ? default_grid_size(n) : config.K;
  if (K < 100) throw UsageError("grid size K must be at least 100");
  return config.grid == GridKind::uniform ? QuantileGrid::uniform(K)
                                          : QuantileGrid::tail_refined(K, p_u, config.tau);
}

TieeEstimate solve_tiee(const TieeConfig& config, const ReconstructedQuantile& recon) {
  if (!(config.tau > 0.0 && config.tau < 1.0)) throw DomainError("tau must lie in (0,1)");
  const QuantileGrid grid = make_grid(config, recon.p_u(), recon.n_total());
  const DiscretizedSignal S(recon, grid);

  TieeEstimate est;
  est.tau = config.tau;
  est.p_u = recon.p_u();
  est.u = recon.u();
  est.xi = recon.xi();
  est.tau_eff = tau_eff(config.tau, recon.p_u());
  est.K = config.K == 0 ? default_grid_size(recon.n_total()) : config.K;
  est.exceedances = recon.exceedances;
  est.tail_fallback = recon.tail_fallback;
  if (config.grid == GridKind::uniform && static_cast<double>(grid.K()) < 10.0 / (1.0 - config.tau))
    est.warnings.push_back("uniform grid has fewer than 10/(1-tau) levels; tail resolution is coarse");
  if (recon.tail_fallback) est.warnings.push_back("GPD fit fell back to PWM estimates");

  est.theta_hat = S.root(config.tau);
  if (std::isfinite(config.r_star) && config.r_star < S.max_atom())
    est.warnings.push_back("R* below the largest reconstructed atom; enlarged to " + std::to_string(S.max_atom()));

  const std::size_t n = recon.n_total();
  const WeightedSample& body = recon.body();
  est.g_values.assign(n, 0.0);
  const double scale = static_cast<double>(n) / body.total_weight();
  for (std::size_t i = 0; i < body.size(); ++i) {
    const std::size_t src = body.source(i);
    if (src == WeightedSample::npos || src >= n) throw UsageError("reconstruction units must map to dataset rows");
    est.g_values[src] = body.weights()[i] * scale * (S.unit_signal(i, est.theta_hat) - config.tau);
  }
  est.tail_correction.assign(n, 0.0);
  if (est.theta_hat > recon.u()) {
    try {
      est.tail_correction = tail_nuisance_correction(recon, est.theta_hat);
    } catch (const SingularNuisanceError& e) {
      est.warnings.push_back(std::string("tail-parameter correction skipped: ") + e.what());
    }
  }
  est.sigma_sq = n >= 2 ? moment_variance(est.g_values) : 0.0;

  try {
    est.phi_prime = phi_derivative([&](double t) { return S(t); }, est.theta_hat, config.phi,
                                   S.local_spacing(est.theta_hat), [&] { return S.atoms(); });
  } catch (const FlatMomentError& e) {
    est.phi_prime = 0.0;
    est.warnings.push_back(e.what());
  }
  return est;
}

TieeEstimate estimate_tiee(const Dataset& data, const PropensityFit* fit, int d,
                           const TieeConfig& config) {
  const WeightedSample w = signal_weights(data, fit, d, config.signal);
  const double p_u = std::isnan(config.p_u) ? default_threshold_level(data.n()) : config.p_u;
  const ReconstructedQuantile recon = reconstruct_quantile(data, w, p_u, config.tail_mode, config.tail_covariates);
  TieeEstimate est = solve_tiee(config, recon);
  est.d = d;
  return est;
}

EqteResult eqte(const TieeEstimate& est1, const TieeEstimate& est0) {
  if (est1.tau != est0.tau) throw UsageError("EQTE arms were estimated at different tau");
  EqteResult r;
  r.tau = est1.tau;
  r.theta1 = est1.theta_hat;
  r.theta0 = est0.theta_hat;
  r.delta = est1.theta_hat - est0.theta_hat;
  r.warnings = est1.warnings;
  r.warnings.insert(r.warnings.end(), est0.warnings.begin(), est0.warnings.end());
  return r;
}

}  // namespace tiee
