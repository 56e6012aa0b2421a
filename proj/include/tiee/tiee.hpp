#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tiee/dataset.hpp"
#include "tiee/evt.hpp"
#include "tiee/propensity.hpp"

namespace tiee {

enum class Signal { naive, ipw };
enum class TailMode { constant, covariate };
enum class GridKind { tail_refined, uniform };
enum class PhiMethod { automatic, finite_difference, kde };

std::string to_string(Signal s);
std::string to_string(TailMode m);

/// Quantile levels 0 = p_0 < p_1 < ... < p_K <= 1.
class QuantileGrid {
 public:
  explicit QuantileGrid(std::vector<double> levels);

  /// p_k = k / K.
  static QuantileGrid uniform(std::size_t K);
  /// Body levels k/K below p_u, the level p_u itself, then K tail levels with
  /// 1 - p_j = (1 - p_u) exp(-j h) reaching ten times deeper than 1 - tau.
  static QuantileGrid tail_refined(std::size_t K, double p_u, double tau);

  std::size_t K() const noexcept { return levels_.size() - 1; }
  double level(std::size_t k) const { return levels_[k]; }
  double width(std::size_t k) const { return levels_[k] - levels_[k - 1]; }
  std::span<const double> levels() const noexcept { return levels_; }

 private:
  std::vector<double> levels_;
};

/// Default grid size: 800 for n <= 1000, else 2000.
std::size_t default_grid_size(std::size_t n);

/// One exceedance carrying its own GPD tail curve.
struct TailUnit {
  std::size_t source = 0;       ///< dataset row
  double weight = 1.0;          ///< signal weight of the row
  double excess = 0.0;          ///< y - u
  double sigma = 1.0;           ///< tail scale at the row's covariates
  std::vector<double> design;   ///< (1, x_cov) row of the log-scale model
};

/// Per-arm quantile reconstruction: weighted empirical body up to p_u and GPD
/// tails anchored at u = Q_body(p_u). The tail units are the exceedances of u;
/// in covariate mode each carries its own scale, in constant mode all share
/// one. Q_j(p) is the body quantile for p <= p_u and u + sigma_j h(p) above.
class ReconstructedQuantile {
 public:
  ReconstructedQuantile(WeightedSample body, double p_u, double xi, std::vector<TailUnit> tail_units,
                        TailMode mode, std::size_t n_total);

  double operator()(std::size_t tail_unit, double p) const;
  double operator()(double p) const { return (*this)(0, p); }

  const WeightedSample& body() const noexcept { return body_; }
  double p_u() const noexcept { return p_u_; }
  double u() const noexcept { return u_; }
  double xi() const noexcept { return xi_; }
  TailMode mode() const noexcept { return mode_; }
  std::size_t n_total() const noexcept { return n_total_; }
  const std::vector<TailUnit>& tail_units() const noexcept { return tail_; }
  std::size_t units() const noexcept { return tail_.size(); }
  double unit_weight(std::size_t j) const { return tail_[j].weight; }
  double unit_sigma(std::size_t j) const { return tail_[j].sigma; }
  double tail_weight() const noexcept { return tail_weight_; }
  GpdTail unit_tail(std::size_t j) const;
  /// Weight-averaged tail scale.
  double mean_sigma() const;
  /// Tail unit of body entry i, or -1 when the entry lies at or below u.
  int tail_of_body(std::size_t i) const { return tail_of_body_[i]; }

  int exceedances = 0;
  bool tail_fallback = false;
  std::vector<double> beta_sigma;

 private:
  WeightedSample body_;
  double p_u_;
  double u_;
  double xi_;
  std::vector<TailUnit> tail_;
  TailMode mode_;
  std::size_t n_total_;
  double tail_weight_ = 0.0;
  std::vector<int> tail_of_body_;
};

/// Arm sample for the chosen signal: Hajek IPW weights, or unit weights.
WeightedSample signal_weights(const Dataset& data, const PropensityFit* fit, int d, Signal signal);

/// Fits the tail on the exceedances of u = Q_w(p_u). `weights.source()` must
/// index into `data`.
ReconstructedQuantile reconstruct_quantile(const Dataset& data, const WeightedSample& weights,
                                           double p_u, TailMode mode,
                                           std::span<const std::size_t> tail_covariates = {});

/// Quantile curve of unit i at level p.
using UnitQuantile = std::function<double(std::size_t unit, double p)>;

/// Reference evaluation of S_n(theta) = sum_i w_i sum_k 1{Q_i(p_k) <= theta} (p_k - p_{k-1}) / sum_i w_i.
double integrated_signal(std::span<const double> unit_weights, const UnitQuantile& quantile,
                         const QuantileGrid& grid, double theta);
/// Reference evaluation on a reconstruction with the tail units as the summands.
double integrated_signal(const ReconstructedQuantile& recon, const QuantileGrid& grid, double theta);

/// Smallest theta with S_n(theta) >= tau, via the weighted quantile of all
/// grid atoms Q_i(p_k) with weights w_i (p_k - p_{k-1}).
double signal_root(std::span<const double> unit_weights, const UnitQuantile& quantile,
                   const QuantileGrid& grid, double tau);

/// S_n on a reconstruction, evaluated without enumerating atoms: the body is
/// shared by all tail units and each unit's tail atoms are monotone in k.
class DiscretizedSignal {
 public:
  DiscretizedSignal(const ReconstructedQuantile& recon, const QuantileGrid& grid);

  double operator()(double theta) const;
  /// Per-observation signal for body entry i: 1{y_i <= theta} below u, and the
  /// share of the unit's tail grid mass at or below theta for exceedances.
  double unit_signal(std::size_t body_index, double theta) const;
  /// Smallest theta with S_n(theta) >= tau.
  double root(double tau) const;
  /// Spacing between neighbouring grid quantiles where S_n reaches S_n(theta).
  double local_spacing(double theta) const;
  double max_atom() const;
  /// All finite atoms with weights w_i (p_k - p_{k-1}) / sum w.
  WeightedSample atoms() const;

  const QuantileGrid& grid() const noexcept { return grid_; }

 private:
  double atom(std::size_t unit, std::size_t k) const;
  double representative(std::size_t k) const;
  std::size_t tail_count(std::size_t unit, double theta) const;
  double body_cumulative(double theta) const;

  const ReconstructedQuantile& recon_;
  QuantileGrid grid_;
  std::size_t last_body_ = 0;             // largest k with p_k <= p_u
  std::vector<double> body_values_;       // Q_body(p_k), k = 0..last_body_
  std::vector<double> tail_excess_;       // unit excess at p_k, k > last_body_
  double total_weight_ = 0.0;
};

struct TieeConfig {
  double tau = 0.99;
  std::size_t K = 0;  ///< 0 selects default_grid_size(n)
  double p_u = std::numeric_limits<double>::quiet_NaN();  ///< NaN selects default_threshold_level(n)
  Signal signal = Signal::ipw;
  TailMode tail_mode = TailMode::covariate;
  std::vector<std::size_t> tail_covariates;  ///< empty: every covariate
  GridKind grid = GridKind::tail_refined;
  double r_star = std::numeric_limits<double>::infinity();
  PhiMethod phi = PhiMethod::automatic;
};

struct TieeEstimate {
  int d = 1;
  double tau = 0.0;
  double theta_hat = 0.0;
  double sigma_sq = 0.0;
  double phi_prime = 0.0;  ///< 0 when the moment is flat at theta_hat
  std::vector<double> g_values;  ///< one per observation of the full sample
  double p_u = 0.0;
  double u = 0.0;
  double xi = 0.0;
  double tau_eff = 0.0;
  std::size_t K = 0;
  int exceedances = 0;
  bool tail_fallback = false;
  /// A_eta M_eta^{-1} psi_eta,i for the GPD tail parameters (zero when the
  /// target is in the body); subtracted from g_values by the inference step.
  std::vector<double> tail_correction;
  std::vector<std::string> warnings;
};

double tau_eff(double tau, double p_u);

/// Per-observation term A_eta M_eta^{-1} psi_eta,i treating the GPD tail
/// parameters eta = (beta_sigma, xi) as a nuisance: psi is the weighted
/// likelihood score of each exceedance, M its mean Jacobian and A the
/// derivative of the smoothed signal at theta. Zero for rows that are not
/// exceedances. Throws SingularNuisanceError when M is not invertible.
std::vector<double> tail_nuisance_correction(const ReconstructedQuantile& recon, double theta);

QuantileGrid make_grid(const TieeConfig& config, double p_u, std::size_t n);

TieeEstimate solve_tiee(const TieeConfig& config, const ReconstructedQuantile& recon);

/// Full per-arm pipeline: weights, reconstruction, grid, solve.
TieeEstimate estimate_tiee(const Dataset& data, const PropensityFit* fit, int d,
                           const TieeConfig& config);

struct EqteResult {
  double tau = 0.0;
  double theta1 = 0.0;
  double theta0 = 0.0;
  double delta = 0.0;
  double sigma_delta_sq = std::numeric_limits<double>::quiet_NaN();
  std::optional<std::pair<double, double>> ci;
  std::vector<std::string> warnings;
};

EqteResult eqte(const TieeEstimate& est1, const TieeEstimate& est0);

}  // namespace tiee
