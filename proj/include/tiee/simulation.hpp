#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tiee/dataset.hpp"
#include "tiee/propensity.hpp"
#include "tiee/tiee.hpp"

namespace tiee::sim {

enum class Scenario { M1H, M2H, M3H, M1L, M2L, M3L };
enum class Regime { five_over_n, one_over_n, five_over_n_log_n };
enum class Method { tiee, zhang_firpo, causal_hill, pickands };
enum class PropensityVariant { true_model, polynomial, linear, logit, spurious };

std::string to_string(Scenario s);
std::string to_string(Regime r);
std::string to_string(Method m);
std::string to_string(PropensityVariant v);
std::string display_name(PropensityVariant v);
Scenario parse_scenario(const std::string& s);
Regime parse_regime(const std::string& s);
Method parse_method(const std::string& s);
PropensityVariant parse_variant(const std::string& s);

inline constexpr Scenario kAllScenarios[] = {Scenario::M1H, Scenario::M2H, Scenario::M3H,
                                             Scenario::M1L, Scenario::M2L, Scenario::M3L};
inline constexpr Regime kAllRegimes[] = {Regime::five_over_n_log_n, Regime::one_over_n,
                                         Regime::five_over_n};
inline constexpr PropensityVariant kAllVariants[] = {
    PropensityVariant::true_model, PropensityVariant::polynomial, PropensityVariant::linear,
    PropensityVariant::logit, PropensityVariant::spurious};

/// 1 - tau_n for the regime: 5/n, 1/n or 5/(n log n).
double tail_probability(Regime r, std::size_t n);
double target_level(Regime r, std::size_t n);

/// Uniform streams per unit.
enum Stream : std::uint32_t { kStreamX = 0, kStreamD = 1, kStreamY1 = 2, kStreamY0 = 3, kStreamZ = 4 };

/// True assignment probability 0.5 x^2 + 0.25.
double true_propensity(double x);
/// Potential outcome Y_d at covariate x from the uniform u (inverse CDF).
double potential_outcome(Scenario s, int d, double x, double u);
/// Whether Y_1 and Y_0 are driven by the same uniform draw.
bool shares_draw(Scenario s);

struct DgpSpec {
  Scenario scenario = Scenario::M1H;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  bool spurious = false;  ///< append a Uniform(-1,1) noise covariate z
};

struct Generated {
  Dataset data;
  std::vector<double> y1;
  std::vector<double> y0;
};

Generated generate(const DgpSpec& spec);

/// Propensity design for a misspecification variant (covariates: x, then z).
DesignSpec variant_design(PropensityVariant v);

struct OracleResult {
  double value = 0.0;
  double se = 0.0;  ///< from 20 independent blocks
  double q1 = 0.0;
  double q0 = 0.0;
};

/// delta(tau) from N_mc potential-outcome pairs.
OracleResult true_eqte_oracle(Scenario s, double tau, std::size_t n_mc, std::uint64_t seed);
/// Several levels on one set of draws.
std::vector<OracleResult> true_eqte_oracle(Scenario s, std::span<const double> taus, std::size_t n_mc,
                                           std::uint64_t seed);

struct ReplicateRecord {
  int rep = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  double estimate = std::numeric_limits<double>::quiet_NaN();
  bool has_ci = false;
  double lo = std::numeric_limits<double>::quiet_NaN();
  double hi = std::numeric_limits<double>::quiet_NaN();
  std::string error;
};

struct McResult {
  Scenario scenario = Scenario::M1H;
  Method method = Method::tiee;
  Regime regime = Regime::five_over_n;
  PropensityVariant propensity = PropensityVariant::true_model;
  std::size_t n = 0;
  double tau = 0.0;
  double p_u = std::numeric_limits<double>::quiet_NaN();
  std::size_t K = 0;
  double truth = 0.0;
  double truth_se = 0.0;
  int reps = 0;       ///< successful replicates
  int failures = 0;
  double bias = std::numeric_limits<double>::quiet_NaN();
  double mse = std::numeric_limits<double>::quiet_NaN();
  double coverage = std::numeric_limits<double>::quiet_NaN();
  int intervals = 0;
  std::map<std::string, int> failure_modes;
  std::vector<ReplicateRecord> records;

  std::string modal_failure() const;
};

struct McCampaign {
  Scenario scenario = Scenario::M1H;
  std::size_t n = 1000;
  int reps = 200;
  std::uint64_t base_seed = 0;
  std::vector<Method> methods{Method::tiee};
  std::vector<Regime> regimes{Regime::five_over_n};
  PropensityVariant propensity = PropensityVariant::true_model;
  TieeConfig tiee;                     ///< tau is set per regime
  std::vector<double> pu_values;       ///< TIEE sweep; empty uses tiee.p_u
  std::vector<std::size_t> k_values;   ///< TIEE sweep; empty uses tiee.K
  bool intervals = true;
  bool sandwich = false;  ///< propensity nuisance term in TIEE intervals
  double alpha = 0.10;
  int bootstrap_B = 500;
  std::size_t oracle_n = 4'000'000;
  std::uint64_t oracle_seed = 20240601;
  unsigned threads = 0;  ///< 0: TIEE_THREADS or hardware concurrency
};

/// Worker count: explicit request, else TIEE_THREADS, else hardware threads.
unsigned resolve_threads(unsigned requested);

/// Every (method, regime, p_u, K) cell on shared replicate datasets. Replicate
/// r uses seed derive_seed(base_seed, r) regardless of the worker count.
std::vector<McResult> run_campaign(const McCampaign& campaign);

/// Single-cell campaign; throws CampaignError when every replicate fails.
McResult run_mc(Scenario s, Method m, Regime r, int reps, std::uint64_t base_seed,
                const McCampaign& overrides = {});

struct CurvePoint {
  Regime regime;
  double x;
  double mse;
  double bias;
  int reps;
};

/// TIEE MSE over p_u in {0.85, 0.86, ..., 0.95}.
std::vector<CurvePoint> sensitivity_pu(Scenario s, const std::vector<Regime>& regimes, int reps,
                                       std::uint64_t seed, const McCampaign& overrides = {});
/// TIEE MSE over K in {100, 200, ..., 2000} with p_u at its default.
std::vector<CurvePoint> sensitivity_k(Scenario s, const std::vector<Regime>& regimes, int reps,
                                      std::uint64_t seed, const McCampaign& overrides = {});

/// TIEE on M1H under every propensity variant.
std::vector<McResult> misspec_study(const std::vector<Regime>& regimes, int reps, std::uint64_t seed,
                                    const McCampaign& overrides = {});

std::vector<double> pu_grid();
std::vector<std::size_t> k_grid();

/// CSV with one row per replicate and one aggregate row per cell; fixed
/// column order, 12 significant digits.
void write_results_csv(std::ostream& os, const std::vector<McResult>& results, bool include_replicates = true);
void write_curve_csv(std::ostream& os, const std::vector<CurvePoint>& curve, const std::string& x_name);

/// %.12g formatting used by every output file.
std::string format_number(double v);

}  // namespace tiee::sim
