#pragma once

#include <Eigen/Dense>
#include <functional>
#include <span>
#include <string>
#include <utility>

#include "tiee/dataset.hpp"
#include "tiee/propensity.hpp"
#include "tiee/tiee.hpp"

namespace tiee {

/// (1/n) sum g_i^2 - ((1/n) sum g_i)^2.
double moment_variance(std::span<const double> g);
/// Mean-corrected cross moment (1/n) sum g1_i g0_i - mean(g1) mean(g0).
double moment_covariance(std::span<const double> g1, std::span<const double> g0);

/// Phi'(theta_hat) from the signal S. Finite differences use the half-width
/// h = max(1e-3 |theta|, 5 * local_spacing); the KDE path uses a Gaussian
/// kernel with Silverman bandwidth on `atoms()`. `automatic` tries the finite
/// difference first and falls back to the KDE when it is zero.
double phi_derivative(const std::function<double(double)>& S, double theta_hat, PhiMethod method,
                      double local_spacing,
                      const std::function<WeightedSample()>& atoms = {});

/// Weighted Gaussian kernel density at x with Silverman's bandwidth.
double weighted_kde(const WeightedSample& sample, double x);

struct VarianceComponents {
  double Sigma11 = 0.0;
  double Sigma00 = 0.0;
  double Sigma10 = 0.0;
  double PhiPrime1 = 0.0;
  double PhiPrime0 = 0.0;
  double sigma_delta_sq = 0.0;
};

/// Sigma11/Phi1'^2 + Sigma00/Phi0'^2 - 2 Sigma10/(Phi1' Phi0'), floored at 0.
/// `warning` (if given) receives a message when the floor is applied.
double eqte_variance(const VarianceComponents& c, std::string* warning = nullptr);

/// delta_hat -/+ z_{1-alpha/2} sigma_delta / sqrt(n).
std::pair<double, double> confidence_interval(double delta_hat, double sigma_delta_sq, std::size_t n,
                                              double alpha);

struct SandwichParts {
  Eigen::RowVectorXd A_zeta;
  Eigen::MatrixXd M;
  Eigen::MatrixXd Sigma_psi;
  Eigen::RowVectorXd Sigma_g_psi;
  Eigen::MatrixXd V_zeta;  ///< M^{-1} Sigma_psi M^{-T}
  Eigen::VectorXd C;       ///< M^{-1} Sigma_g_psi^T
};

/// [sigma^2 + A V_zeta A^T - 2 A C] / Phi'^2; fills V_zeta and C.
double sandwich_variance(double sigma_sq, double phi_prime, SandwichParts& parts);

/// Plug-in blocks for arm d: M and the score covariances from the fitted GLM,
/// A_zeta by central differences of Phi_n(theta_hat; zeta) with the whole
/// reconstruction recomputed at perturbed propensity coefficients.
SandwichParts sandwich_parts(const Dataset& data, const PropensityFit& fit, const TieeConfig& config,
                             const TieeEstimate& est);

struct InferenceOptions {
  double alpha = 0.10;
  bool sandwich = false;      ///< propensity coefficients as a nuisance
  bool tail_nuisance = true;  ///< GPD tail parameters as a nuisance
};

/// delta_hat with sigma_delta^2 and the (1 - alpha) interval. The interval is
/// left empty when either derivative is zero.
EqteResult infer_eqte(const Dataset& data, const PropensityFit* fit, const TieeConfig& config,
                      const TieeEstimate& est1, const TieeEstimate& est0,
                      const InferenceOptions& options = {});

/// estimate_tiee for both arms followed by infer_eqte.
EqteResult estimate_eqte(const Dataset& data, const PropensityFit* fit, const TieeConfig& config,
                         const InferenceOptions& options = {});

}  // namespace tiee
