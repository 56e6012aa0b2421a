#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "tiee/dataset.hpp"

namespace tiee {

enum class Link { identity, logit };

std::string to_string(Link link);
Link parse_link(const std::string& s);

/// x_j^power.
struct PowerTerm {
  std::size_t covariate = 0;
  int power = 1;
};

/// Basis and link for the Bernoulli propensity GLM.
struct DesignSpec {
  bool intercept = true;
  std::vector<PowerTerm> powers;
  std::vector<std::pair<std::size_t, std::size_t>> interactions;
  Link link = Link::logit;
  double clip = 0.01;

  std::size_t columns() const { return (intercept ? 1 : 0) + powers.size() + interactions.size(); }

  /// Intercept plus x_j, x_j^2, ..., x_j^degree for covariate j.
  DesignSpec& polynomial(std::size_t covariate, int degree);
  /// Intercept plus every covariate at power one.
  static DesignSpec linear(std::size_t cov_dim, Link link);

  /// Parses a comma-separated basis such as "1,x,x^2,x*z" or "1,ao:4" against
  /// covariate names. "1" is the intercept, "name:k" expands to powers 1..k.
  static DesignSpec parse(const std::string& basis, const std::vector<std::string>& names,
                          Link link);
  std::string describe(const std::vector<std::string>& names) const;
};

/// Column order: intercept, powers in declaration order, then interactions.
Eigen::MatrixXd build_design(const Dataset& data, const DesignSpec& spec);

/// Fitted assignment model. `pi` holds P(D=1|X) clipped to [clip, 1-clip].
struct PropensityFit {
  DesignSpec spec;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd pi;
  bool converged = false;
  int iterations = 0;
  std::string warning;
  /// Per-observation estimating-function values psi(W_i, zeta_hat), n x q.
  Eigen::MatrixXd scores;
  /// Mean derivative of psi in zeta at zeta_hat, q x q.
  Eigen::MatrixXd jacobian;

  double pi_arm(std::size_t i, int d) const { return d == 1 ? pi[i] : 1.0 - pi[i]; }
};

/// Model probabilities (before clipping) for arbitrary coefficients.
Eigen::VectorXd linear_predictor_to_probability(const Eigen::VectorXd& eta, Link link);
/// Clipped P(D=1|X) for given coefficients; used for perturbation derivatives.
Eigen::VectorXd propensity_at(const Eigen::MatrixXd& design, const Eigen::VectorXd& coefficients,
                              const DesignSpec& spec);

/// Bernoulli maximum likelihood. Logit: Newton/IRLS. Identity: damped Newton
/// on the likelihood with probabilities projected into [clip, 1-clip].
/// Tolerance 1e-8 on the coefficient change, at most 100 iterations.
PropensityFit fit_glm(const Dataset& data, const DesignSpec& spec);

/// Hajek-normalized inverse-probability weights for arm d (mean 1 over the
/// arm), paired with that arm's outcomes; sources index into `data`.
WeightedSample ipw_weights(const PropensityFit& fit, const Dataset& data, int d);

}  // namespace tiee
