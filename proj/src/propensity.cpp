#include "tiee/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tiee/errors.hpp"

namespace tiee {

namespace {
constexpr double kCoefTol = 1e-8;
constexpr int kMaxIter = 100;
constexpr double kDivergence = 1e6;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}
}  // namespace

std::string to_string(Link link) { return link == Link::logit ? "logit" : "identity"; }

Link parse_link(const std::string& s) {
  if (s == "logit") return Link::logit;
  if (s == "identity") return Link::identity;
  throw UsageError("unknown link '" + s + "' (expected logit or identity)");
}

DesignSpec& DesignSpec::polynomial(std::size_t covariate, int degree) {
  if (degree < 1) throw UsageError("polynomial degree must be >= 1");
  for (int p = 1; p <= degree; ++p) powers.push_back({covariate, p});
  return *this;
}

DesignSpec DesignSpec::linear(std::size_t cov_dim, Link link) {
  DesignSpec s;
  s.link = link;
  for (std::size_t j = 0; j < cov_dim; ++j) s.powers.push_back({j, 1});
  return s;
}

DesignSpec DesignSpec::parse(const std::string& basis, const std::vector<std::string>& names,
                             Link link) {
  DesignSpec s;
  s.link = link;
  s.intercept = false;
  auto index_of = [&](const std::string& name) {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw UsageError("basis refers to unknown covariate '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
  };
  std::stringstream ss(basis);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    if (tok == "1") {
      s.intercept = true;
    } else if (auto star = tok.find('*'); star != std::string::npos) {
      s.interactions.emplace_back(index_of(trim(tok.substr(0, star))),
                                  index_of(trim(tok.substr(star + 1))));
    } else if (auto caret = tok.find('^'); caret != std::string::npos) {
      const int p = std::stoi(tok.substr(caret + 1));
      if (p < 1) throw UsageError("basis power must be >= 1 in '" + tok + "'");
      s.powers.push_back({index_of(trim(tok.substr(0, caret))), p});
    } else if (auto colon = tok.find(':'); colon != std::string::npos) {
      s.polynomial(index_of(trim(tok.substr(0, colon))), std::stoi(tok.substr(colon + 1)));
    } else {
      s.powers.push_back({index_of(tok), 1});
    }
  }
  if (s.columns() == 0) throw UsageError("basis '" + basis + "' has no terms");
  return s;
}

std::string DesignSpec::describe(const std::vector<std::string>& names) const {
  std::vector<std::string> parts;
  auto nm = [&](std::size_t j) { return j < names.size() ? names[j] : "x" + std::to_string(j + 1); };
  if (intercept) parts.emplace_back("1");
  for (const auto& t : powers) parts.push_back(t.power == 1 ? nm(t.covariate) : nm(t.covariate) + "^" + std::to_string(t.power));
  for (const auto& [a, b] : interactions) parts.push_back(nm(a) + "*" + nm(b));
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "," : "") + parts[i];
  return out;
}

Eigen::MatrixXd build_design(const Dataset& data, const DesignSpec& spec) {
  for (const auto& t : spec.powers)
    if (t.covariate >= data.cov_dim()) throw UsageError("design refers to a missing covariate");
  for (const auto& [a, b] : spec.interactions)
    if (a >= data.cov_dim() || b >= data.cov_dim()) throw UsageError("design refers to a missing covariate");
  Eigen::MatrixXd X(data.n(), spec.columns());
  for (std::size_t i = 0; i < data.n(); ++i) {
    Eigen::Index c = 0;
    if (spec.intercept) X(i, c++) = 1.0;
    for (const auto& t : spec.powers) X(i, c++) = std::pow(data.covariate(i, t.covariate), t.power);
    for (const auto& [a, b] : spec.interactions) X(i, c++) = data.covariate(i, a) * data.covariate(i, b);
  }
  return X;
}

Eigen::VectorXd linear_predictor_to_probability(const Eigen::VectorXd& eta, Link link) {
  if (link == Link::identity) return eta;
  return eta.unaryExpr([](double e) {
    return e >= 0 ? 1.0 / (1.0 + std::exp(-e)) : std::exp(e) / (1.0 + std::exp(e));
  });
}

Eigen::VectorXd propensity_at(const Eigen::MatrixXd& design, const Eigen::VectorXd& coefficients,
                              const DesignSpec& spec) {
  Eigen::VectorXd p = linear_predictor_to_probability(design * coefficients, spec.link);
  return p.cwiseMax(spec.clip).cwiseMin(1.0 - spec.clip);
}

namespace {

struct NewtonResult {
  Eigen::VectorXd beta;
  bool converged = false;
  int iterations = 0;
};

NewtonResult fit_logit(const Eigen::MatrixXd& X, const Eigen::VectorXd& D) {
  const Eigen::Index q = X.cols();
  NewtonResult r{Eigen::VectorXd::Zero(q)};
  for (int it = 1; it <= kMaxIter; ++it) {
    r.iterations = it;
    const Eigen::VectorXd p = linear_predictor_to_probability(X * r.beta, Link::logit);
    const Eigen::VectorXd w = (p.array() * (1.0 - p.array())).max(1e-300).matrix();
    const Eigen::MatrixXd H = X.transpose() * w.asDiagonal() * X;
    const Eigen::VectorXd step = H.ldlt().solve(X.transpose() * (D - p));
    if (!step.allFinite()) break;
    r.beta += step;
    if (r.beta.cwiseAbs().maxCoeff() > kDivergence) break;  // separation
    if (step.cwiseAbs().maxCoeff() < kCoefTol) {
      r.converged = true;
      break;
    }
  }
  return r;
}

double identity_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& D, const Eigen::VectorXd& beta,
                       double clip) {
  const Eigen::VectorXd p = (X * beta).cwiseMax(clip).cwiseMin(1.0 - clip);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < D.size(); ++i) ll += D[i] > 0.5 ? std::log(p[i]) : std::log1p(-p[i]);
  return ll;
}

NewtonResult fit_identity(const Eigen::MatrixXd& X, const Eigen::VectorXd& D, double clip) {
  // Linear-probability least squares as the starting point.
  NewtonResult r{X.colPivHouseholderQr().solve(D)};
  double ll = identity_loglik(X, D, r.beta, clip);
  for (int it = 1; it <= kMaxIter; ++it) {
    r.iterations = it;
    const Eigen::VectorXd eta = X * r.beta;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(X.cols());
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(X.cols(), X.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const double p = eta[i];
      if (p <= clip || p >= 1.0 - clip) continue;  // projected: flat in beta
      const double di = D[i];
      grad += ((di - p) / (p * (1.0 - p))) * X.row(i).transpose();
      info.noalias() += (di / (p * p) + (1.0 - di) / ((1.0 - p) * (1.0 - p))) *
                        X.row(i).transpose() * X.row(i);
    }
    info.diagonal().array() += 1e-12 * (1.0 + info.diagonal().array().abs());
    Eigen::VectorXd step = info.ldlt().solve(grad);
    if (!step.allFinite()) break;
    double scale = 1.0;
    Eigen::VectorXd next = r.beta + step;
    double ll_next = identity_loglik(X, D, next, clip);
    while (ll_next < ll - 1e-12 * std::abs(ll) && scale > 1e-10) {
      scale *= 0.5;
      next = r.beta + scale * step;
      ll_next = identity_loglik(X, D, next, clip);
    }
    const double change = (next - r.beta).cwiseAbs().maxCoeff();
    r.beta = next;
    ll = ll_next;
    if (change < kCoefTol) {
      r.converged = true;
      break;
    }
  }
  return r;
}

}  // namespace

PropensityFit fit_glm(const Dataset& data, const DesignSpec& spec) {
  data.require_both_arms();
  if (!(spec.clip > 0.0 && spec.clip < 0.5)) throw UsageError("clip must lie in (0, 0.5)");
  const Eigen::MatrixXd X = build_design(data, spec);
  const Eigen::Index n = X.rows(), q = X.cols();
  if (q == 0) throw UsageError("design has no columns");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (n < q || qr.rank() < q)
    throw SingularDesignError("propensity design matrix is rank deficient (rank " +
                              std::to_string(qr.rank()) + " < " + std::to_string(q) + ")");
  Eigen::VectorXd D(n);
  for (Eigen::Index i = 0; i < n; ++i) D[i] = data.d(static_cast<std::size_t>(i));

  const NewtonResult nr = spec.link == Link::logit ? fit_logit(X, D) : fit_identity(X, D, spec.clip);
  PropensityFit fit;
  fit.spec = spec;
  fit.coefficients = nr.beta;
  fit.converged = nr.converged;
  fit.iterations = nr.iterations;
  if (!nr.converged)
    fit.warning = "propensity " + to_string(spec.link) + " fit did not converge after " +
                  std::to_string(nr.iterations) + " iterations";

  const Eigen::VectorXd raw = linear_predictor_to_probability(X * nr.beta, spec.link);
  fit.pi = raw.cwiseMax(spec.clip).cwiseMin(1.0 - spec.clip);
  fit.scores.resize(n, q);
  fit.jacobian = Eigen::MatrixXd::Zero(q, q);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = raw[i];
    if (spec.link == Link::logit) {
      fit.scores.row(i) = (D[i] - p) * X.row(i);
      fit.jacobian.noalias() -= p * (1.0 - p) * X.row(i).transpose() * X.row(i);
    } else if (p > spec.clip && p < 1.0 - spec.clip) {
      fit.scores.row(i) = ((D[i] - p) / (p * (1.0 - p))) * X.row(i);
      fit.jacobian.noalias() -= (D[i] / (p * p) + (1.0 - D[i]) / ((1.0 - p) * (1.0 - p))) *
                                X.row(i).transpose() * X.row(i);
    } else {
      fit.scores.row(i).setZero();
    }
  }
  fit.jacobian /= static_cast<double>(n);
  return fit;
}

WeightedSample ipw_weights(const PropensityFit& fit, const Dataset& data, int d) {
  if (static_cast<std::size_t>(fit.pi.size()) != data.n())
    throw UsageError("propensity fit was produced on a different dataset");
  std::vector<double> values, weights;
  std::vector<std::size_t> source;
  for (std::size_t i = 0; i < data.n(); ++i) {
    if (data.d(i) != d) continue;
    values.push_back(data.y(i));
    weights.push_back(1.0 / fit.pi_arm(i, d));
    source.push_back(i);
  }
  if (values.empty()) throw EmptyArmError("arm d=" + std::to_string(d) + " has no units");
  double mean = 0.0;
  for (double w : weights) mean += w;
  mean /= static_cast<double>(weights.size());
  for (double& w : weights) w /= mean;
  return WeightedSample(std::move(values), std::move(weights), std::move(source));
}

}  // namespace tiee
