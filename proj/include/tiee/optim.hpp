#pragma once

#include <Eigen/Dense>
#include <functional>

namespace tiee {

struct NelderMeadOptions {
  double initial_step = 0.1;
  double f_tol = 1e-11;
  double x_tol = 1e-9;
  int max_evaluations = 5000;
  int restarts = 1;
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Derivative-free minimization; `f` may return +inf outside the feasible set.
/// After convergence the simplex is rebuilt around the best vertex `restarts`
/// times, which guards against collapse on a ridge.
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& x0, const NelderMeadOptions& opt = {});

}  // namespace tiee
