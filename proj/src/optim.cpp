#include "tiee/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace tiee {

namespace {

NelderMeadResult run_simplex(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& x0, const NelderMeadOptions& opt, int budget) {
  const Eigen::Index dim = x0.size();
  std::vector<Eigen::VectorXd> pts(dim + 1, x0);
  std::vector<double> val(dim + 1);
  int evals = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evals;
    const double v = f(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };
  for (Eigen::Index k = 0; k < dim; ++k) pts[k + 1][k] += opt.initial_step;
  for (Eigen::Index k = 0; k <= dim; ++k) val[k] = eval(pts[k]);

  std::vector<Eigen::Index> order(dim + 1);
  bool converged = false;
  while (evals < budget) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return val[a] < val[b]; });
    const Eigen::Index best = order.front(), worst = order.back(), second = order[dim - 1];

    double xspread = 0.0;
    for (Eigen::Index k = 0; k <= dim; ++k)
      xspread = std::max(xspread, (pts[k] - pts[best]).cwiseAbs().maxCoeff());
    const double fspread = std::abs(val[worst] - val[best]);
    if (std::isfinite(val[worst]) && fspread <= opt.f_tol * (1.0 + std::abs(val[best])) &&
        xspread <= opt.x_tol * (1.0 + pts[best].cwiseAbs().maxCoeff())) {
      converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
    for (Eigen::Index k = 0; k <= dim; ++k)
      if (k != worst) centroid += pts[k];
    centroid /= static_cast<double>(dim);

    const Eigen::VectorXd xr = centroid + (centroid - pts[worst]);
    const double fr = eval(xr);
    if (fr < val[best]) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = eval(xe);
      if (fe < fr) {
        pts[worst] = xe;
        val[worst] = fe;
      } else {
        pts[worst] = xr;
        val[worst] = fr;
      }
      continue;
    }
    if (fr < val[second]) {
      pts[worst] = xr;
      val[worst] = fr;
      continue;
    }
    const bool outside = fr < val[worst];
    const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                                       : Eigen::VectorXd(centroid + 0.5 * (pts[worst] - centroid));
    const double fc = eval(xc);
    if (fc < (outside ? fr : val[worst])) {
      pts[worst] = xc;
      val[worst] = fc;
      continue;
    }
    for (Eigen::Index k = 0; k <= dim; ++k) {
      if (k == best) continue;
      pts[k] = pts[best] + 0.5 * (pts[k] - pts[best]);
      val[k] = eval(pts[k]);
    }
  }
  const auto it = std::min_element(val.begin(), val.end());
  return {pts[static_cast<std::size_t>(it - val.begin())], *it, evals, converged};
}

}  // namespace

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& x0, const NelderMeadOptions& opt) {
  NelderMeadResult res = run_simplex(f, x0, opt, opt.max_evaluations);
  for (int r = 0; r < opt.restarts && res.converged; ++r) {
    NelderMeadOptions o = opt;
    o.initial_step = std::max(opt.initial_step * 0.1, 1e-4);
    NelderMeadResult again = run_simplex(f, res.x, o, opt.max_evaluations - res.evaluations);
    again.evaluations += res.evaluations;
    if (again.value <= res.value) res = again;
    else res.evaluations = again.evaluations;
  }
  return res;
}

}  // namespace tiee
