#include "atomtrap/lsq.hpp"

#include <cmath>
#include <limits>

#include "atomtrap/error.hpp"

namespace atomtrap::lsq {
namespace {

bool bounded(const Options& o, Eigen::Index i) { return o.lower && std::isfinite((*o.lower)(i)); }

void project(const Options& o, Eigen::VectorXd& p) {
  if (!o.lower) return;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (bounded(o, i) && p(i) < (*o.lower)(i)) p(i) = (*o.lower)(i);
}

Eigen::MatrixXd jacobian(const ResidualFn& f, const Eigen::VectorXd& p, const Eigen::VectorXd& r0,
                         const Options& o) {
  Eigen::MatrixXd j(r0.size(), p.size());
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    const double h = std::max(o.fd_step * std::abs(p(k)), o.fd_min_step);
    Eigen::VectorXd hi = p, lo = p;
    hi(k) += h;
    lo(k) -= h;
    if (bounded(o, k) && lo(k) < (*o.lower)(k)) {
      // One-sided at the bound.
      j.col(k) = (f(hi) - r0) / h;
    } else {
      j.col(k) = (f(hi) - f(lo)) / (2.0 * h);
    }
  }
  return j;
}

}  // namespace

Result levenberg_marquardt(const ResidualFn& residuals, Eigen::VectorXd p, const Options& opts) {
  project(opts, p);
  Eigen::VectorXd r = residuals(p);
  double chi2 = r.squaredNorm();
  if (!std::isfinite(chi2)) throw FitError("fit: non-finite residuals at the starting point");
  const Eigen::Index n = p.size();
  double lambda = 1e-3;
  Result res;
  bool converged = false;
  Eigen::MatrixXd j;

  int it = 0;
  for (; it < opts.max_iterations && !converged; ++it) {
    j = jacobian(residuals, p, r, opts);
    const Eigen::MatrixXd jtj = j.transpose() * j;
    const Eigen::VectorXd grad = j.transpose() * r;  // descent direction is +grad for r = y - model
    if (grad.cwiseAbs().maxCoeff() == 0.0) {
      converged = true;
      break;
    }

    bool improved = false;
    for (int tries = 0; tries < 40; ++tries) {
      Eigen::MatrixXd a = jtj;
      for (Eigen::Index k = 0; k < n; ++k) a(k, k) += lambda * std::max(jtj(k, k), 1e-300);
      // r = y - f, so J_f = -J_r and the GN step is -(J^T J)^-1 J^T r.
      Eigen::VectorXd step = -a.ldlt().solve(grad);
      Eigen::VectorXd trial = p + step;
      project(opts, trial);
      const Eigen::VectorXd rt = residuals(trial);
      const double chi2_t = rt.squaredNorm();
      if (std::isfinite(chi2_t) && chi2_t <= chi2) {
        const double dchi = chi2 - chi2_t;
        const double dp = (trial - p).norm() / std::max(p.norm(), 1e-300);
        p = trial;
        r = rt;
        chi2 = chi2_t;
        lambda = std::max(lambda * 0.3, 1e-12);
        improved = true;
        if (dp < opts.step_tolerance || dchi <= opts.chi2_tolerance * std::max(chi2, 1e-300)) converged = true;
        break;
      }
      lambda *= 10.0;
      if (lambda > 1e16) break;
    }
    if (!improved) {
      // No downhill step at any damping: we are at the minimum to working
      // precision.
      converged = true;
    }
  }
  if (!converged) throw FitError("fit did not converge within " + std::to_string(opts.max_iterations) + " iterations");

  j = jacobian(residuals, p, r, opts);
  res.params = p;
  res.chi2 = chi2;
  res.dof = static_cast<int>(r.size() - n);
  res.iterations = it;
  res.at_bound.assign(static_cast<std::size_t>(n), false);
  if (opts.lower) {
    const Eigen::VectorXd grad = j.transpose() * r;
    for (Eigen::Index k = 0; k < n; ++k)
      // d chi2 / d p = 2 J^T r; positive means the optimum lies below the bound.
      if (bounded(opts, k) && p(k) <= (*opts.lower)(k) && grad(k) > 0.0) res.at_bound[k] = true;
  }
  const Eigen::MatrixXd jtj = j.transpose() * j;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(jtj);
  if (cod.rank() == n) {
    res.covariance = jtj.inverse();
  } else {
    res.covariance = Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::infinity());
  }
  return res;
}

}  // namespace atomtrap::lsq
