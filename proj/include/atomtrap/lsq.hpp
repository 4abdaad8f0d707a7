#pragma once

#include <functional>
#include <optional>

#include <Eigen/Dense>

namespace atomtrap::lsq {

// Weighted residuals r(p) = (y - model(p)) / sigma.
using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct Options {
  int max_iterations = 200;
  double step_tolerance = 1e-12;  // relative parameter change
  double chi2_tolerance = 1e-14;  // relative chi^2 change
  // Optional per-parameter lower bounds (projected); NaN = unbounded.
  std::optional<Eigen::VectorXd> lower;
  // Relative finite-difference step for the Jacobian.
  double fd_step = 1e-6;
  // Floor on the absolute finite-difference step (parameter units).
  double fd_min_step = 1e-14;
};

struct Result {
  Eigen::VectorXd params;
  Eigen::MatrixXd covariance;  // (J^T J)^-1 at the solution, unscaled
  double chi2 = 0.0;
  int dof = 0;
  int iterations = 0;
  // Parameters pinned at their lower bound with the gradient pushing out.
  std::vector<bool> at_bound;

  double chi2_reduced() const { return dof > 0 ? chi2 / dof : 0.0; }
};

// Levenberg-Marquardt with Marquardt diagonal scaling and central
// finite-difference Jacobian. Throws FitError when it fails to converge
// within max_iterations.
Result levenberg_marquardt(const ResidualFn& residuals, Eigen::VectorXd start, const Options& opts = {});

}  // namespace atomtrap::lsq
