#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "atomtrap/error.hpp"

namespace atomtrap::ode {

struct Tolerances {
  double rtol = 1e-10;
  double atol = 1e-13;
  long max_steps = 50'000'000;
};

// Dormand-Prince 5(4) with PI step control. State is any Eigen dense type;
// rhs(t, y) returns dy/dt. Integrates from t = 0 and records y at every
// requested output time (sorted, >= 0), hitting them exactly.
//
// atol is applied to |y| measured in units of the largest |y(0)| entry, so
// callers need not rescale.
template <class State, class Rhs>
std::vector<State> integrate(const State& y0, std::span<const double> times, Rhs&& rhs, Tolerances tol = {}) {
  // Butcher tableau.
  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                   a65 = -5103.0 / 18656;
  constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                   e6 = 22.0 / 525, e7 = -1.0 / 40;

  std::vector<State> out;
  out.reserve(times.size());
  if (times.empty()) return out;
  if (!y0.allFinite()) throw IntegrationError(0.0, "non-finite initial state");

  const double scale = std::max(y0.cwiseAbs().maxCoeff(), 1e-300);
  State y = y0;
  double t = 0.0;
  State k1 = rhs(t, y);
  // Initial step from the rate scale of the problem.
  double rate = k1.cwiseAbs().maxCoeff() / scale;
  double h = rate > 0.0 ? 0.01 / rate : (times.back() > 0.0 ? times.back() : 1.0);
  double err_prev = 1e-4;
  long steps = 0;

  for (double target : times) {
    if (target < t) throw IntegrationError(target, "output times must be sorted and >= 0");
    // Output times a few ulps apart are the same time.
    if (target - t <= 1e-14 * std::abs(target)) t = target;
    while (t < target) {
      if (++steps > tol.max_steps) throw IntegrationError(t, "maximum number of steps exceeded");
      // Stretch to the output time rather than leave a sliver behind.
      const bool last = t + 1.01 * h >= target;
      const double step = last ? target - t : h;
      if (step <= 1e-15 * std::max(std::abs(t), 1e-300) || !std::isfinite(step))
        throw IntegrationError(t, "step size underflow");

      State k2 = rhs(t + c2 * step, y + step * (a21 * k1));
      State k3 = rhs(t + c3 * step, y + step * (a31 * k1 + a32 * k2));
      State k4 = rhs(t + c4 * step, y + step * (a41 * k1 + a42 * k2 + a43 * k3));
      State k5 = rhs(t + c5 * step, y + step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
      State k6 = rhs(t + step, y + step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
      State y_new = y + step * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
      State k7 = rhs(t + step, y_new);
      State err_vec = step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

      double err = 0.0;
      for (Eigen::Index i = 0; i < err_vec.size(); ++i) {
        const double sc = tol.atol * scale + tol.rtol * std::max(std::abs(y(i)), std::abs(y_new(i)));
        err = std::max(err, std::abs(err_vec(i)) / sc);
      }
      if (!std::isfinite(err) || !y_new.allFinite()) throw IntegrationError(t, "non-finite state");

      if (err <= 1.0) {
        t = last ? target : t + step;
        y = std::move(y_new);
        k1 = std::move(k7);
        const double fac = err > 0.0 ? 0.9 * std::pow(err, -0.7 / 5) * std::pow(err_prev, 0.4 / 5) : 5.0;
        err_prev = std::max(err, 1e-4);
        // Do not let a short final step to an output time shrink h.
        h = std::max(h, step) * std::clamp(fac, 0.2, 5.0);
        if (last) h = std::max(h, step);
      } else {
        h = step * std::max(0.2, 0.9 * std::pow(err, -0.2));
      }
    }
    out.push_back(y);
  }
  return out;
}

}  // namespace atomtrap::ode
