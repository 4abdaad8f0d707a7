#pragma once

// Reference solutions written independently of the library code paths.

#include <array>
#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <unsupported/Eigen/Polynomials>

namespace oracle {

// Two-level atom (ground g, excited e) driven with Rabi frequency omega at
// detuning delta, decay rate gamma, starting in g at t = 0. All rad/s.
//
// Laplace transform of rho_ee(t):
//   n(s) = omega^2 (s + gamma/2) / (2 s D(s)),
//   D(s) = (s + gamma)((s + gamma/2)^2 + delta^2) + omega^2 (s + gamma/2)
// and rho_ee(t) is the sum of residues of n(s) e^{st}.
struct TwoLevel {
  double omega, delta, gamma;

  double steady_excited() const {
    return 0.25 * omega * omega / (delta * delta + 0.25 * gamma * gamma + 0.5 * omega * omega);
  }

  std::vector<std::complex<double>> roots() const {
    const double g = gamma;
    Eigen::Vector4d c;  // ascending powers
    c << g * (0.25 * g * g + delta * delta) + 0.5 * omega * omega * g,
        1.25 * g * g + delta * delta + omega * omega, 2.0 * g, 1.0;
    Eigen::PolynomialSolver<double, 3> solver(c);
    std::vector<std::complex<double>> r;
    for (int i = 0; i < 3; ++i) r.push_back(solver.roots()(i));
    // Newton polish on the cubic.
    for (auto& s : r) {
      for (int it = 0; it < 5; ++it) {
        const auto d = ((s + c(2)) * s + c(1)) * s + c(0);
        const auto dd = (3.0 * s + 2.0 * c(2)) * s + c(1);
        s -= d / dd;
      }
    }
    return r;
  }

  double excited(double t) const {
    const double g = gamma;
    const double c1 = 1.25 * g * g + delta * delta + omega * omega;
    std::complex<double> sum = steady_excited();
    for (const auto& s : roots()) {
      const auto dprime = 3.0 * s * s + 4.0 * g * s + c1;
      sum += omega * omega * (s + 0.5 * g) / (2.0 * s * dprime) * std::exp(s * t);
    }
    return sum.real();
  }

  double g2(double t) const { return excited(t) / steady_excited(); }
};

// Resonant closed form:
//   g2 = 1 - e^{-3 gamma t / 4} (cos W t + 3 gamma / (4 W) sin W t),
//   W = sqrt(omega^2 - gamma^2 / 16).
inline double resonant_g2(double omega, double gamma, double t) {
  const double w = std::sqrt(omega * omega - gamma * gamma / 16.0);
  return 1.0 - std::exp(-0.75 * gamma * t) * (std::cos(w * t) + 0.75 * gamma / w * std::sin(w * t));
}

// Optical Bloch vector (u, v, w = rho_ee - rho_gg) propagated exactly with a
// matrix exponential of the affine 3x3 system.
inline double bloch_vector_excited(double omega, double delta, double gamma, double t) {
  Eigen::Matrix4d a = Eigen::Matrix4d::Zero();
  a(0, 0) = -0.5 * gamma;
  a(0, 1) = delta;
  a(1, 0) = -delta;
  a(1, 1) = -0.5 * gamma;
  a(1, 2) = omega;
  a(2, 1) = -omega;
  a(2, 2) = -gamma;
  a(2, 3) = -gamma;  // constant term: dw/dt = ... - gamma (w + 1)
  const Eigen::Vector4d x0(0.0, 0.0, -1.0, 1.0);
  const Eigen::Vector4d x = (a * t).exp() * x0;
  return 0.5 * (1.0 + x(2));
}

// sum_k gamma_k (L rho L^+ - 1/2 {L^+ L, rho}) with L = |to><from|, built
// from explicit outer products.
inline Eigen::Matrix4cd lindblad(const Eigen::Matrix4cd& rho, const std::vector<std::array<double, 3>>& channels) {
  Eigen::Matrix4cd out = Eigen::Matrix4cd::Zero();
  for (const auto& ch : channels) {
    Eigen::Matrix4cd l = Eigen::Matrix4cd::Zero();
    l(static_cast<int>(ch[1]), static_cast<int>(ch[0])) = 1.0;
    const Eigen::Matrix4cd ld = l.adjoint();
    out += ch[2] * (l * rho * ld - 0.5 * (ld * l * rho + rho * ld * l));
  }
  return out;
}

inline Eigen::Matrix4cd random_density(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::Matrix4cd a;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) a(i, j) = {n(rng), n(rng)};
  Eigen::Matrix4cd rho = a * a.adjoint();
  return rho / rho.trace();
}

// Poisson / binomial helpers for "within k sigma" checks.
inline bool within_sigma(double observed, double expected, double sigma, double k = 3.0) {
  return std::abs(observed - expected) <= k * sigma;
}

}  // namespace oracle
