#pragma once

#include <array>
#include <complex>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "atomtrap/ode.hpp"
#include "atomtrap/params.hpp"

namespace atomtrap::bloch {

// Basis order of every 4x4 matrix: a = F'=2, b = F=1, c = F=2, d = F'=3.
enum class Level : int { a = 0, b = 1, c = 2, d = 3 };

inline constexpr int index(Level l) { return static_cast<int>(l); }

using Matrix4 = Eigen::Matrix4cd;
using Liouvillian = Eigen::Matrix<std::complex<double>, 16, 16>;

class DensityMatrix {
 public:
  DensityMatrix() : m_(Matrix4::Zero()) {}
  explicit DensityMatrix(const Matrix4& m) : m_(m) {}

  static DensityMatrix pure(Level l);
  static DensityMatrix diagonal(double aa, double bb, double cc, double dd);

  const Matrix4& matrix() const { return m_; }
  Matrix4& matrix() { return m_; }

  double population(Level l) const { return m_(index(l), index(l)).real(); }
  double excited_population() const { return population(Level::a) + population(Level::d); }
  std::complex<double> trace() const { return m_.trace(); }

  // max |rho - rho^dagger|
  double hermiticity_error() const;
  // Smallest eigenvalue of the Hermitian part.
  double min_eigenvalue() const;

  // Hermitian within 1e-10, |trace - 1| <= 1e-9, eigenvalues >= -1e-8.
  bool is_physical(double herm_tol = 1e-10, double trace_tol = 1e-9, double pos_tol = -1e-8) const;

 private:
  Matrix4 m_;
};

// Spontaneous decay channel |to><from| with rate `rate`.
struct DecayChannel {
  Level from;
  Level to;
  double rate;
};

// Time-independent rotating-frame model. Hamiltonian is stored as H/hbar
// (rad/s).
struct RotatingFrameSystem {
  Matrix4 hamiltonian = Matrix4::Zero();
  std::vector<DecayChannel> decays;
  double gamma = 0.0;

  // The relaxation term: sum_k L rho L^dag - {L^dag L, rho}/2 over decays.
  Matrix4 relaxation(const Matrix4& rho) const;

  // H - i/2 sum L^dag L, the no-jump generator (still divided by hbar).
  Matrix4 effective_hamiltonian() const;
};

// Detunings of the three couplings from the light-shifted transitions
// (rad/s): repump b-a, cooling c-a, cooling c-d.
struct Detunings {
  double repump;
  double cool_f2;
  double cool_f3;
};

Detunings detunings(const ExperimentParams& params);

// Lab-frame Hamiltonian transformed with U = diag(e^{i theta_k t}),
//   theta_c = omega_c, theta_a = theta_d = omega_c + omega_2,
//   theta_b = omega_c + omega_2 - omega_1.
// All e^{+-i omega t} factors cancel because the coupling graph b-a-c-d is
// a tree; the diagonal becomes (-D2, D1 - D2, 0, -D3) and every coupling
// -Omega_i / 2. Decays: d->c at Gamma, a->b and a->c at Gamma/2.
RotatingFrameSystem build_system(const ExperimentParams& params);

// Same construction from explicit couplings (rad/s); used by tests and the
// two-level reductions.
RotatingFrameSystem build_system(double omega1, double omega2, double omega3, Detunings det,
                                 double gamma);

// -i [H, rho] + R(rho)
Matrix4 liouville_rhs(const Matrix4& rho, const RotatingFrameSystem& sys);
DensityMatrix liouville_rhs(const DensityMatrix& rho, const RotatingFrameSystem& sys);

// Vectorized generator: vec(drho/dt) = L vec(rho), row-major vec
// (element (i, j) at 4 i + j).
Liouvillian liouvillian(const RotatingFrameSystem& sys);

struct EvolveOptions {
  double rtol = 1e-10;
  double atol = 1e-13;
};

// rho(t) at each time of t_grid (sorted, t_grid[0] >= 0), starting from
// rho0 at t = 0. Throws IntegrationError on step-size underflow.
std::vector<DensityMatrix> evolve(const DensityMatrix& rho0, const RotatingFrameSystem& sys,
                                  std::span<const double> t_grid, EvolveOptions opts = {});

// Levels the steady state may occupy. Elements outside the mask are
// dropped from the linear system; the mask must be invariant under the
// dynamics.
using LevelMask = std::array<bool, 4>;
inline constexpr LevelMask kAllLevels{true, true, true, true};

// Solves L(rho) = 0, tr rho = 1. Throws DegenerateSteadyStateError when the
// null space of L (restricted to the mask) is not one-dimensional.
DensityMatrix steady_state(const RotatingFrameSystem& sys, const LevelMask& support = kAllLevels);

// Dimension of the null space of the (restricted) Liouvillian, counting
// singular values below rel_tol * sigma_max.
int steady_state_nullity(const RotatingFrameSystem& sys, const LevelMask& support = kAllLevels,
                         double rel_tol = 1e-9);

}  // namespace atomtrap::bloch
