#include "atomtrap/bloch.hpp"

#include <algorithm>
#include <cmath>

#include "atomtrap/error.hpp"
#include "atomtrap/trap.hpp"

namespace atomtrap::bloch {

DensityMatrix DensityMatrix::pure(Level l) {
  DensityMatrix r;
  r.m_(index(l), index(l)) = 1.0;
  return r;
}

DensityMatrix DensityMatrix::diagonal(double aa, double bb, double cc, double dd) {
  DensityMatrix r;
  r.m_.diagonal() << aa, bb, cc, dd;
  return r;
}

double DensityMatrix::hermiticity_error() const { return (m_ - m_.adjoint()).cwiseAbs().maxCoeff(); }

double DensityMatrix::min_eigenvalue() const {
  const Matrix4 h = 0.5 * (m_ + m_.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix4> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

bool DensityMatrix::is_physical(double herm_tol, double trace_tol, double pos_tol) const {
  return hermiticity_error() <= herm_tol && std::abs(trace() - 1.0) <= trace_tol &&
         min_eigenvalue() >= pos_tol;
}

Matrix4 RotatingFrameSystem::relaxation(const Matrix4& rho) const {
  Matrix4 r = Matrix4::Zero();
  for (const auto& ch : decays) {
    const int f = index(ch.from), t = index(ch.to);
    // L rho L^dag = rate rho_ff |t><t|
    r(t, t) += ch.rate * rho(f, f);
    // -{L^dag L, rho}/2 with L^dag L = rate |f><f|
    r.row(f) -= 0.5 * ch.rate * rho.row(f);
    r.col(f) -= 0.5 * ch.rate * rho.col(f);
  }
  return r;
}

Matrix4 RotatingFrameSystem::effective_hamiltonian() const {
  Matrix4 h = hamiltonian;
  for (const auto& ch : decays) h(index(ch.from), index(ch.from)) -= std::complex<double>(0.0, 0.5 * ch.rate);
  return h;
}

Detunings detunings(const ExperimentParams& params) {
  const double shift = params.stark_coefficient * params.trap_depth_mk;
  const double cool_f3 = params.delta_cool - shift;
  // F'=2 lies excited_hfs below F'=3, so the cooling laser is that much
  // further blue of c-a.
  return {params.delta_repump - shift, cool_f3 + params.excited_hfs, cool_f3};
}

RotatingFrameSystem build_system(double omega1, double omega2, double omega3, Detunings det, double gamma) {
  RotatingFrameSystem sys;
  const int a = index(Level::a), b = index(Level::b), c = index(Level::c), d = index(Level::d);
  Matrix4& h = sys.hamiltonian;
  h(a, a) = -det.cool_f2;
  h(b, b) = det.repump - det.cool_f2;
  h(c, c) = 0.0;
  h(d, d) = -det.cool_f3;
  h(a, b) = h(b, a) = -0.5 * omega1;
  h(a, c) = h(c, a) = -0.5 * omega2;
  h(c, d) = h(d, c) = -0.5 * omega3;
  sys.gamma = gamma;
  sys.decays = {{Level::d, Level::c, gamma}, {Level::a, Level::b, 0.5 * gamma}, {Level::a, Level::c, 0.5 * gamma}};
  return sys;
}

RotatingFrameSystem build_system(const ExperimentParams& params) {
  params.validate();
  return build_system(params.omega1, params.omega2, params.omega3, detunings(params), constants().gamma);
}

Matrix4 liouville_rhs(const Matrix4& rho, const RotatingFrameSystem& sys) {
  const Matrix4& h = sys.hamiltonian;
  const std::complex<double> minus_i(0.0, -1.0);
  return minus_i * (h * rho - rho * h) + sys.relaxation(rho);
}

DensityMatrix liouville_rhs(const DensityMatrix& rho, const RotatingFrameSystem& sys) {
  return DensityMatrix(liouville_rhs(rho.matrix(), sys));
}

Liouvillian liouvillian(const RotatingFrameSystem& sys) {
  Liouvillian l;
  for (int col = 0; col < 16; ++col) {
    Matrix4 e = Matrix4::Zero();
    e(col / 4, col % 4) = 1.0;
    const Matrix4 d = liouville_rhs(e, sys);
    for (int row = 0; row < 16; ++row) l(row, col) = d(row / 4, row % 4);
  }
  return l;
}

std::vector<DensityMatrix> evolve(const DensityMatrix& rho0, const RotatingFrameSystem& sys,
                                  std::span<const double> t_grid, EvolveOptions opts) {
  if (!t_grid.empty() && t_grid.front() < 0.0) throw DomainError("evolve: times must be >= 0");
  if (!std::is_sorted(t_grid.begin(), t_grid.end())) throw DomainError("evolve: times must be sorted");
  auto rhs = [&sys](double, const Matrix4& rho) -> Matrix4 { return liouville_rhs(rho, sys); };
  const auto states = ode::integrate(rho0.matrix(), t_grid, rhs, ode::Tolerances{opts.rtol, opts.atol});
  std::vector<DensityMatrix> out;
  out.reserve(states.size());
  for (const auto& s : states) out.emplace_back(s);
  return out;
}

namespace {

// Indices (row-major vec) of elements supported on the mask.
std::vector<int> masked_elements(const LevelMask& support) {
  std::vector<int> idx;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (support[i] && support[j]) idx.push_back(4 * i + j);
  return idx;
}

Eigen::MatrixXcd restricted_liouvillian(const RotatingFrameSystem& sys, const LevelMask& support,
                                        std::vector<int>& idx) {
  idx = masked_elements(support);
  if (idx.empty()) throw DomainError("steady_state: empty level mask");
  const Liouvillian full = liouvillian(sys);
  const double scale = full.cwiseAbs().maxCoeff();
  // The masked subspace must be invariant: nothing inside may feed outside.
  for (int col : idx)
    for (int row = 0; row < 16; ++row)
      if (std::find(idx.begin(), idx.end(), row) == idx.end() && std::abs(full(row, col)) > 1e-14 * scale)
        throw DomainError("steady_state: level mask is not invariant under the dynamics");
  const auto n = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXcd l(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) l(r, c) = full(idx[r], idx[c]);
  return l;
}

int nullity_of(const Eigen::MatrixXcd& l, double rel_tol) {
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(l);
  const auto& s = svd.singularValues();
  const double cutoff = rel_tol * s(0);
  int n = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) <= cutoff) ++n;
  return n;
}

}  // namespace

int steady_state_nullity(const RotatingFrameSystem& sys, const LevelMask& support, double rel_tol) {
  std::vector<int> idx;
  return nullity_of(restricted_liouvillian(sys, support, idx), rel_tol);
}

DensityMatrix steady_state(const RotatingFrameSystem& sys, const LevelMask& support) {
  std::vector<int> idx;
  Eigen::MatrixXcd l = restricted_liouvillian(sys, support, idx);
  const int nullity = nullity_of(l, 1e-9);
  if (nullity != 1)
    throw DegenerateSteadyStateError(nullity, "steady state is not unique (null space dimension " +
                                                  std::to_string(nullity) + ")");

  // Replace the equation of the first diagonal element by the trace row;
  // the diagonal rows of L sum to zero, so this drops a dependent equation.
  const auto n = static_cast<Eigen::Index>(idx.size());
  Eigen::Index trace_row = -1;
  Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const bool diag = idx[k] / 4 == idx[k] % 4;
    if (diag && trace_row < 0) trace_row = k;
  }
  for (Eigen::Index k = 0; k < n; ++k) l(trace_row, k) = (idx[k] / 4 == idx[k] % 4) ? 1.0 : 0.0;
  rhs(trace_row) = 1.0;
  const Eigen::VectorXcd v = l.fullPivLu().solve(rhs);

  Matrix4 rho = Matrix4::Zero();
  for (Eigen::Index k = 0; k < n; ++k) rho(idx[k] / 4, idx[k] % 4) = v(k);
  // Remove the rounding-level anti-Hermitian part.
  rho = 0.5 * (rho + rho.adjoint()).eval();
  return DensityMatrix(rho);
}

}  // namespace atomtrap::bloch
