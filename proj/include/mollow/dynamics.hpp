#pragma once

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "mollow/catalog.hpp"
#include "mollow/errors.hpp"
#include "mollow/spin_algebra.hpp"

namespace mollow {

/// Static field B0 along z, oscillating field Bm cos(2 pi f t) along y, and
/// the phenomenological source/relaxation rates. Frequencies in Hz, rates in
/// 1/s, fields in nT.
struct FieldEnvironment {
  double b0 = 5e4;
  double bm = 0.0;
  double omega_m = 0.0;
  double pump_rate = 0.0;
  double gamma1 = 0.0;
  double gamma2 = 0.0;

  double larmor(const SpinManifold& m) const noexcept { return m.gamma * b0; }
  double rabi(const SpinManifold& m) const noexcept { return 0.5 * m.gamma * bm; }

  void validate() const {
    if (!(b0 > 0)) throw DomainError("b0 must be positive");
    if (!(bm >= 0)) throw DomainError("bm must be nonnegative");
    if (!(omega_m >= 0)) throw DomainError("omega_m must be nonnegative");
    if (!(pump_rate >= 0) || !(gamma1 >= 0) || !(gamma2 >= 0))
      throw DomainError("pump and relaxation rates must be nonnegative");
  }
};

struct DensityState {
  SpinManifold manifold;
  Matrix rho;

  static DensityState maximally_mixed(const SpinManifold& m) {
    return {m, Matrix::Identity(m.dim(), m.dim()) / static_cast<double>(m.dim())};
  }
  /// |F, m><F, m| with m = F - index.
  static DensityState pure(const SpinManifold& m, int index = 0) {
    Matrix rho = Matrix::Zero(m.dim(), m.dim());
    rho(index, index) = 1.0;
    return {m, rho};
  }
  /// |+F> rotated about y by polar_deg, tipping the spin from z toward x.
  static DensityState tilted(const SpinManifold& m, double polar_deg) {
    const Eigen::MatrixXcd jy = build_spin_operators(m).jy;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(jy);
    const double angle = polar_deg * std::numbers::pi / 180.0;
    Eigen::VectorXcd phases(m.dim());
    for (int i = 0; i < m.dim(); ++i) phases(i) = std::exp(cplx(0, -angle * eig.eigenvalues()(i)));
    const Eigen::MatrixXcd rot = eig.eigenvectors() * phases.asDiagonal() * eig.eigenvectors().adjoint();
    const Eigen::VectorXcd psi = rot.col(0);
    Matrix rho = psi * psi.adjoint();
    rho = 0.5 * (rho + rho.adjoint()).eval();
    return {m, rho};
  }
};

struct StateAudit {
  double hermiticity = 0;  // max |rho - rho^dagger|
  double trace_error = 0;  // |Tr rho - 1|
  double min_eigenvalue = 0;

  bool ok(double herm_tol = 1e-10, double trace_tol = 1e-10, double eig_tol = 1e-9) const noexcept {
    return hermiticity <= herm_tol && trace_error <= trace_tol && min_eigenvalue >= -eig_tol;
  }
};

inline double min_eigenvalue(const Matrix& rho) {
  if (rho.rows() == 2) {
    const double a = rho(0, 0).real(), d = rho(1, 1).real();
    const double off = std::abs(rho(0, 1));
    return 0.5 * (a + d) - std::sqrt(0.25 * (a - d) * (a - d) + off * off);
  }
  const Eigen::MatrixXcd h = 0.5 * (rho + rho.adjoint());
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(h, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

inline StateAudit audit(const Matrix& rho) {
  StateAudit a;
  a.hermiticity = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  a.trace_error = std::abs(rho.trace() - 1.0);
  a.min_eigenvalue = min_eigenvalue(rho);
  return a;
}

inline StateAudit audit(const DensityState& s) { return audit(s.rho); }

/// H(t)/h in Hz: gamma b0 Jz + gamma bm cos(2 pi omega_m t) Jy.
inline Matrix hamiltonian_at(const FieldEnvironment& env, const SpinOperators& ops, double gamma, double t) {
  const double drive = gamma * env.bm * std::cos(2 * std::numbers::pi * env.omega_m * t);
  return (gamma * env.b0) * ops.jz + drive * ops.jy;
}

inline Matrix hamiltonian_at(const FieldEnvironment& env, const SpinManifold& manifold, double t) {
  return hamiltonian_at(env, build_spin_operators(manifold), manifold.gamma, t);
}

/// Uniformly sampled density matrices, stored flat (row-major, dim*dim
/// entries per sample).
class Trajectory {
public:
  Trajectory(SpinManifold manifold, double dt) : manifold_(manifold), dt_(dt) {}

  const SpinManifold& manifold() const noexcept { return manifold_; }
  double dt() const noexcept { return dt_; }
  std::size_t size() const noexcept { return times_.size(); }
  const std::vector<double>& times() const noexcept { return times_; }

  void push(double t, const Matrix& rho) {
    times_.push_back(t);
    for (int i = 0; i < rho.rows(); ++i)
      for (int j = 0; j < rho.cols(); ++j) data_.push_back(rho(i, j));
  }
  void reserve(std::size_t n) {
    times_.reserve(n);
    data_.reserve(n * manifold_.dim() * manifold_.dim());
  }

  Matrix rho(std::size_t i) const {
    const int d = manifold_.dim();
    Matrix m(d, d);
    const cplx* p = data_.data() + i * d * d;
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) m(r, c) = p[r * d + c];
    return m;
  }
  DensityState state(std::size_t i) const { return {manifold_, rho(i)}; }
  MultipoleSet multipoles(std::size_t i) const { return decompose(rho(i), manifold_); }

private:
  SpinManifold manifold_;
  double dt_;
  std::vector<double> times_;
  std::vector<cplx> data_;
};

/// Largest step allowed for a field environment: 1/(50 max(larmor, omega_m)).
inline double max_step(const FieldEnvironment& env, const SpinManifold& m) {
  return 1.0 / (50.0 * std::max(env.larmor(m), env.omega_m));
}

namespace detail {

/// Right-hand side of the master equation: coherent precession,
/// rank-resolved relaxation toward identity/dim, and a rank-1 pump that resets
/// the orientation toward that of |+F><+F| (longitudinal target, transverse
/// orientation pulled to zero at the same rate).
class Liouvillian {
public:
  Liouvillian(const FieldEnvironment& env, const SpinManifold& m)
      : env_(env), gamma_(m.gamma), ops_(build_spin_operators(m)), basis_(tensor_basis(m.two_f)) {
    pump_target_ = basis_(1, 0)(0, 0).real();  // m^1_0 of |+F><+F|
  }

  Matrix operator()(double t, const Matrix& rho) const {
    const Matrix h = hamiltonian_at(env_, ops_, gamma_, t);
    Matrix out = cplx(0, -2 * std::numbers::pi) * (h * rho - rho * h);
    for (int k = 1; k <= basis_.two_f(); ++k)
      for (int q = -k; q <= k; ++q) {
        const Matrix& t_kq = basis_(k, q);
        const cplx m = (t_kq.conjugate().cwiseProduct(rho)).sum();
        const double rate = (k == 1 && q == 0) ? env_.gamma1 : env_.gamma2;
        cplx d = -rate * m;
        if (k == 1) d += env_.pump_rate * ((q == 0 ? pump_target_ : 0.0) - m);
        if (d != cplx(0)) out += d * t_kq;
      }
    return out;
  }

private:
  FieldEnvironment env_;
  double gamma_;
  SpinOperators ops_;
  const TensorBasis& basis_;
  double pump_target_;
};

}  // namespace detail

/// Integrates the density matrix with fixed-step RK4 and returns every
/// sample, t = 0, dt, ..., round(duration/dt)*dt. Ranks k >= 2 (only present
/// on spins above 1/2) relax at gamma2.
inline Trajectory evolve(const DensityState& initial, const FieldEnvironment& env, double duration, double dt) {
  env.validate();
  if (!(duration > 0)) throw DomainError("duration must be positive");
  if (!(dt > 0)) throw DomainError("dt must be positive");
  const double guard = max_step(env, initial.manifold);
  if (dt > guard * (1 + 1e-12))
    throw DomainError("dt = " + std::to_string(dt) + " s violates the resolution guard dt <= 1/(50*max(larmor, omega_m)) = " +
                      std::to_string(guard) + " s");
  if (!audit(initial).ok()) throw InvariantError("initial state is not a valid density matrix", 0);

  const detail::Liouvillian rhs(env, initial.manifold);
  const long steps = std::lround(duration / dt);
  Trajectory traj(initial.manifold, dt);
  traj.reserve(steps + 1);

  Matrix rho = initial.rho;
  traj.push(0.0, rho);
  for (long n = 0; n < steps; ++n) {
    const double t = n * dt;
    const Matrix k1 = rhs(t, rho);
    const Matrix k2 = rhs(t + 0.5 * dt, rho + (0.5 * dt) * k1);
    const Matrix k3 = rhs(t + 0.5 * dt, rho + (0.5 * dt) * k2);
    const Matrix k4 = rhs(t + dt, rho + dt * k3);
    rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

    const double herm = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
    const double trace_err = std::abs(rho.trace() - 1.0);
    if (herm > 1e-10 || trace_err > 1e-10)
      throw InvariantError("Hermiticity/trace drift " + std::to_string(std::max(herm, trace_err)) + " exceeds 1e-10", n + 1);
    if (herm > 1e-12 || trace_err > 1e-12) {
      rho = 0.5 * (rho + rho.adjoint()).eval();
      rho /= rho.trace().real();
    }
    const double lambda = min_eigenvalue(rho);
    if (lambda < -1e-9) throw InvariantError("negative eigenvalue " + std::to_string(lambda), n + 1);
    traj.push((n + 1) * dt, rho);
  }
  return traj;
}

/// Spin expectation values <Jx>, <Jy>, <Jz>.
struct SpinVector {
  double sx = 0, sy = 0, sz = 0;
};

inline SpinVector expectation(const Matrix& rho, const SpinOperators& ops) {
  return {(rho * ops.jx).trace().real(), (rho * ops.jy).trace().real(), (rho * ops.jz).trace().real()};
}

/// Rotating-wave solution for a spin-1/2 starting in |up>, driven exactly on
/// resonance with no pump or relaxation. The y-axis drive rotates the spin
/// about +y in the frame precessing at the Larmor frequency:
///   sx = 1/2 sin(2 pi Rabi t) cos(2 pi L t)
///   sy = 1/2 sin(2 pi Rabi t) sin(2 pi L t)
///   sz = 1/2 cos(2 pi Rabi t)
inline SpinVector closed_form_resonant(const FieldEnvironment& env, double t,
                                       const SpinManifold& manifold = mollow::manifold(ManifoldLabel::Ground3He)) {
  if (manifold.two_f != 1) throw DomainError("closed form applies to spin-1/2 only");
  const double larmor = env.larmor(manifold);
  if (std::abs(env.omega_m - larmor) > 1e-9 * larmor)
    throw DomainError("closed form requires omega_m == larmor");
  if (env.pump_rate != 0 || env.gamma1 != 0 || env.gamma2 != 0)
    throw DomainError("closed form requires zero pump and relaxation rates");
  const double rabi_phase = 2 * std::numbers::pi * env.rabi(manifold) * t;
  const double larmor_phase = 2 * std::numbers::pi * larmor * t;
  const double transverse = 0.5 * std::sin(rabi_phase);
  return {transverse * std::cos(larmor_phase), transverse * std::sin(larmor_phase), 0.5 * std::cos(rabi_phase)};
}

}  // namespace mollow
