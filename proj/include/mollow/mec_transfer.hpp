#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "mollow/dynamics.hpp"
#include "mollow/errors.hpp"
#include "mollow/spin_algebra.hpp"

namespace mollow {

/// Metastability-exchange coupling. Rates in 1/s.
///   gamma_e1   linear rank-1 exchange toward the ground orientation
///   gamma_e2   bilinear source of rank 2 from products of ground rank-1
///   meta_gamma relaxation of metastable rank k at meta_gamma[k-1]; when the
///              list is shorter than 2F its last entry applies to the rest
struct MecParams {
  double gamma_e1 = 0;
  double gamma_e2 = 0;
  std::vector<double> meta_gamma;

  double relaxation(int k) const noexcept {
    if (meta_gamma.empty()) return 0.0;
    return meta_gamma[std::min<std::size_t>(k - 1, meta_gamma.size() - 1)];
  }

  void validate() const {
    if (!(gamma_e1 >= 0) || !(gamma_e2 >= 0)) throw DomainError("exchange rates must be nonnegative");
    for (double g : meta_gamma)
      if (!(g >= 0)) throw DomainError("metastable relaxation rates must be nonnegative");
  }
};

/// Multipoles of a metastable manifold. Rank 0 is pinned at 1/sqrt(dim); the
/// dynamical content is ranks 1..2F.
struct MetaState {
  SpinManifold manifold;
  MultipoleSet multipoles;

  static MetaState zero(const SpinManifold& m) {
    MetaState s{m, MultipoleSet(m.two_f)};
    s.multipoles(0, 0) = 1.0 / std::sqrt(static_cast<double>(m.dim()));
    return s;
  }

  Matrix density() const { return reconstruct(multipoles, manifold); }
};

/// <1 q1; 1 q2 | 2 q>, hard-coded.
inline double cg_112(int q1, int q2) {
  static constexpr double s2 = 0.70710678118654752440;   // 1/sqrt(2)
  static constexpr double s6 = 0.40824829046386301637;   // 1/sqrt(6)
  static constexpr double s23 = 0.81649658092772603273;  // sqrt(2/3)
  if (q1 == 1 && q2 == 1) return 1.0;
  if (q1 == -1 && q2 == -1) return 1.0;
  if ((q1 == 1 && q2 == 0) || (q1 == 0 && q2 == 1)) return s2;
  if ((q1 == -1 && q2 == 0) || (q1 == 0 && q2 == -1)) return s2;
  if ((q1 == 1 && q2 == -1) || (q1 == -1 && q2 == 1)) return s6;
  if (q1 == 0 && q2 == 0) return s23;
  return 0.0;
}

/// Rank-2 tensor product of a rank-1 set with itself:
///   S_q = sum_{q1+q2=q} <1 q1; 1 q2 | 2 q> m1_q1 m1_q2.
inline std::array<cplx, 5> bilinear_rank2(const MultipoleSet& ground) {
  static const auto coupling = [] {
    std::array<std::array<double, 3>, 3> c{};
    for (int q1 = -1; q1 <= 1; ++q1)
      for (int q2 = -1; q2 <= 1; ++q2) c[q1 + 1][q2 + 1] = clebsch_gordan_int(1, q1, 1, q2, 2, q1 + q2);
    return c;
  }();
  std::array<cplx, 5> out{};
  for (int q = -2; q <= 2; ++q) {
    cplx acc = 0;
    for (int q1 = -1; q1 <= 1; ++q1) {
      const int q2 = q - q1;
      if (q2 < -1 || q2 > 1) continue;
      acc += coupling[q1 + 1][q2 + 1] * ground(1, q1) * ground(1, q2);
    }
    out[q + 2] = acc;
  }
  return out;
}

namespace detail {

inline void mec_derivative(const MultipoleSet& ground, const std::array<cplx, 5>& source, const MultipoleSet& meta,
                           const MecParams& p, MultipoleSet& out) {
  const int top = meta.max_rank();
  for (int k = 1; k <= top; ++k) {
    const double relax = p.relaxation(k);
    for (int q = -k; q <= k; ++q) {
      cplx d = -relax * meta(k, q);
      if (k == 1) d += p.gamma_e1 * (ground(1, q) - meta(1, q));
      if (k == 2) d += p.gamma_e2 * source[q + 2];
      out(k, q) = d;
    }
  }
}

inline void axpy(const MultipoleSet& base, double h, const MultipoleSet& slope, MultipoleSet& out) {
  for (std::size_t i = 0; i < base.raw().size(); ++i) out.raw()[i] = base.raw()[i] + h * slope.raw()[i];
}

inline void check_ground(const MultipoleSet& g) {
  if (g.two_f() != 1 || g.max_rank() < 1) throw DomainError("exchange expects spin-1/2 ground multipoles with rank 1");
}

}  // namespace detail

/// Ground multipoles at the start, midpoint and end of one exchange step.
struct GroundSamples {
  const MultipoleSet& start;
  const MultipoleSet& mid;
  const MultipoleSet& end;
};

/// Advances the metastable multipoles by dt with RK4:
///   d m1_q/dt = gamma_e1 (g1_q - m1_q) - meta_gamma_1 m1_q
///   d m2_q/dt = gamma_e2 sum <1 q1; 1 q2 | 2 q> g1_q1 g1_q2 - meta_gamma_2 m2_q
///   d mk_q/dt = -meta_gamma_k mk_q   (k >= 3)
/// Rank 2 exists only on F >= 1, so spin-1/2 manifolds never acquire it.
inline MetaState mec_step(const GroundSamples& ground, const MetaState& meta, const MecParams& params, double dt) {
  if (!(dt >= 0)) throw DomainError("exchange step dt must be nonnegative");
  detail::check_ground(ground.start);
  detail::check_ground(ground.mid);
  detail::check_ground(ground.end);
  if (meta.multipoles.two_f() != meta.manifold.two_f || meta.multipoles.max_rank() != meta.manifold.max_rank())
    throw DomainError("metastable multipoles do not match manifold " + std::string(to_string(meta.manifold.label)));

  const auto s0 = bilinear_rank2(ground.start);
  const auto s1 = bilinear_rank2(ground.mid);
  const auto s2 = bilinear_rank2(ground.end);

  const MultipoleSet& y = meta.multipoles;
  MultipoleSet k1(y), k2(y), k3(y), k4(y), tmp(y);
  detail::mec_derivative(ground.start, s0, y, params, k1);
  detail::axpy(y, 0.5 * dt, k1, tmp);
  detail::mec_derivative(ground.mid, s1, tmp, params, k2);
  detail::axpy(y, 0.5 * dt, k2, tmp);
  detail::mec_derivative(ground.mid, s1, tmp, params, k3);
  detail::axpy(y, dt, k3, tmp);
  detail::mec_derivative(ground.end, s2, tmp, params, k4);

  MetaState next = meta;
  for (int k = 1; k <= y.max_rank(); ++k)
    for (int q = -k; q <= k; ++q)
      next.multipoles(k, q) = y(k, q) + (dt / 6.0) * (k1(k, q) + 2.0 * k2(k, q) + 2.0 * k3(k, q) + k4(k, q));
  return next;
}

/// Step with the ground held fixed across dt.
inline MetaState mec_step(const MultipoleSet& ground, const MetaState& meta, const MecParams& params, double dt) {
  return mec_step(GroundSamples{ground, ground, ground}, meta, params, dt);
}

struct ConjugationReport {
  double max_violation = 0;
  bool ok(double tol = 1e-10) const noexcept { return max_violation <= tol; }
};

/// Checks m^k_-q = (-1)^q conj(m^k_q) over ranks 1..2F.
inline ConjugationReport conjugation_audit(const MetaState& meta) {
  return {conjugation_violation(meta.multipoles, 1)};
}

/// Metastable multipoles sampled on a uniform grid.
struct MetaTrajectory {
  SpinManifold manifold;
  double dt = 0;
  std::vector<double> times;
  std::vector<MultipoleSet> states;
};

/// Drives a metastable manifold from a ground trajectory. Every exchange step
/// spans two ground steps so the RK4 midpoint lands on a stored sample; the
/// result is sampled at 2*dt_ground starting from the zero state.
inline MetaTrajectory transfer(const Trajectory& ground, const SpinManifold& meta_manifold, const MecParams& params) {
  params.validate();
  if (ground.manifold().two_f != 1) throw DomainError("ground trajectory must be spin-1/2");
  if (ground.size() < 3) throw DomainError("ground trajectory too short for exchange stepping");
  const double h = 2 * ground.dt();
  const std::size_t steps = (ground.size() - 1) / 2;

  MetaTrajectory out{meta_manifold, h, {}, {}};
  out.times.reserve(steps + 1);
  out.states.reserve(steps + 1);

  MetaState meta = MetaState::zero(meta_manifold);
  out.times.push_back(ground.times()[0]);
  out.states.push_back(meta.multipoles);

  MultipoleSet g0 = ground.multipoles(0);
  for (std::size_t n = 0; n < steps; ++n) {
    const MultipoleSet g1 = ground.multipoles(2 * n + 1);
    const MultipoleSet g2 = ground.multipoles(2 * n + 2);
    meta = mec_step(GroundSamples{g0, g1, g2}, meta, params, h);
    out.times.push_back(ground.times()[2 * n + 2]);
    out.states.push_back(meta.multipoles);
    g0 = g2;
  }
  return out;
}

}  // namespace mollow
