#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "mollow/catalog.hpp"
#include "mollow/errors.hpp"
#include "mollow/mec_transfer.hpp"
#include "mollow/spin_algebra.hpp"

namespace mollow {

enum class Polarization { CircularX, LinearTheta };

inline std::string_view to_string(Polarization p) {
  return p == Polarization::CircularX ? "CircularX" : "LinearTheta";
}

/// Probe light along x. For LinearTheta, theta is the angle between the
/// polarization and the y axis, rotating toward z.
struct ProbeConfig {
  ProbeLine line = ProbeLine::C9;
  Polarization polarization = Polarization::CircularX;
  double theta_deg = 0;

  SpinManifold manifold() const { return mollow::manifold(addressed_manifold(line)); }

  void validate() const {
    if (polarization == Polarization::LinearTheta && !(theta_deg >= 0 && theta_deg <= 180))
      throw DomainError("theta must lie in [0, 180] degrees");
  }
};

struct TimeSeries {
  std::vector<double> times;
  std::vector<double> values;
  double dt = 0;
  // Labels carried through to exports.
  ProbeLine line = ProbeLine::C9;
  Polarization polarization = Polarization::CircularX;
  double theta_deg = 0;
};

namespace detail {

inline TimeSeries series_shell(const MetaTrajectory& traj) {
  TimeSeries s;
  s.times = traj.times;
  s.dt = traj.dt;
  s.values.reserve(traj.states.size());
  return s;
}

/// Weights w_q with Tr(rho A) = sum_q w_q m^k_q for an operator A of pure rank k.
inline std::vector<cplx> readout_weights(int two_f, int k, const Matrix& op) {
  const TensorBasis& basis = tensor_basis(two_f);
  std::vector<cplx> w;
  for (int q = -k; q <= k; ++q) w.push_back((basis(k, q) * op).trace());
  return w;
}

inline double apply_weights(const std::vector<cplx>& w, const MultipoleSet& m, int k) {
  cplx acc = 0;
  for (int q = -k; q <= k; ++q) acc += w[q + k] * m(k, q);
  return acc.real();
}

}  // namespace detail

/// Circular probe along x: s(t) = <Jx> of the metastable state, read from its
/// rank-1 multipoles only (-||J+|| Re m^1_{+1}).
inline TimeSeries orientation_signal(const MetaTrajectory& traj) {
  const int two_f = traj.manifold.two_f;
  if (two_f < 1) throw DomainError("spin-0 manifold has no orientation");
  const auto weights = detail::readout_weights(two_f, 1, build_spin_operators(two_f).jx);
  TimeSeries s = detail::series_shell(traj);
  for (const auto& m : traj.states) s.values.push_back(detail::apply_weights(weights, m, 1));
  s.polarization = Polarization::CircularX;
  return s;
}

/// Alignment operator 3(J.e)^2 - J^2 for e = cos(theta) y + sin(theta) z.
/// Its Jy-Jz cross term carries the sin(2 theta) factor.
inline Matrix alignment_operator(int two_f, double theta_deg) {
  const SpinOperators j = build_spin_operators(two_f);
  const double th = theta_deg * std::numbers::pi / 180.0;
  const Matrix je = std::cos(th) * j.jy + std::sin(th) * j.jz;
  const double f = 0.5 * two_f;
  return 3.0 * je * je - f * (f + 1) * Matrix::Identity(two_f + 1, two_f + 1);
}

/// Linear probe: s(t; theta) = Tr(rho [3(J.e)^2 - J^2]) evaluated on the
/// rank-2 multipoles. Spin-1/2 manifolds have no alignment to read.
inline TimeSeries alignment_signal(const MetaTrajectory& traj, double theta_deg) {
  const int two_f = traj.manifold.two_f;
  if (two_f < 2)
    throw NoAlignmentObservable("no alignment observable: manifold " + std::string(to_string(traj.manifold.label)) +
                                " (F=" + std::to_string(two_f) + "/2) carries no rank-2 multipoles");
  const auto weights = detail::readout_weights(two_f, 2, alignment_operator(two_f, theta_deg));
  TimeSeries s = detail::series_shell(traj);
  for (const auto& m : traj.states) s.values.push_back(detail::apply_weights(weights, m, 2));
  s.polarization = Polarization::LinearTheta;
  s.theta_deg = theta_deg;
  return s;
}

/// Routes a trajectory to the readout selected by the probe configuration.
inline TimeSeries probe_dispatch(const ProbeConfig& config, const MetaTrajectory& traj) {
  config.validate();
  const SpinManifold expected = config.manifold();
  if (expected.two_f != traj.manifold.two_f || expected.label != traj.manifold.label)
    throw DomainError("probe line " + std::string(to_string(config.line)) + " addresses " +
                      std::string(to_string(expected.label)) + ", trajectory is " +
                      std::string(to_string(traj.manifold.label)));
  TimeSeries s = config.polarization == Polarization::CircularX ? orientation_signal(traj)
                                                                : alignment_signal(traj, config.theta_deg);
  s.line = config.line;
  s.polarization = config.polarization;
  s.theta_deg = config.polarization == Polarization::LinearTheta ? config.theta_deg : 0.0;
  return s;
}

}  // namespace mollow
