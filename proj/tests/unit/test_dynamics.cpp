#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mollow/dynamics.hpp"
#include "mollow/spectral.hpp"

using namespace mollow;

namespace {

const SpinManifold kGround = manifold(ManifoldLabel::Ground3He);
constexpr double kPi = std::numbers::pi;

FieldEnvironment resonant(double b0, double bm) {
  FieldEnvironment env;
  env.b0 = b0;
  env.bm = bm;
  env.omega_m = env.larmor(kGround);
  return env;
}

TimeSeries jx_series(const Trajectory& traj) {
  const auto ops = build_spin_operators(traj.manifold());
  TimeSeries s;
  s.dt = traj.dt();
  for (std::size_t i = 0; i < traj.size(); ++i) {
    s.times.push_back(traj.times()[i]);
    s.values.push_back(expectation(traj.rho(i), ops).sx);
  }
  return s;
}

// Largest component deviation between two trajectories sampled on the same grid
// (the finer one subsampled by `stride`).
double max_spin_deviation(const Trajectory& coarse, const Trajectory& fine, std::size_t stride) {
  const auto ops = build_spin_operators(coarse.manifold());
  double worst = 0;
  for (std::size_t i = 0; i < coarse.size(); ++i) {
    const auto a = expectation(coarse.rho(i), ops);
    const auto b = expectation(fine.rho(i * stride), ops);
    worst = std::max({worst, std::abs(a.sx - b.sx), std::abs(a.sy - b.sy), std::abs(a.sz - b.sz)});
  }
  return worst;
}

}  // namespace

TEST(Hamiltonian, PureZeemanGap) {
  FieldEnvironment env;
  env.b0 = 5e4;
  const Matrix h = hamiltonian_at(env, kGround, 0.37);
  EXPECT_NEAR((h(0, 0) - h(1, 1)).real(), 1600.0, 1e-9);
  EXPECT_NEAR(std::abs(h(0, 1)), 0.0, 1e-15);
}

TEST(Hamiltonian, LarmorAndRabiValues) {
  FieldEnvironment env;
  env.b0 = 5e4;
  env.bm = 3000;
  EXPECT_NEAR(env.larmor(kGround), 1600.0, 1e-9);
  EXPECT_NEAR(env.rabi(kGround), 48.0, 1e-12);
}

TEST(Hamiltonian, DriveAlongY) {
  FieldEnvironment env;
  env.b0 = 5e4;
  env.bm = 1000;
  env.omega_m = 10;
  const auto ops = build_spin_operators(kGround);
  const Matrix expected = 1600.0 * ops.jz + 32.0 * std::cos(2 * kPi * 10 * 0.01) * ops.jy;
  EXPECT_LE((hamiltonian_at(env, kGround, 0.01) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Evolve, StationaryEigenstate) {
  FieldEnvironment env;
  env.b0 = 5e4;
  const auto traj = evolve(DensityState::pure(kGround), env, 0.01, 1e-5);
  ASSERT_EQ(traj.size(), 1001u);
  for (std::size_t i = 0; i < traj.size(); i += 100)
    EXPECT_LE((traj.rho(i) - traj.rho(0)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(traj.times().back(), 0.01, 1e-15);
}

TEST(Evolve, FreePrecessionSinglePeakAtLarmor) {
  FieldEnvironment env;
  env.b0 = 5e4;
  const double dt = max_step(env, kGround);
  const auto traj = evolve(DensityState::tilted(kGround, 90), env, 0.5, dt);
  const Spectrum spec = fft_spectrum(jx_series(traj), Window::Hann, 4);
  const PeakSet peaks = detect_peaks(spec);
  ASSERT_EQ(peaks.peaks.size(), 1u);
  EXPECT_NEAR(peaks.peaks[0].freq, 1600.0, spec.df);
}

TEST(Evolve, TiltedInitialState) {
  const auto s = DensityState::tilted(kGround, 90);
  const auto e = expectation(s.rho, build_spin_operators(kGround));
  EXPECT_NEAR(e.sx, 0.5, 1e-12);
  EXPECT_NEAR(e.sz, 0.0, 1e-12);
  const auto f32 = manifold(ManifoldLabel::MetaF32);
  const auto t = DensityState::tilted(f32, 90);
  EXPECT_NEAR(expectation(t.rho, build_spin_operators(f32)).sx, 1.5, 1e-12);
  EXPECT_TRUE(audit(t).ok());
}

TEST(Evolve, UnitaryWithoutRates) {
  auto env = resonant(5e4, 3000);
  DensityState start{kGround, Matrix::Zero(2, 2)};
  start.rho(0, 0) = 0.7;
  start.rho(1, 1) = 0.3;
  start.rho(0, 1) = cplx(0.1, 0.05);
  start.rho(1, 0) = std::conj(start.rho(0, 1));
  const double lam0 = min_eigenvalue(start.rho);
  // RK4 contracts a rotation by about (omega dt)^6/144 per step.
  const auto traj = evolve(start, env, 0.02, 1.0 / (400 * env.larmor(kGround)));
  for (std::size_t i = 0; i < traj.size(); ++i) {
    ASSERT_NEAR(min_eigenvalue(traj.rho(i)), lam0, 1e-8) << i;
    ASSERT_TRUE(audit(traj.rho(i)).ok());
  }
}

TEST(Evolve, IntegrityWithPumpAndRelaxation) {
  auto env = resonant(5e4, 3000);
  env.pump_rate = 8;
  env.gamma1 = 0.2;
  env.gamma2 = 1.6;
  const auto traj = evolve(DensityState::maximally_mixed(kGround), env, 0.2, 1e-5);
  for (std::size_t i = 0; i < traj.size(); ++i) ASSERT_TRUE(audit(traj.rho(i)).ok()) << i;
}

TEST(Evolve, LongitudinalRelaxationRate) {
  FieldEnvironment env;
  env.b0 = 5e4;
  env.gamma1 = 5;
  env.gamma2 = 20;
  const auto traj = evolve(DensityState::pure(kGround), env, 0.2, 1e-5);
  const double m0 = traj.multipoles(0)(1, 0).real();
  for (std::size_t i = 0; i < traj.size(); i += 1000)
    EXPECT_NEAR(traj.multipoles(i)(1, 0).real(), m0 * std::exp(-5 * traj.times()[i]), 1e-9);
}

TEST(Evolve, TransverseRelaxationRate) {
  FieldEnvironment env;
  env.b0 = 5e4;
  env.gamma2 = 7;
  const auto ops = build_spin_operators(kGround);
  const auto traj = evolve(DensityState::tilted(kGround, 90), env, 0.2, 2.5e-6);
  for (std::size_t i = 0; i < traj.size(); i += 4000) {
    const auto e = expectation(traj.rho(i), ops);
    EXPECT_NEAR(std::hypot(e.sx, e.sy), 0.5 * std::exp(-7 * traj.times()[i]), 1e-6);
  }
}

TEST(Evolve, PumpSteadyState) {
  FieldEnvironment env;
  env.b0 = 5e4;
  env.pump_rate = 6;
  env.gamma1 = 2;
  const auto traj = evolve(DensityState::maximally_mixed(kGround), env, 3.0, 1e-5);
  // Target is m^1_0 of |up>, 1/sqrt2; steady state P/(P + gamma1) of it.
  EXPECT_NEAR(traj.multipoles(traj.size() - 1)(1, 0).real(), 0.75 / std::sqrt(2.0), 1e-6);
}

TEST(Evolve, Guards) {
  auto env = resonant(5e4, 100);
  EXPECT_THROW(evolve(DensityState::pure(kGround), env, 0.01, 2e-5), DomainError);
  EXPECT_THROW(evolve(DensityState::pure(kGround), env, 0.0, 1e-5), DomainError);
  try {
    evolve(DensityState::pure(kGround), env, 0.01, 2e-5);
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("1/(50*max(larmor, omega_m))"), std::string::npos);
  }
  DensityState bad{kGround, Matrix::Zero(2, 2)};
  bad.rho(0, 0) = 1.2;
  bad.rho(1, 1) = -0.2;
  EXPECT_THROW(evolve(bad, env, 0.01, 1e-5), InvariantError);
  FieldEnvironment neg = env;
  neg.gamma2 = -1;
  EXPECT_THROW(evolve(DensityState::pure(kGround), neg, 0.01, 1e-5), DomainError);
}

TEST(ClosedForm, InitialAndHalfRabiPeriod) {
  const auto env = resonant(5e4, 3000);
  const auto s0 = closed_form_resonant(env, 0.0);
  EXPECT_DOUBLE_EQ(s0.sz, 0.5);
  EXPECT_DOUBLE_EQ(s0.sx, 0.0);
  EXPECT_DOUBLE_EQ(s0.sy, 0.0);
  const auto half = closed_form_resonant(env, 1.0 / (2 * 48.0));
  EXPECT_NEAR(half.sz, -0.5, 1e-12);
}

TEST(ClosedForm, Preconditions) {
  auto env = resonant(5e4, 3000);
  env.omega_m += 1;
  EXPECT_THROW(closed_form_resonant(env, 0.1), DomainError);
  env = resonant(5e4, 3000);
  env.gamma1 = 1;
  EXPECT_THROW(closed_form_resonant(env, 0.1), DomainError);
  EXPECT_THROW(closed_form_resonant(resonant(5e4, 3000), 0.1, manifold(ManifoldLabel::MetaF32)), DomainError);
}

TEST(ClosedForm, ProductSpectrumSupport) {
  // sx sz = (1/8) sin(4 pi R t) cos(2 pi L t): lines only at L +/- 2R.
  const auto env = resonant(5e4, 3000);
  TimeSeries s;
  s.dt = 1e-4;
  for (int i = 0; i < 40000; ++i) {
    const double t = i * s.dt;
    const auto v = closed_form_resonant(env, t);
    s.times.push_back(t);
    s.values.push_back(v.sx * v.sz);
  }
  const Spectrum spec = fft_spectrum(s, Window::Hann, 4);
  const PeakSet peaks = detect_peaks(spec);
  ASSERT_EQ(peaks.peaks.size(), 2u);
  EXPECT_NEAR(peaks.peaks[0].freq, 1600 - 96, 0.2 * spec.df);
  EXPECT_NEAR(peaks.peaks[1].freq, 1600 + 96, 0.2 * spec.df);
}

TEST(ClosedForm, EngineAgreesInRotatingWaveRegime) {
  // rabi / larmor = 0.001; the counter-rotating deviation scales with that ratio.
  const auto env = resonant(5e4, 100);
  const double dt = 1.0 / (100 * env.larmor(kGround));
  const auto traj = evolve(DensityState::pure(kGround), env, 0.5, dt);
  const auto ops = build_spin_operators(kGround);
  double worst = 0;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const auto a = expectation(traj.rho(i), ops);
    const auto b = closed_form_resonant(env, traj.times()[i]);
    worst = std::max({worst, std::abs(a.sx - b.sx), std::abs(a.sy - b.sy), std::abs(a.sz - b.sz)});
  }
  EXPECT_LE(worst, 1e-3);
}

TEST(Evolve, FourthOrderConvergence) {
  const auto env = resonant(5e4, 5000);  // rabi / larmor = 0.05
  const double larmor = env.larmor(kGround);
  const double duration = 0.05;
  const auto ref = evolve(DensityState::pure(kGround), env, duration, 1.0 / (800 * larmor));
  const auto coarse = evolve(DensityState::pure(kGround), env, duration, 1.0 / (50 * larmor));
  const auto finer = evolve(DensityState::pure(kGround), env, duration, 1.0 / (100 * larmor));
  const double e1 = max_spin_deviation(coarse, ref, 16);
  const double e2 = max_spin_deviation(finer, ref, 8);
  EXPECT_GT(e1, 1e-9);
  EXPECT_GE(e1 / e2, 8.0) << e1 << " " << e2;
}

TEST(Trajectory, Accessors) {
  FieldEnvironment env;
  env.b0 = 5e4;
  const auto traj = evolve(DensityState::pure(kGround), env, 0.001, 1e-5);
  EXPECT_EQ(traj.size(), 101u);
  EXPECT_DOUBLE_EQ(traj.dt(), 1e-5);
  EXPECT_EQ(traj.state(3).manifold, kGround);
  for (std::size_t i = 1; i < traj.size(); ++i) EXPECT_NEAR(traj.times()[i] - traj.times()[i - 1], 1e-5, 1e-15);
}
