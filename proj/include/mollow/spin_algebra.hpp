#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <string>
#include <vector>

#include "mollow/catalog.hpp"
#include "mollow/errors.hpp"

namespace mollow {

using cplx = std::complex<double>;

/// Largest spin (doubled) the library represents: F = 7/2.
inline constexpr int kMaxTwoF = 7;

/// Operator on a manifold. Storage is inline (no heap) up to dimension 8.
using Matrix = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxTwoF + 1, kMaxTwoF + 1>;

struct SpinOperators {
  Matrix jx, jy, jz, jplus, jminus;
};

/// Doubled spin from a real value; rejects negatives and non-half-integers.
inline int checked_two_f(double f) {
  if (!(f >= 0.0)) throw DomainError("spin must be nonnegative, got " + std::to_string(f));
  const double two_f = 2.0 * f;
  if (std::abs(two_f - std::round(two_f)) > 1e-12)
    throw DomainError("spin must be a multiple of 1/2, got " + std::to_string(f));
  return static_cast<int>(std::lround(two_f));
}

/// Angular-momentum matrices in the |F, m> basis, row i <-> m = F - i.
inline SpinOperators build_spin_operators(int two_f) {
  if (two_f < 0) throw DomainError("spin must be nonnegative");
  if (two_f > kMaxTwoF) throw DomainError("spin above 7/2 not supported");
  const int dim = two_f + 1;
  const double f = 0.5 * two_f;
  SpinOperators ops;
  ops.jz = Matrix::Zero(dim, dim);
  ops.jplus = Matrix::Zero(dim, dim);
  for (int i = 0; i < dim; ++i) {
    const double m = f - i;
    ops.jz(i, i) = m;
    // J+ |m> = sqrt(f(f+1) - m(m+1)) |m+1>; |m+1> sits one row up.
    if (i > 0) ops.jplus(i - 1, i) = std::sqrt(f * (f + 1) - m * (m + 1));
  }
  ops.jminus = ops.jplus.adjoint();
  ops.jx = 0.5 * (ops.jplus + ops.jminus);
  ops.jy = cplx(0, -0.5) * (ops.jplus - ops.jminus);
  return ops;
}

inline SpinOperators build_spin_operators(double f) { return build_spin_operators(checked_two_f(f)); }
inline SpinOperators build_spin_operators(const SpinManifold& m) { return build_spin_operators(m.two_f); }

namespace detail {
inline double log_factorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }
}  // namespace detail

/// <j1 m1; j2 m2 | j m> from Racah's closed form. All arguments are doubled
/// (2j, 2m) so half-integer spins are exact. Returns 0 outside the selection
/// rules.
inline double clebsch_gordan(int tj1, int tm1, int tj2, int tm2, int tj, int tm) {
  if (tm1 + tm2 != tm) return 0.0;
  if (std::abs(tm1) > tj1 || std::abs(tm2) > tj2 || std::abs(tm) > tj) return 0.0;
  if ((tj1 + tm1) % 2 || (tj2 + tm2) % 2 || (tj + tm) % 2) return 0.0;
  if (tj < std::abs(tj1 - tj2) || tj > tj1 + tj2 || (tj1 + tj2 + tj) % 2) return 0.0;

  using detail::log_factorial;
  const int a = (tj1 + tj2 - tj) / 2;
  const int b = (tj1 - tj2 + tj) / 2;
  const int c = (-tj1 + tj2 + tj) / 2;
  const double log_tri = log_factorial(a) + log_factorial(b) + log_factorial(c) -
                         log_factorial((tj1 + tj2 + tj) / 2 + 1);
  const double log_pre =
      0.5 * (std::log(tj + 1.0) + log_tri + log_factorial((tj1 + tm1) / 2) +
             log_factorial((tj1 - tm1) / 2) + log_factorial((tj2 + tm2) / 2) +
             log_factorial((tj2 - tm2) / 2) + log_factorial((tj + tm) / 2) +
             log_factorial((tj - tm) / 2));

  const int kmin = std::max({0, (tj2 - tj - tm1) / 2, (tj1 - tj + tm2) / 2});
  const int kmax = std::min({a, (tj1 - tm1) / 2, (tj2 + tm2) / 2});
  double sum = 0.0;
  for (int k = kmin; k <= kmax; ++k) {
    const double log_den = log_factorial(k) + log_factorial(a - k) +
                           log_factorial((tj1 - tm1) / 2 - k) + log_factorial((tj2 + tm2) / 2 - k) +
                           log_factorial((tj - tj2 + tm1) / 2 + k) +
                           log_factorial((tj - tj1 - tm2) / 2 + k);
    sum += (k % 2 ? -1.0 : 1.0) * std::exp(log_pre - log_den);
  }
  return sum;
}

/// Integer-spin convenience overload: <j1 m1; j2 m2 | j m>.
inline double clebsch_gordan_int(int j1, int m1, int j2, int m2, int j, int m) {
  return clebsch_gordan(2 * j1, 2 * m1, 2 * j2, 2 * m2, 2 * j, 2 * m);
}

inline void check_rank(int two_f, int k, int q) {
  if (k < 0 || k > two_f)
    throw DomainError("rank " + std::to_string(k) + " unsupported on spin " +
                      std::to_string(two_f) + "/2 (needs k <= 2F)");
  if (std::abs(q) > k)
    throw DomainError("component q=" + std::to_string(q) + " outside rank " + std::to_string(k));
}

/// Trace-orthonormal irreducible tensor operator T^k_q:
///   T^k_q = sum_{m,m'} (-1)^(F-m') <F m; F -m' | k q> |m><m'|,
/// so Tr(T^k_q^dagger T^k'_q') = delta_kk' delta_qq' and
/// T^k_q^dagger = (-1)^q T^k_-q. T^1_0 is +Jz/||Jz||, T^1_{+1} is -J+/||J+||.
inline Matrix spherical_tensor(int two_f, int k, int q) {
  check_rank(two_f, k, q);
  const int dim = two_f + 1;
  Matrix t = Matrix::Zero(dim, dim);
  for (int i = 0; i < dim; ++i) {
    const int tm = two_f - 2 * i;
    for (int j = 0; j < dim; ++j) {
      const int tmp = two_f - 2 * j;
      const double cg = clebsch_gordan(two_f, tm, two_f, -tmp, 2 * k, 2 * q);
      if (cg == 0.0) continue;
      const int phase = (two_f - tmp) / 2;
      t(i, j) = (phase % 2 ? -cg : cg);
    }
  }
  return t;
}

inline Matrix spherical_tensor(const SpinManifold& m, int k, int q) { return spherical_tensor(m.two_f, k, q); }

/// Index of (k, q) in a rank-major multipole vector.
constexpr int multipole_index(int k, int q) noexcept { return k * k + q + k; }
constexpr int multipole_count(int max_rank) noexcept { return (max_rank + 1) * (max_rank + 1); }

/// All T^k_q of one spin, in multipole_index order.
class TensorBasis {
public:
  explicit TensorBasis(int two_f) : two_f_(two_f) {
    tensors_.reserve(multipole_count(two_f));
    for (int k = 0; k <= two_f; ++k)
      for (int q = -k; q <= k; ++q) tensors_.push_back(spherical_tensor(two_f, k, q));
  }
  int two_f() const noexcept { return two_f_; }
  int dim() const noexcept { return two_f_ + 1; }
  const Matrix& operator()(int k, int q) const { return tensors_.at(multipole_index(k, q)); }
  const std::vector<Matrix>& all() const noexcept { return tensors_; }

private:
  int two_f_;
  std::vector<Matrix> tensors_;
};

/// Shared, immutable basis for every supported spin (built once, thread-safe).
inline const TensorBasis& tensor_basis(int two_f) {
  static const std::array<TensorBasis, kMaxTwoF + 1> cache{
      TensorBasis(0), TensorBasis(1), TensorBasis(2), TensorBasis(3),
      TensorBasis(4), TensorBasis(5), TensorBasis(6), TensorBasis(7)};
  if (two_f < 0 || two_f > kMaxTwoF) throw DomainError("spin above 7/2 not supported");
  return cache[two_f];
}

/// Multipole components m^k_q = Tr(T^k_q^dagger rho) for k = 0..max_rank.
class MultipoleSet {
public:
  MultipoleSet() = default;
  MultipoleSet(int two_f, int max_rank) : two_f_(two_f), max_rank_(max_rank), data_(multipole_count(max_rank)) {
    if (max_rank > two_f) check_rank(two_f, max_rank, 0);
  }
  explicit MultipoleSet(int two_f) : MultipoleSet(two_f, two_f) {}

  int two_f() const noexcept { return two_f_; }
  int max_rank() const noexcept { return max_rank_; }

  cplx& operator()(int k, int q) { return data_[index(k, q)]; }
  cplx operator()(int k, int q) const { return data_[index(k, q)]; }

  std::vector<cplx>& raw() noexcept { return data_; }
  const std::vector<cplx>& raw() const noexcept { return data_; }

private:
  int index(int k, int q) const {
    if (k < 0 || k > max_rank_ || std::abs(q) > k)
      throw DomainError("multipole (" + std::to_string(k) + "," + std::to_string(q) + ") out of range");
    return multipole_index(k, q);
  }

  int two_f_ = 1;
  int max_rank_ = 1;
  std::vector<cplx> data_ = std::vector<cplx>(4);
};

/// Projects rho onto every T^k_q of its spin.
inline MultipoleSet decompose(const Matrix& rho, const SpinManifold& manifold) {
  if (rho.rows() != manifold.dim() || rho.cols() != manifold.dim())
    throw DomainError("state dimension " + std::to_string(rho.rows()) + " does not match manifold dimension " +
                      std::to_string(manifold.dim()));
  const TensorBasis& basis = tensor_basis(manifold.two_f);
  MultipoleSet out(manifold.two_f);
  for (int k = 0; k <= manifold.two_f; ++k)
    for (int q = -k; q <= k; ++q)
      // Tr(T^dagger rho) = sum_ij conj(T_ij) rho_ij
      out(k, q) = (basis(k, q).conjugate().cwiseProduct(rho)).sum();
  return out;
}

/// rho = sum_{k,q} m^k_q T^k_q over the ranks present in the set.
inline Matrix reconstruct(const MultipoleSet& multipoles, const SpinManifold& manifold) {
  if (multipoles.max_rank() > manifold.two_f)
    throw DomainError("rank " + std::to_string(multipoles.max_rank()) + " exceeds 2F for spin " +
                      std::to_string(manifold.two_f) + "/2");
  const TensorBasis& basis = tensor_basis(manifold.two_f);
  Matrix rho = Matrix::Zero(manifold.dim(), manifold.dim());
  for (int k = 0; k <= multipoles.max_rank(); ++k)
    for (int q = -k; q <= k; ++q) rho += multipoles(k, q) * basis(k, q);
  return rho;
}

/// Largest |m^k_-q - (-1)^q conj(m^k_q)| over the set.
inline double conjugation_violation(const MultipoleSet& m, int min_rank = 0) {
  double worst = 0.0;
  for (int k = min_rank; k <= m.max_rank(); ++k)
    for (int q = 0; q <= k; ++q) {
      const cplx mirrored = (q % 2 ? -1.0 : 1.0) * std::conj(m(k, q));
      worst = std::max(worst, std::abs(m(k, -q) - mirrored));
    }
  return worst;
}

/// Unnormalized textbook tensors built from J products:
///   k=1: {-J+/sqrt2, Jz, J-/sqrt2};
///   k=2: {J+^2, -(Jz J+ + J+ Jz), sqrt(2/3)(3Jz^2 - J^2), (Jz J- + J- Jz), J-^2}.
/// spherical_tensor(k, q) == bare_tensor(k, q) / ||bare_tensor(k, q)||_F.
inline Matrix bare_tensor(int two_f, int k, int q) {
  check_rank(two_f, k, q);
  if (k > 2) throw DomainError("bare product tensors provided for k <= 2 only");
  const SpinOperators j = build_spin_operators(two_f);
  const int dim = two_f + 1;
  const double f = 0.5 * two_f;
  if (k == 0) return Matrix::Identity(dim, dim);
  if (k == 1) {
    if (q == 1) return -j.jplus / std::sqrt(2.0);
    if (q == 0) return j.jz;
    return j.jminus / std::sqrt(2.0);
  }
  switch (q) {
    case 2: return j.jplus * j.jplus;
    case 1: return -(j.jz * j.jplus + j.jplus * j.jz);
    case 0: return std::sqrt(2.0 / 3.0) * (3.0 * j.jz * j.jz - f * (f + 1) * Matrix::Identity(dim, dim));
    case -1: return j.jz * j.jminus + j.jminus * j.jz;
    default: return j.jminus * j.jminus;
  }
}

/// Factor c with T^k_q = c * bare_tensor(k, q); equals 1/||bare||_F.
inline double bare_to_normalized(int two_f, int k, int q) { return 1.0 / bare_tensor(two_f, k, q).norm(); }

}  // namespace mollow
