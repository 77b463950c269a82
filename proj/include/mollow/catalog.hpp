#pragma once

#include <string>
#include <string_view>

#include "mollow/errors.hpp"

namespace mollow {

// Gyromagnetic ratios in Hz/nT (1 G = 1e5 nT).
namespace gyro {
/// 1^1S_0 ground state of 3He: 3.2 kHz/G.
inline constexpr double ground_3he = 3.2e-2;
/// 2^3S_1 metastable 3He, F = 1/2: 3.8 MHz/G.
inline constexpr double meta_f12 = 38.0;
/// 2^3S_1 metastable 3He, F = 3/2: 1.9 MHz/G.
inline constexpr double meta_f32 = 19.0;
/// 2^3S_1 metastable 4He (J = 1, g ~ 2): 2.8 MHz/G. Not used by the slaved
/// metastable dynamics; carried for completeness of the catalog.
inline constexpr double meta_4he = 28.0;
}  // namespace gyro

enum class ManifoldLabel { Ground3He, MetaF12, MetaF32, Meta4He };

/// An angular-momentum subspace |F, m>, m = +F..-F. The spin is stored
/// doubled so half-integer values are exact.
struct SpinManifold {
  int two_f = 1;
  double gamma = gyro::ground_3he;  // Hz/nT
  ManifoldLabel label = ManifoldLabel::Ground3He;

  double f() const noexcept { return 0.5 * two_f; }
  int dim() const noexcept { return two_f + 1; }
  int max_rank() const noexcept { return two_f; }

  friend bool operator==(const SpinManifold&, const SpinManifold&) = default;
};

inline SpinManifold manifold(ManifoldLabel label) {
  switch (label) {
    case ManifoldLabel::Ground3He: return {1, gyro::ground_3he, label};
    case ManifoldLabel::MetaF12: return {1, gyro::meta_f12, label};
    case ManifoldLabel::MetaF32: return {3, gyro::meta_f32, label};
    case ManifoldLabel::Meta4He: return {2, gyro::meta_4he, label};
  }
  throw DomainError("unknown manifold label");
}

inline std::string_view to_string(ManifoldLabel label) {
  switch (label) {
    case ManifoldLabel::Ground3He: return "Ground3He";
    case ManifoldLabel::MetaF12: return "MetaF12";
    case ManifoldLabel::MetaF32: return "MetaF32";
    case ManifoldLabel::Meta4He: return "Meta4He";
  }
  return "?";
}

/// Optical lines of the 1083 nm probe and the manifold each one addresses.
enum class ProbeLine { C8, C9, D0 };

inline ManifoldLabel addressed_manifold(ProbeLine line) {
  switch (line) {
    case ProbeLine::C8: return ManifoldLabel::MetaF12;
    case ProbeLine::C9: return ManifoldLabel::MetaF32;
    case ProbeLine::D0: return ManifoldLabel::Meta4He;
  }
  throw DomainError("unknown probe line");
}

inline std::string_view to_string(ProbeLine line) {
  switch (line) {
    case ProbeLine::C8: return "C8";
    case ProbeLine::C9: return "C9";
    case ProbeLine::D0: return "D0";
  }
  return "?";
}

}  // namespace mollow
