#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "mollow/dynamics.hpp"
#include "mollow/errors.hpp"
#include "mollow/probe.hpp"
#include "mollow/spectral.hpp"

namespace mollow {

using json = nlohmann::ordered_json;

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}


}  // namespace detail

/// time_s,signal with one metadata comment line.
inline void write_series_csv(const TimeSeries& s, const std::filesystem::path& path) {
  auto out = detail::open_output(path);
  out << "# line=" << to_string(s.line) << " polarization=" << to_string(s.polarization)
      << " theta_deg=" << detail::fmt(s.theta_deg) << " dt_s=" << detail::fmt(s.dt) << "\n";
  out << "time_s,signal\n";
  for (std::size_t i = 0; i < s.values.size(); ++i) out << detail::fmt(s.times[i]) << ',' << detail::fmt(s.values[i]) << '\n';
}

/// freq_hz,power over [fmin, fmax]; fmax < 0 means up to Nyquist.
inline void write_spectrum_csv(const Spectrum& spec, const std::filesystem::path& path, double fmin = 0, double fmax = -1) {
  auto out = detail::open_output(path);
  out << "freq_hz,power\n";
  for (std::size_t k = 0; k < spec.freqs.size(); ++k) {
    const double f = spec.freqs[k];
    if (f < fmin || (fmax >= 0 && f > fmax)) continue;
    out << detail::fmt(f) << ',' << detail::fmt(spec.power[k]) << '\n';
  }
}

inline json to_json(const Classification& c) {
  json j;
  j["structure"] = std::string(to_string(c.structure));
  j["center_hz"] = c.structure == MollowStructure::Other ? json(nullptr) : json(c.center);
  j["rabi_hz"] = c.rabi ? json(*c.rabi) : json(nullptr);
  j["residual_hz"] = c.residual;
  if (!c.diagnostics.empty()) j["diagnostics"] = c.diagnostics;
  return j;
}

inline json to_json(const PeakSet& peaks, const std::optional<Classification>& c = std::nullopt) {
  json j;
  j["df_hz"] = peaks.df;
  j["noise_floor"] = peaks.noise_floor;
  json arr = json::array();
  for (const Peak& p : peaks.peaks)
    arr.push_back(json{{"freq_hz", p.freq}, {"amplitude", p.amplitude}, {"prominence", p.prominence}});
  j["peaks"] = std::move(arr);
  j["classification"] = c ? to_json(*c) : json(nullptr);
  return j;
}

inline void write_json(const json& j, const std::filesystem::path& path) {
  auto out = detail::open_output(path);
  out << j.dump(2) << '\n';
}

/// Ground trajectory, every `stride`-th sample. Density mode writes the
/// upper triangle of rho as re/im pairs, multipole mode writes m^k_q.
inline void write_trajectory_csv(const Trajectory& traj, bool multipoles, int stride, const std::filesystem::path& path) {
  auto out = detail::open_output(path);
  const int dim = traj.manifold().dim();
  out << "# mode=" << (multipoles ? "multipoles" : "density") << " manifold=" << to_string(traj.manifold().label)
      << " dt_s=" << detail::fmt(traj.dt()) << " stride=" << stride << "\n";
  out << "time_s";
  if (multipoles) {
    for (int k = 0; k <= traj.manifold().max_rank(); ++k)
      for (int q = -k; q <= k; ++q) out << ",re_m" << k << '_' << q << ",im_m" << k << '_' << q;
  } else {
    for (int r = 0; r < dim; ++r)
      for (int c = r; c < dim; ++c) out << ",re_rho" << r << c << ",im_rho" << r << c;
  }
  out << '\n';
  for (std::size_t i = 0; i < traj.size(); i += static_cast<std::size_t>(stride)) {
    out << detail::fmt(traj.times()[i]);
    if (multipoles) {
      const MultipoleSet m = traj.multipoles(i);
      for (int k = 0; k <= m.max_rank(); ++k)
        for (int q = -k; q <= k; ++q) out << ',' << detail::fmt(m(k, q).real()) << ',' << detail::fmt(m(k, q).imag());
    } else {
      const Matrix rho = traj.rho(i);
      for (int r = 0; r < dim; ++r)
        for (int c = r; c < dim; ++c) out << ',' << detail::fmt(rho(r, c).real()) << ',' << detail::fmt(rho(r, c).imag());
    }
    out << '\n';
  }
}

}  // namespace mollow
