#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mollow/config.hpp"
#include "mollow/dynamics.hpp"
#include "mollow/errors.hpp"
#include "mollow/export.hpp"
#include "mollow/mec_transfer.hpp"
#include "mollow/probe.hpp"
#include "mollow/spectral.hpp"

namespace mollow {

/// Worst state-integrity figures over every stored sample of a run.
struct IntegritySummary {
  std::size_t ground_samples = 0;
  double ground_hermiticity = 0;
  double ground_trace_error = 0;
  double ground_min_eigenvalue = 1;
  std::size_t meta_samples = 0;
  double meta_conjugation = 0;
  double meta_trace_error = 0;
  double meta_min_eigenvalue = 1;
  long first_violation = -1;  // meta sample index, -1 when clean

  bool ok() const noexcept {
    return ground_hermiticity <= 1e-10 && ground_trace_error <= 1e-10 && ground_min_eigenvalue >= -1e-9 &&
           meta_conjugation <= 1e-10 && meta_trace_error <= 1e-10 && meta_min_eigenvalue >= -1e-9;
  }
};

/// Everything computed for one scenario, before anything touches disk.
struct PointAnalysis {
  Scenario scenario;
  std::optional<Trajectory> ground;
  IntegritySummary integrity;
  std::optional<TimeSeries> series;  // absent when the probe has nothing to read
  std::optional<Spectrum> spectrum;
  std::optional<PeakSet> peaks;
  std::optional<Classification> classification;
  bool no_alignment = false;
  std::string no_alignment_reason;
  double band_lo = 0, band_hi = 0;
  std::complex<double> drive_phasor;      // series component at omega_m
  double center_amplitude = 0;            // signed magnitude of drive_phasor
  double generalized_rabi = 0;            // sqrt(rabi^2 + detuning^2)
  double second_sideband_amplitude = 0;   // strongest of omega_m +/- 2 generalized_rabi
};

namespace detail {

template <typename F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const NoAlignmentObservable&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e);
  }
}

inline IntegritySummary integrity_of(const Trajectory& ground, const MetaTrajectory& meta) {
  IntegritySummary s;
  s.ground_samples = ground.size();
  for (std::size_t i = 0; i < ground.size(); ++i) {
    const StateAudit a = audit(ground.rho(i));
    s.ground_hermiticity = std::max(s.ground_hermiticity, a.hermiticity);
    s.ground_trace_error = std::max(s.ground_trace_error, a.trace_error);
    s.ground_min_eigenvalue = std::min(s.ground_min_eigenvalue, a.min_eigenvalue);
  }
  s.meta_samples = meta.states.size();
  for (std::size_t i = 0; i < meta.states.size(); ++i) {
    const MultipoleSet& m = meta.states[i];
    s.meta_conjugation = std::max(s.meta_conjugation, conjugation_violation(m, 0));
    const Matrix rho = reconstruct(m, meta.manifold);
    const StateAudit a = audit(rho);
    s.meta_trace_error = std::max(s.meta_trace_error, a.trace_error);
    s.meta_min_eigenvalue = std::min(s.meta_min_eigenvalue, a.min_eigenvalue);
    if (s.first_violation < 0 && !s.ok()) s.first_violation = static_cast<long>(i);
  }
  return s;
}

/// Largest tone magnitude within a quarter-bin grid of +/- one native bin.
inline double local_tone(const TimeSeries& s, double freq, Window w, double native_df) {
  double best = 0;
  for (int j = -4; j <= 4; ++j) best = std::max(best, std::abs(tone_phasor(s, freq + 0.25 * j * native_df, w)));
  return best;
}

}  // namespace detail

/// Runs dynamics, exchange, probe and spectral analysis for one scenario.
/// Errors come back as StageError naming the failing stage; a linear probe
/// on a spin-1/2 manifold is reported through `no_alignment` instead.
inline PointAnalysis analyze_scenario(const Scenario& scenario) {
  detail::stage("config", [&] {
    scenario.validate();
    return 0;
  });
  PointAnalysis out;
  out.scenario = scenario;

  out.ground = detail::stage("dynamics", [&] {
    const DensityState initial = scenario.tilt_deg == 0 ? DensityState::pure(scenario.ground)
                                                        : DensityState::tilted(scenario.ground, scenario.tilt_deg);
    return evolve(initial, scenario.env, scenario.duration, scenario.dt);
  });
  const MetaTrajectory meta =
      detail::stage("mec-transfer", [&] { return transfer(*out.ground, scenario.meta, scenario.mec); });
  out.integrity = detail::integrity_of(*out.ground, meta);
  if (!out.integrity.ok()) {
    std::ostringstream os;
    os << "metastable state left the physical region (min eigenvalue " << out.integrity.meta_min_eigenvalue
       << ", conjugation " << out.integrity.meta_conjugation << ")";
    throw StageError("mec-transfer", InvariantError(os.str(), out.integrity.first_violation));
  }

  try {
    out.series = detail::stage("probe", [&] { return probe_dispatch(scenario.probe, meta); });
  } catch (const NoAlignmentObservable& e) {
    out.no_alignment = true;
    out.no_alignment_reason = e.what();
    return out;
  }
  // The first sample is the empty metastable state before any exchange.
  out.series->times.erase(out.series->times.begin());
  out.series->values.erase(out.series->values.begin());

  detail::stage("spectral", [&] {
    const double larmor = scenario.larmor();
    out.band_lo = 0.5 * larmor;
    out.band_hi = 1.5 * larmor;
    out.spectrum = fft_spectrum(*out.series, scenario.analysis.window, scenario.analysis.zero_pad);
    PeakOptions opt;
    opt.prominence_threshold = scenario.analysis.prominence;
    opt.min_snr = scenario.analysis.min_snr;
    opt.fmin = out.band_lo;
    opt.fmax = out.band_hi;
    out.peaks = detect_peaks(*out.spectrum, opt);
    out.classification = classify_mollow(*out.peaks, larmor);

    const Window w = scenario.analysis.window;
    const double drive = scenario.env.omega_m;
    out.drive_phasor = tone_phasor(*out.series, drive, w);
    const double mag = std::abs(out.drive_phasor);
    const double dominant =
        std::abs(out.drive_phasor.real()) >= std::abs(out.drive_phasor.imag()) ? out.drive_phasor.real() : out.drive_phasor.imag();
    out.center_amplitude = dominant < 0 ? -mag : mag;
    const double detuning = drive - larmor;
    out.generalized_rabi = std::hypot(scenario.rabi(), detuning);
    if (out.generalized_rabi > 0) {
      const double native = out.spectrum->native_df();
      out.second_sideband_amplitude =
          std::max(detail::local_tone(*out.series, drive + 2 * out.generalized_rabi, w, native),
                   detail::local_tone(*out.series, drive - 2 * out.generalized_rabi, w, native));
    }
    return 0;
  });
  return out;
}

/// One row of a run report.
struct PointRecord {
  std::string label;
  std::optional<double> value;  // swept value
  std::string status = "ok";    // ok | no_alignment_observable | failed
  std::string stage;
  std::string error;
  int exit_code = 0;
  double bm = 0, omega_m = 0, theta_deg = 0, larmor = 0, rabi = 0;
  std::string series_file, spectrum_file, peak_file, trajectory_file;
  std::optional<Classification> classification;
  IntegritySummary integrity;
  double center_amplitude = 0;
  double generalized_rabi = 0;
  double second_sideband_amplitude = 0;
};

struct AngularFit {
  double amplitude = 0;  // A in A sin(2 theta)
  double r2 = 0;
  std::size_t points = 0;
};

struct ScalingReport {
  LinearFit fit;
  double expected_slope = 0;  // gamma_ground / 2
  double slope_error = 0;     // relative
  struct Row {
    double bm, rabi, inferred_bm, relative_error;
  };
  std::vector<Row> rows;
};

struct DetuningRow {
  double omega_m = 0, detuning = 0, detuning_over_rabi = 0, generalized_rabi = 0;
  double second_sideband = 0;
  std::optional<double> ratio_to_resonant;
};

struct RunReport {
  std::string name;
  std::string kind = "scenario";
  std::string config_hash;
  std::optional<SweepParameter> parameter;
  std::vector<PointRecord> points;
  std::optional<AngularFit> angular_fit;
  std::optional<ScalingReport> rabi_scaling;
  std::vector<DetuningRow> detuning;
  std::string aggregate_note;  // why aggregates were skipped, if they were
};

/// A sin(2 theta) through the origin; r2 against the mean of the amplitudes.
inline AngularFit fit_angular_law(const std::vector<double>& theta_deg, const std::vector<double>& amplitude) {
  if (theta_deg.size() != amplitude.size() || theta_deg.size() < 2) throw DomainError("angular fit needs >= 2 points");
  double sxy = 0, sxx = 0, mean = 0;
  for (std::size_t i = 0; i < theta_deg.size(); ++i) {
    const double x = std::sin(2 * theta_deg[i] * std::numbers::pi / 180.0);
    sxy += x * amplitude[i];
    sxx += x * x;
    mean += amplitude[i];
  }
  if (!(sxx > 1e-12)) throw DomainError("angular fit needs an angle with sin(2 theta) != 0");
  mean /= static_cast<double>(amplitude.size());
  AngularFit f;
  f.amplitude = sxy / sxx;
  f.points = theta_deg.size();
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < theta_deg.size(); ++i) {
    const double x = std::sin(2 * theta_deg[i] * std::numbers::pi / 180.0);
    ss_res += std::pow(amplitude[i] - f.amplitude * x, 2);
    ss_tot += std::pow(amplitude[i] - mean, 2);
  }
  f.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : (ss_res == 0 ? 1.0 : 0.0);
  return f;
}

/// MOLLOW_THREADS if set to a positive integer, else the hardware count.
inline unsigned thread_count() {
  if (const char* env = std::getenv("MOLLOW_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace detail {

inline std::string value_label(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline PointRecord record_shell(const Scenario& s) {
  PointRecord r;
  r.bm = s.env.bm;
  r.omega_m = s.env.omega_m;
  r.theta_deg = s.probe.polarization == Polarization::LinearTheta ? s.probe.theta_deg : 0.0;
  r.larmor = s.larmor();
  r.rabi = s.rabi();
  return r;
}

/// Writes a point's artifacts into `dir` (relative names stored against `root`).
inline void write_point(const PointAnalysis& a, const std::filesystem::path& root, const std::filesystem::path& dir,
                        PointRecord& rec) {
  std::filesystem::create_directories(root / dir);
  const Scenario& s = a.scenario;
  rec.integrity = a.integrity;
  if (s.output.trajectory != TrajectoryExport::None && a.ground) {
    rec.trajectory_file = (dir / "trajectory.csv").generic_string();
    write_trajectory_csv(*a.ground, s.output.trajectory == TrajectoryExport::Multipoles, s.output.stride,
                         root / rec.trajectory_file);
  }
  if (a.no_alignment) {
    rec.status = "no_alignment_observable";
    rec.stage = "probe";
    rec.error = a.no_alignment_reason;
    return;
  }
  rec.series_file = (dir / "series.csv").generic_string();
  rec.spectrum_file = (dir / "spectrum.csv").generic_string();
  rec.peak_file = (dir / "peaks.json").generic_string();
  write_series_csv(*a.series, root / rec.series_file);
  if (s.output.full_spectrum)
    write_spectrum_csv(*a.spectrum, root / rec.spectrum_file);
  else
    write_spectrum_csv(*a.spectrum, root / rec.spectrum_file, a.band_lo, a.band_hi);
  write_json(to_json(*a.peaks, a.classification), root / rec.peak_file);
  rec.classification = a.classification;
  rec.center_amplitude = a.center_amplitude;
  rec.generalized_rabi = a.generalized_rabi;
  rec.second_sideband_amplitude = a.second_sideband_amplitude;
}

inline json to_json(const IntegritySummary& s) {
  return json{{"ground_samples", s.ground_samples},
              {"ground_max_hermiticity", s.ground_hermiticity},
              {"ground_max_trace_error", s.ground_trace_error},
              {"ground_min_eigenvalue", s.ground_min_eigenvalue},
              {"meta_samples", s.meta_samples},
              {"meta_max_conjugation", s.meta_conjugation},
              {"meta_max_trace_error", s.meta_trace_error},
              {"meta_min_eigenvalue", s.meta_min_eigenvalue},
              {"ok", s.ok()}};
}

}  // namespace detail

inline json to_json(const RunReport& r) {
  json j;
  j["name"] = r.name;
  j["kind"] = r.kind;
  j["provenance"] = json{{"config_hash", r.config_hash}, {"version", kVersion}};
  if (r.parameter) j["parameter"] = std::string(to_string(*r.parameter));
  json points = json::array();
  for (const PointRecord& p : r.points) {
    json q;
    q["label"] = p.label;
    if (p.value) q["value"] = *p.value;
    q["status"] = p.status;
    if (!p.stage.empty()) q["stage"] = p.stage;
    if (!p.error.empty()) q["error"] = p.error;
    if (p.exit_code) q["exit_code"] = p.exit_code;
    q["bm_nt"] = p.bm;
    q["omega_m_hz"] = p.omega_m;
    q["theta_deg"] = p.theta_deg;
    q["larmor_hz"] = p.larmor;
    q["rabi_hz"] = p.rabi;
    json files;
    if (!p.series_file.empty()) files["series"] = p.series_file;
    if (!p.spectrum_file.empty()) files["spectrum"] = p.spectrum_file;
    if (!p.peak_file.empty()) files["peaks"] = p.peak_file;
    if (!p.trajectory_file.empty()) files["trajectory"] = p.trajectory_file;
    q["files"] = files.is_null() ? json::object() : files;
    q["classification"] = p.classification ? to_json(*p.classification) : json(nullptr);
    if (p.status == "ok") {
      q["center_amplitude"] = p.center_amplitude;
      q["generalized_rabi_hz"] = p.generalized_rabi;
      q["second_sideband_amplitude"] = p.second_sideband_amplitude;
    }
    if (p.status != "failed") q["integrity"] = detail::to_json(p.integrity);
    points.push_back(std::move(q));
  }
  j["points"] = std::move(points);
  json agg = json::object();
  if (r.angular_fit)
    agg["angular_fit"] = json{{"model", "A*sin(2*theta)"},
                              {"amplitude", r.angular_fit->amplitude},
                              {"r2", r.angular_fit->r2},
                              {"points", r.angular_fit->points}};
  if (r.rabi_scaling) {
    const ScalingReport& s = *r.rabi_scaling;
    json rows = json::array();
    for (const auto& row : s.rows)
      rows.push_back(json{{"bm_nt", row.bm},
                          {"rabi_hz", row.rabi},
                          {"inferred_bm_nt", row.inferred_bm},
                          {"relative_error", row.relative_error}});
    agg["rabi_scaling"] = json{{"slope_hz_per_nt", s.fit.slope},
                               {"intercept_hz", s.fit.intercept},
                               {"r2", s.fit.r2},
                               {"expected_slope_hz_per_nt", s.expected_slope},
                               {"slope_relative_error", s.slope_error},
                               {"points", std::move(rows)}};
  }
  if (!r.detuning.empty()) {
    json rows = json::array();
    for (const DetuningRow& d : r.detuning)
      rows.push_back(json{{"omega_m_hz", d.omega_m},
                          {"detuning_hz", d.detuning},
                          {"detuning_over_rabi", d.detuning_over_rabi},
                          {"generalized_rabi_hz", d.generalized_rabi},
                          {"second_sideband_amplitude", d.second_sideband},
                          {"ratio_to_resonant", d.ratio_to_resonant ? json(*d.ratio_to_resonant) : json(nullptr)}});
    agg["detuning"] = std::move(rows);
  }
  if (!r.aggregate_note.empty()) agg["skipped"] = r.aggregate_note;
  j["aggregate"] = std::move(agg);
  return j;
}

inline void write_report(const RunReport& r, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  write_json(to_json(r), out / "report.json");
}

/// Runs one scenario and writes its artifacts and report.json under `out`.
/// Module failures propagate as StageError.
inline RunReport run_scenario(const Scenario& scenario, const std::filesystem::path& out) {
  RunReport report;
  report.name = scenario.name;
  report.config_hash = scenario.config_hash;
  const PointAnalysis a = analyze_scenario(scenario);
  PointRecord rec = detail::record_shell(scenario);
  rec.label = scenario.name;
  detail::stage("output", [&] {
    detail::write_point(a, out, std::filesystem::path{}, rec);
    report.points.push_back(rec);
    write_report(report, out);
    return 0;
  });
  return report;
}

namespace detail {

inline std::string point_dir(SweepParameter p, double v) {
  switch (p) {
    case SweepParameter::BmAmplitude: return "bm_nt_" + value_label(v);
    case SweepParameter::DriveFrequency: return "omega_m_hz_" + value_label(v);
    case SweepParameter::ThetaAngle: return "theta_deg_" + value_label(v);
  }
  return value_label(v);
}

inline void attach_aggregates(const SweepSpec& spec, RunReport& report) {
  std::size_t failed = 0;
  for (const PointRecord& p : report.points) failed += p.status == "failed";
  if (5 * failed > report.points.size()) {
    report.aggregate_note = std::to_string(failed) + " of " + std::to_string(report.points.size()) +
                            " points failed (more than 20%)";
    return;
  }
  const double gamma = spec.base.ground.gamma;
  switch (spec.parameter) {
    case SweepParameter::ThetaAngle: {
      std::vector<double> th, amp;
      for (const PointRecord& p : report.points)
        if (p.status == "ok") {
          th.push_back(p.theta_deg);
          amp.push_back(p.center_amplitude);
        }
      try {
        report.angular_fit = fit_angular_law(th, amp);
      } catch (const Error& e) {
        report.aggregate_note = std::string("angular fit: ") + e.what();
      }
      break;
    }
    case SweepParameter::BmAmplitude: {
      std::vector<ScalingPoint> pts;
      for (const PointRecord& p : report.points)
        if (p.status == "ok" && p.classification && p.classification->rabi) pts.push_back({p.bm, *p.classification->rabi});
      try {
        ScalingReport s;
        s.fit = fit_rabi_scaling(pts);
        s.expected_slope = 0.5 * gamma;
        s.slope_error = std::abs(s.fit.slope - s.expected_slope) / s.expected_slope;
        for (const ScalingPoint& p : pts) {
          const double inferred = infer_bm(p.rabi, gamma);
          s.rows.push_back({p.bm, p.rabi, inferred, p.bm > 0 ? std::abs(inferred - p.bm) / p.bm : 0.0});
        }
        report.rabi_scaling = s;
      } catch (const Error& e) {
        report.aggregate_note = std::string("rabi scaling fit: ") + e.what();
      }
      break;
    }
    case SweepParameter::DriveFrequency: {
      const PointRecord* resonant = nullptr;
      for (const PointRecord& p : report.points)
        if (p.status == "ok" && (!resonant || std::abs(p.omega_m - p.larmor) < std::abs(resonant->omega_m - resonant->larmor)))
          resonant = &p;
      const bool has_reference = resonant && std::abs(resonant->omega_m - resonant->larmor) <= 0.5 * resonant->rabi &&
                                 resonant->second_sideband_amplitude > 0;
      if (!has_reference) report.aggregate_note = "no resonant point within rabi/2 of the larmor frequency";
      for (const PointRecord& p : report.points) {
        if (p.status != "ok") continue;
        DetuningRow row;
        row.omega_m = p.omega_m;
        row.detuning = p.omega_m - p.larmor;
        row.detuning_over_rabi = p.rabi > 0 ? row.detuning / p.rabi : 0.0;
        row.generalized_rabi = p.generalized_rabi;
        row.second_sideband = p.second_sideband_amplitude;
        if (has_reference) row.ratio_to_resonant = p.second_sideband_amplitude / resonant->second_sideband_amplitude;
        report.detuning.push_back(row);
      }
      break;
    }
  }
}

}  // namespace detail

/// Runs every sweep point (concurrently, up to thread_count() workers) and
/// writes per-point artifacts under out/<parameter>_<value>/ plus a single
/// report.json. A failing point is recorded and the sweep continues.
inline RunReport run_sweep(const SweepSpec& spec, const std::filesystem::path& out, unsigned threads = 0) {
  detail::stage("config", [&] {
    spec.validate();
    return 0;
  });
  RunReport report;
  report.name = spec.base.name;
  report.kind = "sweep";
  report.config_hash = spec.base.config_hash;
  report.parameter = spec.parameter;
  report.points.resize(spec.values.size());

  auto run_point = [&](std::size_t i) {
    const double v = spec.values[i];
    const Scenario s = spec.at(v);
    PointRecord rec = detail::record_shell(s);
    rec.label = detail::point_dir(spec.parameter, v);
    rec.value = v;
    try {
      const PointAnalysis a = analyze_scenario(s);
      detail::stage("output", [&] {
        detail::write_point(a, out, rec.label, rec);
        return 0;
      });
    } catch (const StageError& e) {
      rec.status = "failed";
      rec.stage = e.stage();
      rec.error = e.what();
      rec.exit_code = e.exit_code();
    } catch (const std::exception& e) {
      rec.status = "failed";
      rec.error = e.what();
      rec.exit_code = 1;
    }
    report.points[i] = std::move(rec);
  };

  const unsigned workers = std::min<unsigned>(threads ? threads : thread_count(), spec.values.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < spec.values.size(); ++i) run_point(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < spec.values.size();) run_point(i);
      });
    for (auto& t : pool) t.join();
  }

  detail::attach_aggregates(spec, report);
  detail::stage("output", [&] {
    write_report(report, out);
    return 0;
  });
  return report;
}

}  // namespace mollow
