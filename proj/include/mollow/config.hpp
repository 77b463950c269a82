#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "mollow/catalog.hpp"
#include "mollow/dynamics.hpp"
#include "mollow/errors.hpp"
#include "mollow/mec_transfer.hpp"
#include "mollow/probe.hpp"
#include "mollow/spectral.hpp"

namespace mollow {

inline constexpr const char* kVersion = "0.1.0";

/// Scenario file format: one `key = value` per line, `#` starts a comment,
/// lists are comma separated. Unknown or repeated keys are rejected.
///
///   kind                 scenario | sweep
///   name                 free text
///   manifold.ground      Ground3He
///   manifold.meta        optional; must match probe.line
///   field.b0_nt          static field (nT)
///   field.bm_nt          drive amplitude (nT)
///   field.omega_m_hz     drive frequency (Hz) or `resonant` (default)
///   field.pump_rate      1/s
///   field.gamma1         1/s, longitudinal orientation
///   field.gamma2         1/s, transverse orientation and higher ranks
///   initial.tilt_deg     initial ground spin angle from z toward x
///   mec.gamma_e1         1/s
///   mec.gamma_e2         1/s
///   mec.meta_gamma       list, 1/s per rank (last entry repeats)
///   probe.line           C8 | C9 | D0
///   probe.polarization   circular | linear
///   probe.theta_deg      [0, 180]
///   sim.duration_s
///   sim.dt_s
///   analysis.window      hann | rect
///   analysis.zero_pad    1 | 2 | 4 | 8
///   analysis.prominence  relative prominence threshold
///   analysis.min_snr     peak power over median floor
///   output.trajectory    none | density | multipoles
///   output.stride        keep every n-th trajectory sample
///   output.full_spectrum true | false
///   sweep.parameter      bm_amplitude | drive_frequency | theta_angle
///   sweep.values         list

enum class TrajectoryExport { None, Density, Multipoles };

struct AnalysisConfig {
  Window window = Window::Hann;
  int zero_pad = 4;
  double prominence = 1e-4;
  double min_snr = 100;
};

struct OutputConfig {
  TrajectoryExport trajectory = TrajectoryExport::None;
  int stride = 1;
  bool full_spectrum = false;
};

struct Scenario {
  std::string name = "scenario";
  SpinManifold ground = manifold(ManifoldLabel::Ground3He);
  SpinManifold meta = manifold(ManifoldLabel::MetaF32);
  FieldEnvironment env;
  double tilt_deg = 0;
  MecParams mec;
  ProbeConfig probe;
  double duration = 2.0;
  double dt = 1e-5;
  AnalysisConfig analysis;
  OutputConfig output;
  /// FNV-1a hash of the canonical configuration text.
  std::string config_hash;

  double larmor() const { return env.larmor(ground); }
  double rabi() const { return env.rabi(ground); }

  /// Throws ConfigError naming the offending field.
  void validate(const std::string& prefix = "") const {
    auto fail = [&](const std::string& field, const std::string& msg) { throw ConfigError(prefix + field + ": " + msg); };
    if (ground.label != ManifoldLabel::Ground3He) fail("manifold.ground", "only Ground3He is supported");
    if (meta.label != addressed_manifold(probe.line))
      fail("manifold.meta", std::string(to_string(meta.label)) + " is not addressed by probe line " +
                                std::string(to_string(probe.line)));
    if (!(env.b0 > 0)) fail("field.b0_nt", "must be positive");
    if (!(env.bm >= 0)) fail("field.bm_nt", "must be nonnegative");
    if (!(env.omega_m >= 0)) fail("field.omega_m_hz", "must be nonnegative");
    if (!(env.pump_rate >= 0)) fail("field.pump_rate", "must be nonnegative");
    if (!(env.gamma1 >= 0)) fail("field.gamma1", "must be nonnegative");
    if (!(env.gamma2 >= 0)) fail("field.gamma2", "must be nonnegative");
    if (!(mec.gamma_e1 >= 0)) fail("mec.gamma_e1", "must be nonnegative");
    if (!(mec.gamma_e2 >= 0)) fail("mec.gamma_e2", "must be nonnegative");
    for (std::size_t i = 0; i < mec.meta_gamma.size(); ++i)
      if (!(mec.meta_gamma[i] >= 0)) fail("mec.meta_gamma[" + std::to_string(i) + "]", "must be nonnegative");
    if (probe.polarization == Polarization::LinearTheta && !(probe.theta_deg >= 0 && probe.theta_deg <= 180))
      fail("probe.theta_deg", "must lie in [0, 180]");
    if (!(duration > 0)) fail("sim.duration_s", "must be positive");
    if (!(dt > 0)) fail("sim.dt_s", "must be positive");
    const double guard = max_step(env, ground);
    if (dt > guard * (1 + 1e-12)) {
      std::ostringstream os;
      os << "dt = " << dt << " s violates the resolution guard dt <= 1/(50*max(larmor, omega_m)) = " << guard << " s";
      fail("sim.dt_s", os.str());
    }
    if (std::lround(duration / dt) < 2 * 256 + 2) fail("sim.duration_s", "too short for spectral analysis at this dt");
    if (env.bm > 0 && duration * rabi() < 20) {
      std::ostringstream os;
      os << "duration * rabi = " << duration * rabi() << " < 20 required to resolve drive sidebands";
      fail("sim.duration_s", os.str());
    }
    if (analysis.zero_pad != 1 && analysis.zero_pad != 2 && analysis.zero_pad != 4 && analysis.zero_pad != 8)
      fail("analysis.zero_pad", "must be 1, 2, 4 or 8");
    if (!(analysis.prominence > 0 && analysis.prominence < 1)) fail("analysis.prominence", "must lie in (0, 1)");
    if (!(analysis.min_snr >= 1)) fail("analysis.min_snr", "must be at least 1");
    if (output.stride < 1) fail("output.stride", "must be at least 1");
  }
};

enum class SweepParameter { BmAmplitude, DriveFrequency, ThetaAngle };

inline std::string_view to_string(SweepParameter p) {
  switch (p) {
    case SweepParameter::BmAmplitude: return "bm_amplitude";
    case SweepParameter::DriveFrequency: return "drive_frequency";
    case SweepParameter::ThetaAngle: return "theta_angle";
  }
  return "?";
}

struct SweepSpec {
  SweepParameter parameter = SweepParameter::BmAmplitude;
  std::vector<double> values;
  Scenario base;

  Scenario at(double value) const {
    Scenario s = base;
    switch (parameter) {
      case SweepParameter::BmAmplitude: s.env.bm = value; break;
      case SweepParameter::DriveFrequency: s.env.omega_m = value; break;
      case SweepParameter::ThetaAngle: s.probe.theta_deg = value; break;
    }
    return s;
  }

  void validate() const {
    if (values.empty()) throw ConfigError("sweep.values: must not be empty");
    bool up = true, down = true;
    for (std::size_t i = 1; i < values.size(); ++i) {
      up = up && values[i] > values[i - 1];
      down = down && values[i] < values[i - 1];
    }
    if (!up && !down) throw ConfigError("sweep.values: must be strictly monotone");
    if (parameter == SweepParameter::ThetaAngle && base.probe.polarization != Polarization::LinearTheta)
      throw ConfigError("sweep.parameter: theta_angle requires probe.polarization = linear");
    base.validate();
    for (std::size_t i = 0; i < values.size(); ++i) at(values[i]).validate("sweep.values[" + std::to_string(i) + "] -> ");
  }
};

using Config = std::variant<Scenario, SweepSpec>;

inline std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[i] = digits[h & 0xf];
  return out;
}

namespace detail {

struct Entry {
  std::string value;
  int line = 0;
  int column = 0;  // 1-based column of the value
};

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

class KeyReader {
public:
  KeyReader(std::map<std::string, Entry> entries, std::string source)
      : entries_(std::move(entries)), source_(std::move(source)) {}

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::string text(const std::string& key, const std::string& fallback) {
    used_.push_back(key);
    auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second.value;
  }

  double number(const std::string& key, double fallback) {
    used_.push_back(key);
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    return parse_number(key, it->second, it->second.value, 0);
  }

  int integer(const std::string& key, int fallback) {
    const double v = number(key, fallback);
    if (v != std::floor(v)) fail(key, "expected an integer");
    return static_cast<int>(v);
  }

  bool boolean(const std::string& key, bool fallback) {
    const std::string v = lower(text(key, fallback ? "true" : "false"));
    if (v == "true") return true;
    if (v == "false") return false;
    fail(key, "expected true or false, got '" + v + "'");
    return false;
  }

  std::vector<double> list(const std::string& key) {
    used_.push_back(key);
    std::vector<double> out;
    auto it = entries_.find(key);
    if (it == entries_.end()) return out;
    const std::string& raw = it->second.value;
    std::size_t start = 0;
    while (start <= raw.size()) {
      const std::size_t comma = std::min(raw.find(',', start), raw.size());
      const std::string item = trim(std::string_view(raw).substr(start, comma - start));
      const std::size_t offset = raw.find_first_not_of(" \t", start);
      out.push_back(parse_number(key, it->second, item, offset == std::string::npos ? start : offset));
      start = comma + 1;
    }
    return out;
  }

  template <typename E>
  E choice(const std::string& key, E fallback, const std::vector<std::pair<std::string, E>>& options) {
    used_.push_back(key);
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    const std::string v = lower(it->second.value);
    for (const auto& [name, value] : options)
      if (lower(name) == v) return value;
    std::string allowed;
    for (const auto& o : options) allowed += (allowed.empty() ? "" : ", ") + o.first;
    fail(key, "unknown value '" + it->second.value + "' (expected one of: " + allowed + ")");
    return fallback;
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    auto it = entries_.find(key);
    std::string where = source_;
    if (it != entries_.end())
      where += ":" + std::to_string(it->second.line) + ":" + std::to_string(it->second.column);
    throw ConfigError(where + ": " + key + ": " + msg);
  }

  void reject_unknown() const {
    for (const auto& [key, entry] : entries_)
      if (std::find(used_.begin(), used_.end(), key) == used_.end())
        throw ConfigError(source_ + ":" + std::to_string(entry.line) + ":1: unknown key '" + key + "'");
  }

private:
  double parse_number(const std::string& key, const Entry& e, const std::string& item, std::size_t offset) const {
    double v = 0;
    const char* first = item.data();
    const char* last = item.data() + item.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (item.empty() || ec != std::errc() || ptr != last || !std::isfinite(v))
      throw ConfigError(source_ + ":" + std::to_string(e.line) + ":" + std::to_string(e.column + offset) + ": " + key +
                        ": expected a number, got '" + item + "'");
    return v;
  }

  std::map<std::string, Entry> entries_;
  std::string source_;
  std::vector<std::string> used_;
};

inline std::map<std::string, Entry> parse_entries(const std::string& text, const std::string& source) {
  std::map<std::string, Entry> entries;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string body = line.substr(0, line.find('#'));
    if (trim(body).empty()) continue;
    const auto eq = body.find('=');
    const auto lead = body.find_first_not_of(" \t") + 1;
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(number) + ":" + std::to_string(lead) +
                        ": expected 'key = value'");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty())
      throw ConfigError(source + ":" + std::to_string(number) + ":" + std::to_string(eq + 1) + ": missing key");
    for (char c : key)
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'))
        throw ConfigError(source + ":" + std::to_string(number) + ":" + std::to_string(lead) + ": invalid key '" +
                          key + "'");
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    const auto vpos = body.find_first_not_of(" \t", eq + 1);
    const int column = static_cast<int>(vpos == std::string::npos ? eq + 2 : vpos + 1);
    if (value.empty())
      throw ConfigError(source + ":" + std::to_string(number) + ":" + std::to_string(column) + ": " + key +
                        ": missing value");
    if (entries.count(key))
      throw ConfigError(source + ":" + std::to_string(number) + ":" + std::to_string(lead) + ": duplicate key '" +
                        key + "' (first set on line " + std::to_string(entries[key].line) + ")");
    entries[key] = {value, number, column};
  }
  return entries;
}

}  // namespace detail

/// Parses configuration text. `source` labels error locations.
inline Config parse_config(const std::string& text, const std::string& source = "<config>") {
  auto entries = detail::parse_entries(text, source);
  std::string canonical;
  for (const auto& [k, e] : entries) canonical += k + "=" + e.value + "\n";
  detail::KeyReader r(std::move(entries), source);

  const std::string kind = detail::lower(r.text("kind", "scenario"));
  if (kind != "scenario" && kind != "sweep") r.fail("kind", "expected scenario or sweep");

  Scenario s;
  s.name = r.text("name", s.name);
  s.config_hash = fnv1a_hex(canonical);
  const std::vector<std::pair<std::string, ManifoldLabel>> labels = {{"Ground3He", ManifoldLabel::Ground3He},
                                                                     {"MetaF12", ManifoldLabel::MetaF12},
                                                                     {"MetaF32", ManifoldLabel::MetaF32},
                                                                     {"Meta4He", ManifoldLabel::Meta4He}};
  s.ground = manifold(r.choice("manifold.ground", ManifoldLabel::Ground3He, labels));

  s.probe.line = r.choice<ProbeLine>("probe.line", ProbeLine::C9,
                                     {{"C8", ProbeLine::C8}, {"C9", ProbeLine::C9}, {"D0", ProbeLine::D0}});
  s.probe.polarization = r.choice<Polarization>(
      "probe.polarization", Polarization::CircularX,
      {{"circular", Polarization::CircularX}, {"linear", Polarization::LinearTheta}});
  s.probe.theta_deg = r.number("probe.theta_deg", 0.0);
  s.meta = manifold(r.choice("manifold.meta", addressed_manifold(s.probe.line), labels));

  s.env.b0 = r.number("field.b0_nt", s.env.b0);
  s.env.bm = r.number("field.bm_nt", 0.0);
  const bool resonant = detail::lower(r.text("field.omega_m_hz", "resonant")) == "resonant";
  s.env.omega_m = resonant ? s.larmor() : r.number("field.omega_m_hz", 0.0);
  s.env.pump_rate = r.number("field.pump_rate", 0.0);
  s.env.gamma1 = r.number("field.gamma1", 0.0);
  s.env.gamma2 = r.number("field.gamma2", 0.0);
  s.tilt_deg = r.number("initial.tilt_deg", 0.0);

  s.mec.gamma_e1 = r.number("mec.gamma_e1", 0.0);
  s.mec.gamma_e2 = r.number("mec.gamma_e2", 0.0);
  s.mec.meta_gamma = r.list("mec.meta_gamma");

  s.duration = r.number("sim.duration_s", s.duration);
  s.dt = r.number("sim.dt_s", s.dt);

  s.analysis.window = r.choice<Window>("analysis.window", Window::Hann, {{"hann", Window::Hann}, {"rect", Window::Rect}});
  s.analysis.zero_pad = r.integer("analysis.zero_pad", s.analysis.zero_pad);
  s.analysis.prominence = r.number("analysis.prominence", s.analysis.prominence);
  s.analysis.min_snr = r.number("analysis.min_snr", s.analysis.min_snr);

  s.output.trajectory = r.choice<TrajectoryExport>("output.trajectory", TrajectoryExport::None,
                                                   {{"none", TrajectoryExport::None},
                                                    {"density", TrajectoryExport::Density},
                                                    {"multipoles", TrajectoryExport::Multipoles}});
  s.output.stride = r.integer("output.stride", 1);
  s.output.full_spectrum = r.boolean("output.full_spectrum", false);

  if (kind == "scenario") {
    if (r.has("sweep.parameter") || r.has("sweep.values")) r.fail("sweep.parameter", "sweep keys require kind = sweep");
    r.reject_unknown();
    s.validate();
    return s;
  }

  if (!r.has("sweep.parameter")) throw ConfigError(source + ": sweep.parameter: required for kind = sweep");
  if (!r.has("sweep.values")) throw ConfigError(source + ": sweep.values: required for kind = sweep");
  SweepSpec sweep;
  sweep.parameter = r.choice<SweepParameter>("sweep.parameter", SweepParameter::BmAmplitude,
                                             {{"bm_amplitude", SweepParameter::BmAmplitude},
                                              {"drive_frequency", SweepParameter::DriveFrequency},
                                              {"theta_angle", SweepParameter::ThetaAngle}});
  if (sweep.parameter == SweepParameter::DriveFrequency && r.has("field.omega_m_hz") && !resonant)
    r.fail("field.omega_m_hz", "is set by sweep.values for a drive_frequency sweep");
  sweep.values = r.list("sweep.values");
  r.reject_unknown();
  sweep.base = s;
  sweep.validate();
  return sweep;
}

inline Config load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot open file");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path);
}

}  // namespace mollow
