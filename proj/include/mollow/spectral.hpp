#pragma once

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mollow/errors.hpp"
#include "mollow/probe.hpp"

namespace mollow {

enum class Window { Hann, Rect };

inline std::string_view to_string(Window w) { return w == Window::Hann ? "Hann" : "Rect"; }

inline std::vector<double> window_weights(Window w, std::size_t n) {
  std::vector<double> out(n, 1.0);
  if (w == Window::Hann)
    for (std::size_t i = 0; i < n; ++i)
      out[i] = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return out;
}

/// Smallest 2^a 3^b 5^c >= n; keeps mixed-radix FFT sizes fast.
inline std::size_t next_fast_size(std::size_t n) {
  for (std::size_t m = std::max<std::size_t>(n, 1);; ++m) {
    std::size_t r = m;
    for (std::size_t p : {2, 3, 5})
      while (r % p == 0) r /= p;
    if (r == 1) return m;
  }
}

/// One-sided power spectral density (signal^2/Hz). Integrating power over
/// frequency returns sum(w^2 s^2)/sum(w^2), the mean square of the series for
/// the rectangular window.
struct Spectrum {
  std::vector<double> freqs;
  std::vector<double> power;
  Window window = Window::Hann;
  std::size_t nfft = 0;
  std::size_t samples = 0;
  double df = 0;
  double dt = 0;
  double window_sum = 0;     // coherent gain * n
  double window_sq_sum = 0;  // incoherent gain * n

  /// Window-gain-normalized sinusoid amplitude for a power value: a pure tone
  /// A cos(2 pi f t) centred on a bin reads back A.
  double amplitude_of(double p) const {
    return 2.0 * std::sqrt(std::max(p, 0.0) * window_sq_sum / (2.0 * dt)) / window_sum;
  }
  double nyquist() const { return 0.5 / dt; }
  /// Bin width without zero padding, 1/(n dt).
  double native_df() const { return 1.0 / (static_cast<double>(samples) * dt); }
};

/// Upper envelope of the window's sidelobe amplitude, relative to the main
/// lobe, at a distance of d native bins (d > 1).
inline double sidelobe_envelope(Window w, double d) {
  if (w == Window::Rect) return 1.0 / (std::numbers::pi * d);
  return 1.0 / (std::numbers::pi * d * std::abs(d * d - 1.0));
}

namespace detail {
inline void check_uniform(const TimeSeries& s) {
  if (!(s.dt > 0)) throw DomainError("time series needs a positive sampling step");
  for (double v : s.values)
    if (!std::isfinite(v)) throw DomainError("time series contains non-finite values");
  if (s.times.size() != s.values.size()) return;
  for (std::size_t i = 1; i < s.times.size(); ++i)
    if (std::abs((s.times[i] - s.times[i - 1]) - s.dt) > 1e-9 * s.dt + 1e-15)
      throw DomainError("time series is not uniformly sampled at index " + std::to_string(i));
}
}  // namespace detail

/// Windowed, mean-removed, zero-padded FFT. nfft = zero_pad_factor *
/// next_fast_size(n); df = 1/(nfft dt).
inline Spectrum fft_spectrum(const TimeSeries& series, Window window = Window::Hann, int zero_pad_factor = 4) {
  const std::size_t n = series.values.size();
  if (n < 256) throw DomainError("spectrum needs at least 256 samples, got " + std::to_string(n));
  if (zero_pad_factor != 1 && zero_pad_factor != 2 && zero_pad_factor != 4 && zero_pad_factor != 8)
    throw DomainError("zero_pad_factor must be 1, 2, 4 or 8");
  detail::check_uniform(series);

  Spectrum spec;
  spec.window = window;
  spec.dt = series.dt;
  spec.samples = n;
  spec.nfft = static_cast<std::size_t>(zero_pad_factor) * next_fast_size(n);
  spec.df = 1.0 / (static_cast<double>(spec.nfft) * series.dt);

  const double mean = std::accumulate(series.values.begin(), series.values.end(), 0.0) / static_cast<double>(n);
  const auto w = window_weights(window, n);
  std::vector<double> buf(spec.nfft, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    buf[i] = w[i] * (series.values[i] - mean);
    spec.window_sum += w[i];
    spec.window_sq_sum += w[i] * w[i];
  }

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> out;
  fft.fwd(out, buf);

  const std::size_t bins = spec.nfft / 2 + 1;
  spec.freqs.resize(bins);
  spec.power.resize(bins);
  const double scale = series.dt / spec.window_sq_sum;
  for (std::size_t k = 0; k < bins; ++k) {
    const bool edge = k == 0 || (spec.nfft % 2 == 0 && k == spec.nfft / 2);
    spec.freqs[k] = static_cast<double>(k) * spec.df;
    spec.power[k] = (edge ? 1.0 : 2.0) * std::norm(out[k]) * scale;
  }
  return spec;
}

/// Window-normalized complex amplitude of the series at one frequency:
/// 2/sum(w) * sum_n w_n (s_n - mean) exp(-2 pi i f t_n). For a tone
/// A cos(2 pi f t + phi) this is close to A exp(i phi).
inline std::complex<double> tone_phasor(const TimeSeries& series, double freq, Window window = Window::Hann) {
  detail::check_uniform(series);
  const std::size_t n = series.values.size();
  if (n == 0) return 0.0;
  const double mean = std::accumulate(series.values.begin(), series.values.end(), 0.0) / static_cast<double>(n);
  const auto w = window_weights(window, n);
  std::complex<double> acc = 0;
  double wsum = 0;
  const std::complex<double> step = std::polar(1.0, -2 * std::numbers::pi * freq * series.dt);
  std::complex<double> rot = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += w[i] * (series.values[i] - mean) * rot;
    wsum += w[i];
    rot *= step;
    if (i % 1024 == 1023) rot /= std::abs(rot);
  }
  return 2.0 * acc / wsum;
}

struct Peak {
  double freq = 0;        // Hz, interpolated
  double amplitude = 0;   // window-gain-normalized
  double prominence = 0;  // fraction of the strongest power in the searched band
};

struct PeakSet {
  std::vector<Peak> peaks;  // ascending frequency
  double noise_floor = 0;   // median power of the searched band
  double df = 0;
  double nyquist = 0;
};

struct PeakOptions {
  /// Minimum topographic prominence, relative to the band's maximum power.
  double prominence_threshold = 1e-4;
  /// Minimum peak power as a multiple of the median noise floor.
  double min_snr = 100;
  /// Minimum peak power relative to the strongest non-DC bin of the whole
  /// spectrum; keeps round-off structure out of bands with no signal.
  double dynamic_range = 1e-16;
  double fmin = 0;
  double fmax = -1;  // negative: up to Nyquist
  /// Drop maxima that sit inside a stronger peak's main lobe (1.5 native
  /// bins) or below twice its window sidelobe envelope.
  bool reject_sidelobes = true;
};

/// Local maxima at least min_snr above the median noise floor whose prominence clears the
/// threshold, optionally minus window sidelobes of stronger peaks.
/// Frequencies are refined by a three-point parabola through the log power.
inline PeakSet detect_peaks(const Spectrum& spec, const PeakOptions& opt = {}) {
  if (spec.power.empty()) throw DomainError("empty spectrum");
  PeakSet out;
  out.df = spec.df;
  out.nyquist = spec.freqs.back();
  const double fmax = opt.fmax < 0 ? spec.freqs.back() : opt.fmax;
  std::size_t lo = 0, hi = spec.power.size();
  while (lo < spec.power.size() && spec.freqs[lo] < opt.fmin) ++lo;
  while (hi > lo && spec.freqs[hi - 1] > fmax) --hi;
  if (hi - lo < 3) return out;

  const std::vector<double> p(spec.power.begin() + lo, spec.power.begin() + hi);
  std::vector<double> sorted = p;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  out.noise_floor = sorted[sorted.size() / 2];
  const double top = *std::max_element(p.begin(), p.end());
  if (!(top > 0)) return out;
  const double global = spec.power.size() > 1 ? *std::max_element(spec.power.begin() + 1, spec.power.end()) : top;
  const double floor = std::max(opt.min_snr * out.noise_floor, opt.dynamic_range * global);

  struct Candidate {
    Peak peak;
    double power;
  };
  std::vector<Candidate> found;
  for (std::size_t i = 1; i + 1 < p.size(); ++i) {
    if (!(p[i] > p[i - 1] && p[i] >= p[i + 1] && p[i] > floor)) continue;
    // Lowest point on each side before reaching higher ground.
    double left_min = p[i];
    for (std::size_t j = i; j-- > 0;) {
      if (p[j] > p[i]) break;
      left_min = std::min(left_min, p[j]);
    }
    double right_min = p[i];
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      if (p[j] > p[i]) break;
      right_min = std::min(right_min, p[j]);
    }
    const double prominence = (p[i] - std::max(left_min, right_min)) / top;
    if (prominence < opt.prominence_threshold) continue;

    double offset = 0.0;
    double peak_power = p[i];
    if (p[i - 1] > 0 && p[i + 1] > 0) {
      const double a = std::log(p[i - 1]), b = std::log(p[i]), c = std::log(p[i + 1]);
      const double denom = a - 2 * b + c;
      if (denom < 0) {
        offset = 0.5 * (a - c) / denom;
        if (std::abs(offset) <= 0.5) {
          // Bounded by the worst-case scalloping loss (Rect, 3.92 dB).
          peak_power = std::min(std::exp(b - 0.25 * (a - c) * offset), 2.5 * p[i]);
        } else {
          offset = std::clamp(offset, -0.5, 0.5);
        }
      }
    }
    found.push_back({{spec.freqs[lo + i] + offset * spec.df, spec.amplitude_of(peak_power), prominence}, peak_power});
  }

  if (opt.reject_sidelobes && spec.samples > 0) {
    std::vector<Candidate> by_power = found;
    std::stable_sort(by_power.begin(), by_power.end(),
                     [](const Candidate& a, const Candidate& b) { return a.power > b.power; });
    std::vector<Candidate> kept;
    for (const Candidate& c : by_power) {
      bool sidelobe = false;
      for (const Candidate& k : kept) {
        const double d = std::abs(c.peak.freq - k.peak.freq) / spec.native_df();
        const double ratio = std::sqrt(c.power / k.power);
        if (d < 1.5 || ratio <= 2.0 * sidelobe_envelope(spec.window, d)) {
          sidelobe = true;
          break;
        }
      }
      if (!sidelobe) kept.push_back(c);
    }
    found = std::move(kept);
  }

  std::sort(found.begin(), found.end(), [](const Candidate& a, const Candidate& b) { return a.peak.freq < b.peak.freq; });
  for (const Candidate& c : found) out.peaks.push_back(c.peak);
  return out;
}

enum class MollowStructure { Singlet, Triplet, Quintuplet, Other };

inline std::string_view to_string(MollowStructure s) {
  switch (s) {
    case MollowStructure::Singlet: return "Singlet";
    case MollowStructure::Triplet: return "Triplet";
    case MollowStructure::Quintuplet: return "Quintuplet";
    case MollowStructure::Other: return "Other";
  }
  return "?";
}

struct Classification {
  MollowStructure structure = MollowStructure::Other;
  double center = 0;                  // Hz
  std::optional<double> rabi;         // Hz, fitted sideband spacing
  double residual = 0;                // Hz, worst template mismatch
  std::vector<Peak> matched;          // peaks used for the decision
  std::string diagnostics;
};

/// Least-squares fit of f_i = center + k_i * rabi; returns {center, rabi, max |residual|}.
inline std::array<double, 3> fit_template(const std::vector<double>& freqs, const std::vector<int>& orders) {
  const double n = static_cast<double>(freqs.size());
  double sk = 0, skk = 0, sf = 0, skf = 0;
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    sk += orders[i];
    skk += orders[i] * orders[i];
    sf += freqs[i];
    skf += orders[i] * freqs[i];
  }
  const double det = n * skk - sk * sk;
  const double rabi = (n * skf - sk * sf) / det;
  const double center = (sf - rabi * sk) / n;
  double worst = 0;
  for (std::size_t i = 0; i < freqs.size(); ++i)
    worst = std::max(worst, std::abs(freqs[i] - (center + orders[i] * rabi)));
  return {center, rabi, worst};
}

/// Matches the peaks within larmor_hint +/- larmor_hint/2 to the templates
/// {c}, {c, c +/- R}, {c, c +/- R, c +/- 2R}. A template is accepted when the
/// peak count matches and the worst least-squares residual is below 0.5 df.
inline Classification classify_mollow(const PeakSet& peaks, double larmor_hint) {
  if (!(larmor_hint > 0) || (peaks.nyquist > 0 && larmor_hint > peaks.nyquist))
    throw DomainError("larmor hint " + std::to_string(larmor_hint) + " Hz outside the spectrum range");
  Classification c;
  for (const Peak& p : peaks.peaks)
    if (std::abs(p.freq - larmor_hint) <= 0.5 * larmor_hint) c.matched.push_back(p);

  const std::size_t n = c.matched.size();
  std::vector<double> freqs;
  for (const Peak& p : c.matched) freqs.push_back(p.freq);

  if (n == 0) {
    c.diagnostics = "no peaks near the hint";
    return c;
  }
  if (n == 1) {
    c.structure = MollowStructure::Singlet;
    c.center = freqs[0];
    return c;
  }
  if (n != 3 && n != 5) {
    c.diagnostics = std::to_string(n) + " peaks near the hint; expected 1, 3 or 5";
    return c;
  }
  std::vector<int> orders;
  for (int k = -static_cast<int>(n / 2); k <= static_cast<int>(n / 2); ++k) orders.push_back(k);
  const auto [center, rabi, residual] = fit_template(freqs, orders);
  c.center = center;
  c.rabi = rabi;
  c.residual = residual;
  if (residual < 0.5 * peaks.df && rabi > 0) {
    c.structure = n == 3 ? MollowStructure::Triplet : MollowStructure::Quintuplet;
  } else {
    c.diagnostics = "template residual " + std::to_string(residual) + " Hz exceeds 0.5 df = " +
                    std::to_string(0.5 * peaks.df) + " Hz";
    c.rabi.reset();
  }
  return c;
}

/// Oscillating-field amplitude from the sideband spacing: Bm = 2 rabi / gamma.
inline double infer_bm(double rabi_hz, double gamma_hz_per_nt) {
  if (!(rabi_hz > 0)) throw DomainError("rabi estimate must be positive");
  if (!(gamma_hz_per_nt > 0)) throw DomainError("gyromagnetic ratio must be positive");
  return 2.0 * rabi_hz / gamma_hz_per_nt;
}

struct ScalingPoint {
  double bm = 0;    // nT
  double rabi = 0;  // Hz
};

struct LinearFit {
  double slope = 0;
  double intercept = 0;
  double r2 = 0;
};

/// Ordinary least squares of rabi against bm.
inline LinearFit fit_rabi_scaling(const std::vector<ScalingPoint>& points) {
  if (points.size() < 3) throw DomainError("Rabi scaling fit needs at least 3 points");
  std::vector<double> xs;
  for (const auto& p : points) xs.push_back(p.bm);
  std::sort(xs.begin(), xs.end());
  if (std::adjacent_find(xs.begin(), xs.end()) != xs.end())
    throw DomainError("Rabi scaling fit needs distinct bm values");

  const double n = static_cast<double>(points.size());
  double mx = 0, my = 0;
  for (const auto& p : points) {
    mx += p.bm / n;
    my += p.rabi / n;
  }
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& p : points) {
    sxx += (p.bm - mx) * (p.bm - mx);
    sxy += (p.bm - mx) * (p.rabi - my);
    syy += (p.rabi - my) * (p.rabi - my);
  }
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0;
  for (const auto& p : points) {
    const double r = p.rabi - (fit.intercept + fit.slope * p.bm);
    ss_res += r * r;
  }
  fit.r2 = syy > 0 ? 1.0 - ss_res / syy : 1.0;
  return fit;
}

}  // namespace mollow
