#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>

#include "mollow/config.hpp"
#include "mollow/harness.hpp"
#include "mollow/spectral.hpp"

namespace {

using namespace mollow;

void summarize(const RunReport& r, const std::string& out) {
  for (const PointRecord& p : r.points) {
    std::cout << p.label << ": " << p.status;
    if (p.classification) {
      std::cout << " " << to_string(p.classification->structure);
      if (p.classification->structure != MollowStructure::Other) std::cout << " center " << p.classification->center << " Hz";
      if (p.classification->rabi) std::cout << " rabi " << *p.classification->rabi << " Hz";
      if (!p.classification->diagnostics.empty()) std::cout << " (" << p.classification->diagnostics << ")";
    }
    if (!p.error.empty()) std::cout << " [" << p.error << "]";
    std::cout << "\n";
  }
  if (r.angular_fit) std::cout << "sin(2 theta) fit: A = " << r.angular_fit->amplitude << ", r2 = " << r.angular_fit->r2 << "\n";
  if (r.rabi_scaling)
    std::cout << "rabi scaling: slope = " << r.rabi_scaling->fit.slope << " Hz/nT (expected "
              << r.rabi_scaling->expected_slope << "), intercept = " << r.rabi_scaling->fit.intercept
              << " Hz, r2 = " << r.rabi_scaling->fit.r2 << "\n";
  for (const DetuningRow& d : r.detuning) {
    std::cout << "detuning " << d.detuning << " Hz (" << d.detuning_over_rabi << " rabi): second sideband "
              << d.second_sideband;
    if (d.ratio_to_resonant) std::cout << ", ratio " << *d.ratio_to_resonant;
    std::cout << "\n";
  }
  if (!r.aggregate_note.empty()) std::cout << "aggregates skipped: " << r.aggregate_note << "\n";
  std::cout << "report: " << out << "/report.json\n";
}

std::vector<ScalingPoint> read_points(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open file");
  std::vector<ScalingPoint> pts;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string a, b;
    if (!std::getline(row, a, ',') || !std::getline(row, b)) throw ConfigError(path + ":" + std::to_string(number) + ": expected bm_nt,rabi_hz");
    try {
      pts.push_back({std::stod(a), std::stod(b)});
    } catch (const std::exception&) {
      if (pts.empty() && number == 1) continue;  // header
      throw ConfigError(path + ":" + std::to_string(number) + ": expected two numbers");
    }
  }
  return pts;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Driven spin-dynamics simulator and Mollow spectrum analysis"};
  app.set_version_flag("--version", std::string(mollow::kVersion));
  app.require_subcommand(1);

  std::string config, out, points_path;
  double rabi_hz = 0, gamma = 0;

  auto* simulate = app.add_subcommand("simulate", "Run one scenario");
  simulate->add_option("--config", config, "Scenario file")->required();
  simulate->add_option("--out", out, "Output directory")->required();

  auto* sweep = app.add_subcommand("sweep", "Run a parameter sweep");
  sweep->add_option("--config", config, "Sweep file")->required();
  sweep->add_option("--out", out, "Output directory")->required();

  auto* fit = app.add_subcommand("fit-rabi", "Fit rabi frequency against drive amplitude");
  fit->add_option("--points", points_path, "CSV of bm_nt,rabi_hz")->required();

  auto* infer = app.add_subcommand("infer-bm", "Drive amplitude from a rabi frequency");
  infer->add_option("--rabi-hz", rabi_hz, "Rabi frequency (Hz)")->required();
  infer->add_option("--gamma", gamma, "Gyromagnetic ratio (Hz/nT)")->required();

  auto* validate = app.add_subcommand("validate", "Check a configuration file");
  validate->add_option("--config", config, "Scenario or sweep file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*simulate) {
      const Config c = load_config(config);
      if (!std::holds_alternative<Scenario>(c)) throw ConfigError(config + ": kind = sweep; use the sweep command");
      const RunReport r = run_scenario(std::get<Scenario>(c), out);
      summarize(r, out);
      const auto& cls = r.points.front().classification;
      if (cls && cls->structure == MollowStructure::Other)
        throw ClassificationError("classification ambiguous: " + cls->diagnostics);
    } else if (*sweep) {
      const Config c = load_config(config);
      if (!std::holds_alternative<SweepSpec>(c)) throw ConfigError(config + ": kind = scenario; use the simulate command");
      summarize(run_sweep(std::get<SweepSpec>(c), out), out);
    } else if (*fit) {
      const LinearFit f = fit_rabi_scaling(read_points(points_path));
      std::cout << json{{"slope_hz_per_nt", f.slope}, {"intercept_hz", f.intercept}, {"r2", f.r2}}.dump(2) << "\n";
    } else if (*infer) {
      std::printf("%.17g\n", infer_bm(rabi_hz, gamma));
    } else if (*validate) {
      const Config c = load_config(config);
      if (const auto* s = std::get_if<Scenario>(&c))
        std::cout << "ok: scenario " << s->name << " (hash " << s->config_hash << ")\n";
      else {
        const auto& w = std::get<SweepSpec>(c);
        std::cout << "ok: sweep " << w.base.name << " over " << to_string(w.parameter) << ", " << w.values.size()
                  << " points (hash " << w.base.config_hash << ")\n";
      }
    }
  } catch (const mollow::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
