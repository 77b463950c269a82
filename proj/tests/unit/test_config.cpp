#include <gtest/gtest.h>

#include <filesystem>
#include <string>

#include "mollow/config.hpp"

using namespace mollow;

namespace {

const std::string kBase =
    "kind = scenario\n"
    "name = base\n"
    "field.b0_nt = 50000\n"
    "field.bm_nt = 3000\n"
    "field.pump_rate = 8\n"
    "field.gamma1 = 0.2\n"
    "field.gamma2 = 1.6\n"
    "mec.gamma_e1 = 2.4\n"
    "mec.gamma_e2 = 1\n"
    "mec.meta_gamma = 2.4\n"
    "sim.duration_s = 2\n"
    "sim.dt_s = 1e-5\n"
    "probe.line = C9\n"
    "probe.polarization = linear\n"
    "probe.theta_deg = 45\n";

std::string with(const std::string& key, const std::string& value) {
  std::string out;
  std::size_t pos = 0;
  bool replaced = false;
  while (pos < kBase.size()) {
    const auto end = kBase.find('\n', pos);
    const std::string line = kBase.substr(pos, end - pos);
    if (line.rfind(key + " =", 0) == 0) {
      if (!value.empty()) out += key + " = " + value + "\n";
      replaced = true;
    } else {
      out += line + "\n";
    }
    pos = end + 1;
  }
  if (!replaced) out += key + " = " + value + "\n";
  return out;
}

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "test.cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

Scenario scenario(const std::string& text) { return std::get<Scenario>(parse_config(text, "test.cfg")); }

std::filesystem::path shipped(const std::string& name) { return std::filesystem::path(MOLLOW_SCENARIO_DIR) / name; }

}  // namespace

TEST(Config, ShippedScenarioLoads) {
  const Config c = load_config(shipped("fig3_b2.cfg").string());
  ASSERT_TRUE(std::holds_alternative<Scenario>(c));
  const Scenario& s = std::get<Scenario>(c);
  EXPECT_EQ(s.name, "fig3_b2");
  EXPECT_EQ(s.probe.line, ProbeLine::C9);
  EXPECT_EQ(s.probe.polarization, Polarization::LinearTheta);
  EXPECT_EQ(s.probe.theta_deg, 45);
  EXPECT_EQ(s.meta.label, ManifoldLabel::MetaF32);
  EXPECT_NEAR(s.larmor(), 1600, 1e-9);
  EXPECT_NEAR(s.rabi(), 48, 1e-9);
  EXPECT_NEAR(s.env.omega_m, 1600, 1e-9);
  EXPECT_EQ(s.config_hash.size(), 16u);
}

TEST(Config, AllShippedConfigsValidate) {
  int count = 0;
  for (const auto& entry : std::filesystem::directory_iterator(MOLLOW_SCENARIO_DIR)) {
    if (entry.path().extension() != ".cfg") continue;
    ++count;
    EXPECT_NO_THROW(load_config(entry.path().string())) << entry.path();
  }
  EXPECT_EQ(count, 8);
  const auto sweep = std::get<SweepSpec>(load_config(shipped("fig4_sweep.cfg").string()));
  EXPECT_EQ(sweep.parameter, SweepParameter::ThetaAngle);
  EXPECT_EQ(sweep.values.size(), 19u);
  EXPECT_EQ(sweep.at(30).probe.theta_deg, 30);
}

TEST(Config, Defaults) {
  const Scenario s = scenario(with("probe.line", "D0"));
  EXPECT_EQ(s.meta.label, ManifoldLabel::Meta4He);
  EXPECT_EQ(s.analysis.window, Window::Hann);
  EXPECT_EQ(s.analysis.zero_pad, 4);
  EXPECT_EQ(s.output.trajectory, TrajectoryExport::None);
  EXPECT_EQ(s.tilt_deg, 0);
  EXPECT_EQ(scenario(with("probe.line", "C8")).meta.label, ManifoldLabel::MetaF12);
}

TEST(Config, NegativeRateNamesField) {
  const std::string msg = error_of(with("field.gamma2", "-1"));
  EXPECT_NE(msg.find("field.gamma2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("nonnegative"), std::string::npos) << msg;
}

TEST(Config, CoarseStepReportsGuard) {
  const std::string msg = error_of(with("sim.dt_s", "1e-4"));
  EXPECT_NE(msg.find("sim.dt_s"), std::string::npos) << msg;
  EXPECT_NE(msg.find("1/(50*max(larmor, omega_m))"), std::string::npos) << msg;
}

TEST(Config, ShortRunCannotResolveSidebands) {
  const std::string msg = error_of(with("sim.duration_s", "0.2"));
  EXPECT_NE(msg.find("duration * rabi"), std::string::npos) << msg;
  EXPECT_NO_THROW(scenario(with("field.bm_nt", "0") + "initial.tilt_deg = 90\n"));
}

TEST(Config, UnknownAndDuplicateKeys) {
  std::string msg = error_of(kBase + "field.b1_nt = 3\n");
  EXPECT_NE(msg.find("unknown key 'field.b1_nt'"), std::string::npos) << msg;
  EXPECT_NE(msg.find("test.cfg:16"), std::string::npos) << msg;
  msg = error_of(kBase + "sim.dt_s = 1e-5\n");
  EXPECT_NE(msg.find("duplicate key 'sim.dt_s'"), std::string::npos) << msg;
  EXPECT_NE(msg.find("line 12"), std::string::npos) << msg;
}

TEST(Config, SyntaxErrorsCarryPosition) {
  std::string msg = error_of("kind = scenario\n  field.b0_nt 5\n");
  EXPECT_NE(msg.find("test.cfg:2:3"), std::string::npos) << msg;
  msg = error_of(with("field.b0_nt", "5e4x"));
  EXPECT_NE(msg.find("field.b0_nt"), std::string::npos) << msg;
  EXPECT_NE(msg.find("test.cfg:3:"), std::string::npos) << msg;
  msg = error_of(with("probe.line", "C7"));
  EXPECT_NE(msg.find("C7"), std::string::npos) << msg;
  msg = error_of(with("kind", "banana"));
  EXPECT_NE(msg.find("kind"), std::string::npos) << msg;
  msg = error_of("kind = scenario\nfield.b0_nt =\n");
  EXPECT_NE(msg.find("missing value"), std::string::npos) << msg;
}

TEST(Config, ProbeAngleRange) {
  EXPECT_NE(error_of(with("probe.theta_deg", "190")).find("probe.theta_deg"), std::string::npos);
  EXPECT_NO_THROW(scenario(with("probe.theta_deg", "180")));
}

TEST(Config, MetaManifoldMustMatchLine) {
  const std::string msg = error_of(kBase + "manifold.meta = MetaF12\n");
  EXPECT_NE(msg.find("manifold.meta"), std::string::npos) << msg;
}

TEST(Config, SweepValidation) {
  const std::string sweep = with("kind", "sweep") + "sweep.parameter = bm_amplitude\n";
  EXPECT_NO_THROW(parse_config(sweep + "sweep.values = 1000, 2000, 3000\n"));
  EXPECT_NO_THROW(parse_config(sweep + "sweep.values = 3000, 2000, 1000\n"));
  std::string msg = error_of(sweep + "sweep.values = 1000, 3000, 2000\n");
  EXPECT_NE(msg.find("monotone"), std::string::npos) << msg;
  msg = error_of(sweep + "sweep.values = 1000, 100\n");
  EXPECT_NE(msg.find("sweep.values[1]"), std::string::npos) << msg;
  msg = error_of(with("kind", "sweep") + "sweep.values = 1, 2\n");
  EXPECT_NE(msg.find("sweep.parameter"), std::string::npos) << msg;
  msg = error_of(with("probe.polarization", "circular") + "sweep.parameter = bm_amplitude\nsweep.values = 1000, 2000\n");
  EXPECT_NE(msg.find("require kind = sweep"), std::string::npos) << msg;
  std::string circular = with("probe.polarization", "circular");
  circular.replace(circular.find("kind = scenario"), 15, "kind = sweep");
  msg = error_of(circular + "sweep.parameter = theta_angle\nsweep.values = 0, 10\n");
  EXPECT_NE(msg.find("theta_angle requires"), std::string::npos) << msg;
  EXPECT_TRUE(error_of(with("kind", "sweep") + "sweep.parameter = theta_angle\nsweep.values = 0, 10\n").empty());
}

TEST(Config, HashIgnoresOrderAndComments) {
  const std::string reordered = "# comment\nprobe.theta_deg = 45   # angle\n" + with("probe.theta_deg", "");
  EXPECT_EQ(scenario(kBase).config_hash, scenario(reordered).config_hash);
  EXPECT_NE(scenario(kBase).config_hash, scenario(with("probe.theta_deg", "46")).config_hash);
}

TEST(Config, MissingFile) {
  EXPECT_THROW(load_config("/nonexistent/mollow.cfg"), ConfigError);
  try {
    load_config("/nonexistent/mollow.cfg");
  } catch (const Error& e) {
    EXPECT_EQ(e.exit_code(), 2);
  }
}
