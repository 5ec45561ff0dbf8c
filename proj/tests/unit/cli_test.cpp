#include <gtest/gtest.h>

#include <sstream>

#include "seatsim/runner.hpp"

namespace seatsim::cli {
namespace {

// Short runs: 2 s settling, 6 s excited, 2 s windows.
std::string short_config(const std::string& variant, const std::string& extra = "") {
  return "scenario: short\n"
         "contact: {variant: " + variant + "}\n"
         "excitation: {kind: band-limited-noise, axis: vertical, f_low: 0.5, f_high: 12, rms_target: 1.0}\n"
         "analysis: {band_low: 1, band_high: 12, window_s: 2, overlap: 0.5}\n"
         "run: {duration_s: 8, dt_s: 0.001, settle_s: 2, seed: 3}\n" + extra;
}

class Cli : public ::testing::Test {
 protected:
  fs::path dir;
  Overrides o;
  std::ostringstream log, err;

  void SetUp() override {
    dir = fs::temp_directory_path() / "seatsim_cli_test" /
          ::testing::UnitTest::GetInstance()->current_test_info()->name();
    fs::remove_all(dir);
    fs::create_directories(dir / "configs");
    o.out = dir / "out";
  }
  fs::path put(const std::string& name, const std::string& text) {
    const fs::path p = dir / "configs" / name;
    write_text(p, text);
    return p;
  }
  fs::path run_dir(const std::string& variant) const { return dir / "out" / "short" / variant / "vertical"; }
};

TEST_F(Cli, SimulateWritesEveryListedFile) {
  ASSERT_EQ(cmd_simulate(put("a.yaml", short_config("MbShear")), o, log, err), kExitOk) << err.str();
  const auto m = nlohmann::json::parse(read_text(run_dir("MbShear") / "manifest.json"));
  EXPECT_GT(m.at("wall_clock_s").get<double>(), 0.0);
  EXPECT_EQ(m.at("config_hash").get<std::string>().size(), 16u);
  bool has_plot = false;
  for (const auto& f : m.at("files")) {
    const fs::path p = run_dir("MbShear") / f.at("path").get<std::string>();
    EXPECT_TRUE(fs::exists(p)) << p;
    EXPECT_EQ(fs::file_size(p), f.at("bytes").get<std::uintmax_t>()) << p;
    has_plot = has_plot || p.extension() == ".svg";
  }
  EXPECT_TRUE(has_plot);
  // 8 s at 1 ms plus the header row.
  std::istringstream traj(read_text(run_dir("MbShear") / "trajectory.csv"));
  std::string line;
  int rows = 0;
  while (std::getline(traj, line))
    if (!line.empty() && line[0] != '#') ++rows;
  EXPECT_EQ(rows, 8001 + 1);
}

TEST_F(Cli, ZeroTimeStepIsAConfigErrorNamingTheKey) {
  const auto p = put("a.yaml", "run: {dt_s: 0}\n");
  EXPECT_EQ(cmd_simulate(p, o, log, err), kExitConfig);
  EXPECT_NE(err.str().find("run.dt_s"), std::string::npos) << err.str();
}

TEST_F(Cli, RerunIsByteIdentical) {
  const auto p = put("a.yaml", short_config("MbFriction"));
  ASSERT_EQ(cmd_simulate(p, o, log, err), kExitOk);
  const std::string t1 = read_text(run_dir("MbFriction") / "trajectory.csv");
  const std::string h1 = read_text(run_dir("MbFriction") / "transmissibility.csv");
  ASSERT_EQ(cmd_simulate(p, o, log, err), kExitOk);
  EXPECT_EQ(t1, read_text(run_dir("MbFriction") / "trajectory.csv"));
  EXPECT_EQ(h1, read_text(run_dir("MbFriction") / "transmissibility.csv"));
}

TEST_F(Cli, SeedOverrideChangesTheExcitation) {
  const auto p = put("a.yaml", short_config("MbFriction"));
  ASSERT_EQ(cmd_simulate(p, o, log, err), kExitOk);
  const std::string t1 = read_text(run_dir("MbFriction") / "trajectory.csv");
  Overrides seeded = o;
  seeded.seed = 4;
  ASSERT_EQ(cmd_simulate(p, seeded, log, err), kExitOk);
  EXPECT_NE(t1, read_text(run_dir("MbFriction") / "trajectory.csv"));
}

TEST_F(Cli, CompareNeedsCompletedRuns) {
  put("a.yaml", short_config("MbShear"));
  put("b.yaml", short_config("MbFriction"));
  EXPECT_EQ(cmd_compare(dir / "configs", o, log, err), kExitMissingRun);
  EXPECT_NE(err.str().find("missing run"), std::string::npos);
}

TEST_F(Cli, ComparingARunWithItsTwinGivesZeroDifferences) {
  put("a.yaml", short_config("MbShear"));
  put("b.yaml", short_config("MbShear"));
  ASSERT_EQ(cmd_simulate(dir / "configs", o, log, err), kExitOk) << err.str();
  ASSERT_EQ(cmd_compare(dir / "configs", o, log, err), kExitOk) << err.str();
  std::istringstream metrics(read_text(dir / "out" / "short" / "comparison" / "vertical" / "metrics.csv"));
  std::string line;
  std::getline(metrics, line);
  int rows = 0;
  while (std::getline(metrics, line)) {
    ++rows;
    std::istringstream cells(line);
    std::string cell;
    for (int k = 0; k < 3; ++k) std::getline(cells, cell, ',');
    while (std::getline(cells, cell, ',')) EXPECT_EQ(std::stod(cell), 0.0) << line;
  }
  EXPECT_GT(rows, 0);
}

TEST_F(Cli, CompareReportsTheHeadChannelAndRuntimeRatio) {
  put("a.yaml", short_config("MbShear"));
  put("b.yaml", short_config("MbFriction"));
  ASSERT_EQ(cmd_simulate(dir / "configs", o, log, err), kExitOk) << err.str();
  ASSERT_EQ(cmd_compare(dir / "configs", o, log, err), kExitOk) << err.str();
  const fs::path cmp = dir / "out" / "short" / "comparison";
  EXPECT_NE(read_text(cmp / "vertical" / "metrics.csv").find("MbFriction,MbShear,head_az"), std::string::npos);
  EXPECT_TRUE(fs::exists(cmp / "vertical" / "runtime.csv"));
  EXPECT_TRUE(fs::exists(cmp / "vertical" / "plots" / "head_az.svg"));
  EXPECT_TRUE(fs::exists(cmp / "report.txt"));
}

TEST_F(Cli, CalibrationAgainstASelfGeneratedReferenceLowersTheCost) {
  ASSERT_EQ(cmd_simulate(put("ref.yaml", short_config("MbFriction")), o, log, err), kExitOk);
  const auto p = put("cal.yaml", short_config("MbFriction",
                                              "body: {gains: {neck: {stiffness: 90, damping: 3}}}\n"
                                              "calibration: {groups: [neck], budget: 12, restarts: 0}\n"));
  ASSERT_EQ(cmd_calibrate(p, run_dir("MbFriction") / "transmissibility.csv", o, log, err), kExitOk) << err.str();
  const fs::path cal = dir / "out" / "short" / "MbFriction" / "calibration";
  const auto m = nlohmann::json::parse(read_text(cal / "manifest.json"));
  EXPECT_LT(m.at("best_cost").get<double>(), m.at("initial_cost").get<double>());
  EXPECT_EQ(m.at("evaluations").get<int>(), 12);
  // The calibrated file is a plain scenario again.
  const ScenarioConfig out = load_config(cal / "calibrated.yaml");
  EXPECT_FALSE(out.calibration.has_value());
  EXPECT_NE(out.body.gains.at("neck").stiffness, 90.0);
}

TEST_F(Cli, CalibrationBudgetZeroIsAConfigError) {
  ASSERT_EQ(cmd_simulate(put("ref.yaml", short_config("MbFriction")), o, log, err), kExitOk);
  const auto p = put("cal.yaml", short_config("MbFriction", "calibration: {budget: 0}\n"));
  EXPECT_EQ(cmd_calibrate(p, run_dir("MbFriction") / "transmissibility.csv", o, log, err), kExitConfig);
  EXPECT_NE(err.str().find("calibration.budget"), std::string::npos) << err.str();
}

TEST_F(Cli, CalibrationBandMismatchIsAConfigError) {
  ASSERT_EQ(cmd_simulate(put("ref.yaml", short_config("MbFriction")), o, log, err), kExitOk);
  std::string text = short_config("MbFriction", "calibration: {groups: [neck], budget: 12}\n");
  text.replace(text.find("band_low: 1"), 11, "band_low: 2");
  EXPECT_EQ(cmd_calibrate(put("cal.yaml", text), run_dir("MbFriction") / "transmissibility.csv", o, log, err),
            kExitConfig);
}

TEST_F(Cli, ValidateOutputRoundTrips) {
  const auto p = put("a.yaml", short_config("FoamFE"));
  Overrides to_file = o;
  to_file.out = dir / "expanded.yaml";
  ASSERT_EQ(cmd_validate(p, to_file, log, err), kExitOk) << err.str();
  const ScenarioConfig a = load_config(p);
  const ScenarioConfig b = load_config(dir / "expanded.yaml");
  EXPECT_TRUE(same_body(a.body.build(), b.body.build()));
  EXPECT_TRUE(b.body.model.has_value());
  EXPECT_EQ(a.contact, b.contact);
  EXPECT_EQ(a.run, b.run);
}

}  // namespace
}  // namespace seatsim::cli
