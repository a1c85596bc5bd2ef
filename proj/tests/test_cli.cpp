#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cpshrink/cli.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace cpshrink;
using namespace cpshrink::cli;
namespace ts = testing_support;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "cpshrink_cli_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

// GDP-shaped series with one break and a true linear-trend restriction.
fs::path gdp_like(const fs::path& dir, double sigma2) {
  VectorXd d0(8);
  d0 << 10, 0.02, 0, 0, 9.0, 0.035, 0, 0;
  const fs::path p = dir / "gdp.csv";
  write_regression_csv(p, trend_series(120, {50}, d0, sigma2, 17));
  return p;
}

RunConfig fit_config(const fs::path& data, const fs::path& out) {
  RunConfig c;
  c.data.path = data.string();
  c.data.basis = "gdp-trend";
  c.data.series = "synthetic";
  c.m = 1;
  c.restriction = {RestrictionEntry{"linear-trend"}};
  c.out = out.string();
  return c;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config round trip") {
  const std::string text = R"({
    "data": {"path": "x.csv", "basis": "gdp-trend", "series": "uk", "time_offset": 1869},
    "model": {"m": 2, "min_seg_frac": 0.2},
    "restriction": [{"pattern": "equal-segments", "i": 1, "j": 3},
                    {"pattern": "matrix", "R": [[1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]], "r": [0.5]}],
    "estimators": ["ue", "re", "pp"],
    "omega": {"method": "hac", "bandwidth": 3},
    "search": {"restricted": "exhaustive", "max_iters": 7, "exhaustive_budget": 1000},
    "shrinkage_partition": "re",
    "bootstrap": {"B": 50},
    "simulate": {"case": 2, "T": 100, "reps": 10, "sigma2": [1.25]},
    "risk": {"p": 5, "k": 3, "omega_proportional": true, "grid_points": 11},
    "verify": {"n_samples": 20000, "setups": 2},
    "seed": 99,
    "out": "somewhere"
  })";
  const RunConfig a = RunConfig::parse(text);
  CHECK(a.m == 2);
  CHECK(a.data.time_offset == 1869);
  CHECK(a.restriction.size() == 2);
  CHECK(a.restriction[1].r == std::vector<double>{0.5});
  CHECK(a.hac_bandwidth == 3);
  CHECK(a.seed == 99);
  const RunConfig b = RunConfig::parse(a.dump());
  CHECK(a == b);
  CHECK(a.dump() == b.dump());
  // defaults survive the trip too
  const RunConfig d = RunConfig::parse("{}");
  CHECK(d == RunConfig{});
  CHECK(RunConfig::parse(d.dump()) == d);
}

TEST_CASE("config rejects unknown keys and bad values") {
  auto code = [](const std::string& t) { return ts::error_code([&] { RunConfig::parse(t); }); };
  CHECK(code(R"({"sede": 1})") == ErrorCode::ConfigError);
  CHECK(code(R"({"model": {"m": 1, "tau": 0.1}})") == ErrorCode::ConfigError);
  CHECK(code(R"({"restriction": [{"pattern": "zero-segment", "i": 1, "j": 2}]})") == ErrorCode::ConfigError);
  CHECK(code(R"({"model": {"m": "one"}})") == ErrorCode::ConfigError);
  CHECK(code(R"({"estimators": ["ue", "ridge"]})") == ErrorCode::ConfigError);
  CHECK(code(R"({"omega": {"method": "hc3"}})") == ErrorCode::ConfigError);
  CHECK(code(R"({"model": {"min_seg_frac": 1.5}})") == ErrorCode::ConfigError);
  CHECK(code("{not json") == ErrorCode::ConfigError);
  CHECK(code("[1, 2]") == ErrorCode::ConfigError);
  CHECK(ts::error_code([] { RunConfig::load("/nonexistent/cfg.json"); }).has_value());
}

TEST_CASE("restriction building") {
  const auto r = build_restriction({RestrictionEntry{"linear-trend"}, RestrictionEntry{"zero-coef", 0, 0, 2, 1}}, 1, 4);
  CHECK(r.k() == 5);
  CHECK(r.R()(4, 4) == 1.0);
  CHECK(ts::error_code([] { build_restriction({}, 1, 4); }) == ErrorCode::ConfigError);
  RestrictionEntry bad{"matrix"};
  bad.R = {{1, 0}};
  bad.r = {0, 1};
  CHECK(ts::error_code([&] { build_restriction({bad}, 0, 2); }) == ErrorCode::ConfigError);
}

TEST_CASE("number formatting and exit codes") {
  CHECK(format_number(0.0) == "0");
  CHECK(format_number(-0.0) == "0");
  CHECK(format_number(0.1) == "0.10000000000000001");
  CHECK(format_number(std::nan("")) == "nan");
  CHECK(format_number(-INFINITY) == "-inf");
  CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(exit_code_for(ErrorCode::ConfigError) == kExitConfig);
  CHECK(exit_code_for(ErrorCode::InvalidData) == kExitConfig);
  CHECK(exit_code_for(ErrorCode::SingularConstraintGram) == kExitNumerical);
  CHECK(exit_code_for(ErrorCode::NonConvergence) == kExitNumerical);
}

TEST_CASE("atomic writes leave no temporary file") {
  const auto dir = scratch("atomic");
  write_atomic(dir / "a.csv", "x\n1\n");
  write_atomic(dir / "a.csv", "x\n2\n");
  CHECK(slurp(dir / "a.csv") == "x\n2\n");
  CHECK_FALSE(fs::exists(dir / "a.csv.tmp"));
}

TEST_CASE("fit on a GDP-like series") {
  const auto dir = scratch("fit");
  const auto c = fit_config(gdp_like(dir, 0.0025), dir / "out");
  CHECK(cmd_fit(c) == kExitOk);
  const auto summary = read_csv(dir / "out" / "fit_summary.csv");
  REQUIRE(summary.size() == 2);
  CHECK(summary[0][0] == "series");
  CHECK(summary[0][5] == "ue_breaks");
  const int ue_break = std::stoi(summary[1][5]);
  const int re_break = std::stoi(summary[1][6]);
  CHECK(std::abs(ue_break - 50) <= 8);
  CHECK(std::abs(re_break - 50) <= 8);

  // restricted coefficients on t^1.5 and t^2 are exactly zero
  for (const auto& row : read_csv(dir / "out" / "fit.csv")) {
    if (row[0] == "re" && (row[2] == "3" || row[2] == "4")) CHECK(std::abs(std::stod(row[3])) <= 1e-12);
  }
  const auto manifest = nlohmann::json::parse(slurp(dir / "out" / "manifest.json"));
  CHECK(manifest["command"] == "fit");
  CHECK(manifest["config"]["seed"] == 1);
}

TEST_CASE("fit without breaks") {
  const auto dir = scratch("fit0");
  auto c = fit_config(gdp_like(dir, 0.0025), dir / "out");
  c.m = 0;
  // k = 2 here, too small for the shrinkage estimators
  CHECK(ts::error_code([&] { cmd_fit(c); }) == ErrorCode::KTooSmall);
  c.estimators = {"ue", "re"};
  CHECK(cmd_fit(c) == kExitOk);
  const auto summary = read_csv(dir / "out" / "fit_summary.csv");
  REQUIRE(summary.size() == 2);
  for (const auto& h : summary[0]) CHECK(h.find("breaks") == std::string::npos);
}

TEST_CASE("bootstrap with zero residual noise") {
  const auto dir = scratch("boot0");
  auto c = fit_config(gdp_like(dir, 0.0), dir / "out");
  c.bootstrap_b = 1;
  CHECK(cmd_bootstrap(c) == kExitOk);
  const auto rows = read_csv(dir / "out" / "bootstrap.csv");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0][3] == "mse_ue");
  for (int col = 3; col <= 6; ++col) CHECK(std::stod(rows[1][col]) <= 1e-12);
}

TEST_CASE("bootstrap is deterministic for a seed") {
  const auto dir = scratch("boot");
  auto c = fit_config(gdp_like(dir, 0.0025), dir / "a");
  c.bootstrap_b = 20;
  CHECK(cmd_bootstrap(c) == kExitOk);
  c.out = (dir / "b").string();
  CHECK(cmd_bootstrap(c) == kExitOk);
  CHECK(slurp(dir / "a" / "bootstrap.csv") == slurp(dir / "b" / "bootstrap.csv"));
  c.out = (dir / "c").string();
  c.seed = 2;
  CHECK(cmd_bootstrap(c) == kExitOk);
  CHECK(slurp(dir / "a" / "bootstrap.csv") != slurp(dir / "c" / "bootstrap.csv"));
}

TEST_CASE("risk output ordering with proportional covariances") {
  const auto dir = scratch("risk");
  RunConfig c;
  c.risk.omega_proportional = true;
  c.out = (dir / "out").string();
  CHECK(cmd_risk(c) == kExitOk);
  const auto rows = read_csv(dir / "out" / "adr.csv");
  REQUIRE(rows.size() == 42);
  CHECK(rows[0] == std::vector<std::string>{"delta", "adr_ue", "adr_re", "adr_js", "adr_pp", "dominance_holds"});
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double ue = std::stod(rows[i][1]), js = std::stod(rows[i][3]), pp = std::stod(rows[i][4]);
    CHECK(pp <= js + 1e-9);
    CHECK(js <= ue + 1e-9);
  }
  CHECK(fs::exists(dir / "out" / "dominance.csv"));
}

TEST_CASE("simulate writes the documented tables") {
  const auto dir = scratch("sim");
  RunConfig c;
  c.simulate.reps = 10;
  c.simulate.sigma2 = {1.0};
  c.out = (dir / "out").string();
  CHECK(cmd_simulate(c) == kExitOk);
  const auto rmse = read_csv(dir / "out" / "rmse.csv");
  CHECK(rmse[0] == std::vector<std::string>{"sigma2", "estimator", "rmse", "n_fail"});
  CHECK(rmse.size() == 5);
  CHECK(rmse[1][2] == "1");
  const auto hist = read_csv(dir / "out" / "breaks_hist_ue.csv");
  CHECK(hist[0] == std::vector<std::string>{"case", "T", "break_index", "estimated_time", "count"});
  const auto manifest = nlohmann::json::parse(slurp(dir / "out" / "manifest.json"));
  CHECK(manifest["restricted_search"].get<std::string>().find("coordinate-refine") != std::string::npos);
}

TEST_CASE("verify flags its negative controls") {
  const auto dir = scratch("verify");
  RunConfig c;
  c.verify.n_samples = 100'000;
  c.verify.setups = 2;
  c.seed = 7;
  c.out = (dir / "out").string();
  CHECK(cmd_verify(c) == kExitOk);
  const auto rows = read_csv(dir / "out" / "verify.csv");
  int positives = 0, negatives = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i][6] == "true") {
      ++positives;
      CHECK(rows[i][7] == "true");
    } else {
      ++negatives;
      CHECK(rows[i][7] == "false");
    }
  }
  CHECK(positives == 2 * 3 * 4);
  CHECK(negatives == 2);
}

TEST_CASE("input errors surface as config-class codes") {
  const auto dir = scratch("errs");
  auto c = fit_config(dir / "missing.csv", dir / "out");
  const auto code = ts::error_code([&] { cmd_fit(c); });
  REQUIRE(code.has_value());
  CHECK(exit_code_for(*code) == kExitConfig);
  std::ofstream(dir / "short.csv") << "t,y\n1,1\n2,2\n3,3\n";
  c = fit_config(dir / "short.csv", dir / "out");
  const auto code2 = ts::error_code([&] { cmd_fit(c); });
  REQUIRE(code2.has_value());
  CHECK(exit_code_for(*code2) == kExitConfig);
}

}
