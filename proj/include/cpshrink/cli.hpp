#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cpshrink/simulation.hpp"

namespace cpshrink::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitVerification = 4;

struct DataSpec {
  std::string path;
  std::string basis = "columns";  // or "gdp-trend": regressors (1, t, t^1.5, t^2)
  std::string series;             // label in outputs; file stem when empty
  int time_offset = 0;            // added to break dates when reporting

  friend bool operator==(const DataSpec&, const DataSpec&) = default;
};

/// One block of stacked restriction rows: a named pattern or explicit R, r.
struct RestrictionEntry {
  std::string pattern;  // linear-trend | equal-segments | zero-segment | zero-coef | matrix
  int i = 0, j = 0;
  int segment = 0, coef = 0;
  std::vector<std::vector<double>> R;
  std::vector<double> r;

  friend bool operator==(const RestrictionEntry&, const RestrictionEntry&) = default;
};

struct SimulateSpec {
  int sim_case = 1;  // 1, 2, or 0 for a custom design
  int T = 100;
  int reps = 1000;
  std::vector<double> sigma2{1.0, 1.5, 2.0};
  bool redraw_regressors = true;
  double pretest_alpha = 0.05;
  // custom design only
  int q = 0;
  std::vector<int> true_breaks;
  std::vector<double> delta0;

  friend bool operator==(const SimulateSpec&, const SimulateSpec&) = default;
};

struct RiskSpec {
  int p = 6;
  int k = 4;
  bool omega_proportional = false;  // Omega = Gamma, so L12 = 0
  std::vector<std::vector<double>> gamma, omega, R, w_star;
  std::vector<double> mu;
  double grid_max = 20.0;
  int grid_points = 41;

  friend bool operator==(const RiskSpec&, const RiskSpec&) = default;
};

struct VerifySpec {
  std::int64_t n_samples = 1'000'000;
  int setups = 5;
  int p = 6;
  int k = 4;

  friend bool operator==(const VerifySpec&, const VerifySpec&) = default;
};

struct RunConfig {
  DataSpec data;
  int m = 1;
  double min_seg_frac = 0.15;
  std::vector<RestrictionEntry> restriction;
  std::vector<std::string> estimators{"ue", "re", "js", "pp"};
  std::string omega = "hc0";
  int hac_bandwidth = -1;
  std::string restricted_search = "refine";
  int max_iters = 50;
  std::uint64_t exhaustive_budget = 5'000'000;
  std::string shrinkage_partition = "ue";
  int bootstrap_b = 500;
  SimulateSpec simulate;
  RiskSpec risk;
  VerifySpec verify;
  std::uint64_t seed = 1;
  std::string out = "out";

  friend bool operator==(const RunConfig&, const RunConfig&) = default;

  /// Throws ConfigError on unknown keys, wrong types or invalid values.
  static RunConfig parse(const std::string& json_text);
  static RunConfig load(const std::filesystem::path& path);
  /// Canonical JSON with every field present.
  std::string dump() const;
  void validate() const;

  PipelineOptions pipeline_options() const;
  OmegaMethod omega_method() const;
};

/// Stacks the entries for a model with m breaks and q regressors.
Restriction build_restriction(const std::vector<RestrictionEntry>& entries, int m, int q);

RegressionData load_data(const DataSpec& spec);

/// "%.17g"; "nan" / "inf" / "-inf" for non-finite values.
std::string format_number(double x);

/// Writes through a temporary file in the same directory, then renames.
void write_atomic(const std::filesystem::path& path, const std::string& contents);

// Subcommands. Each writes its CSVs and manifest.json into config.out and
// returns an exit code; errors propagate as cpshrink::Error.
int cmd_fit(const RunConfig& config);
int cmd_bootstrap(const RunConfig& config);
int cmd_simulate(const RunConfig& config);
int cmd_risk(const RunConfig& config);
int cmd_verify(const RunConfig& config);

/// Exit code for an error: 2 for configuration/input problems, 3 otherwise.
int exit_code_for(ErrorCode code);

}  // namespace cpshrink::cli
