#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cpshrink/estimators.hpp"
#include "cpshrink/exec.hpp"
#include "cpshrink/segmentation.hpp"

namespace cpshrink {

enum class ShrinkagePartition { Unrestricted, Restricted };

struct PipelineOptions {
  int m = 0;
  double min_seg_frac = 0.15;
  SearchMethod restricted_method = SearchMethod::CoordinateRefine;
  int max_iters = 50;
  std::uint64_t exhaustive_budget = 5'000'000;
  OmegaMethod omega{};
  // Partition at which delta^, delta~ and A-hat feed the shrinkage estimators.
  ShrinkagePartition shrinkage_partition = ShrinkagePartition::Unrestricted;
  std::vector<std::string> estimators{"ue", "re", "js", "pp"};
  double pretest_alpha = 0.05;
};

struct PipelineResult {
  SegmentationResult ue_search;
  SegmentationResult re_search;
  std::vector<CoefEstimate> estimates;  // in PipelineOptions::estimators order
  std::optional<double> psi;
  std::optional<PluginMatrices> plugins;
};

/// Break search (UE by DP, RE by the configured method started at the UE
/// breaks), then every requested estimator.
PipelineResult fit_pipeline(const RegressionData& data, const Restriction& restriction, const PipelineOptions& options);

struct SimDesign {
  std::string name;
  int m = 0;
  int q = 1;
  int T = 0;
  std::vector<int> true_breaks;
  VectorXd delta0;
  Restriction restriction{MatrixXd::Identity(1, 1), VectorXd::Zero(1)};
  std::vector<double> sigma2_grid{1.0, 1.5, 2.0};
  VectorXd regressor_mean;
  MatrixXd regressor_cov;
  int n_reps = 1000;
  std::uint64_t seed = 1;
  // Any of "ue", "re", "js", "pp", "pretest"; "ue" is required.
  std::vector<std::string> estimators{"ue", "re", "js", "pp"};
  bool redraw_regressors = true;
  double min_seg_frac = 0.15;
  SearchMethod restricted_method = SearchMethod::CoordinateRefine;
  int max_iters = 50;
  std::uint64_t exhaustive_budget = 5'000'000;
  OmegaMethod omega{};
  ShrinkagePartition shrinkage_partition = ShrinkagePartition::Unrestricted;
  double pretest_alpha = 0.05;
  std::optional<MatrixXd> loss_weight;  // identity when empty

  /// Throws InvalidArgument / DimensionMismatch / KTooSmall.
  void validate() const;
  PipelineOptions pipeline_options() const;
};

/// Reference designs. T picks fixed break dates for T = 40, 100 (case 1)
/// and T = 100, 500 (case 2); other T use evenly spaced breaks.
SimDesign build_case1(int T = 100);
SimDesign build_case2(int T = 100);

struct SigmaSummary {
  double sigma2 = 0.0;
  std::vector<std::string> estimators;
  std::vector<double> risk;  // mean loss over successful replications
  std::vector<double> rmse;  // risk(ue) / risk(estimator)
  int n_fail = 0;
  int n_ok = 0;
  std::map<std::string, int> failure_codes;
};

struct SimResult {
  std::vector<SigmaSummary> summaries;
  // [sigma index][replication]; empty for failed replications.
  std::vector<std::vector<std::vector<int>>> ue_breaks;
  std::vector<std::vector<std::vector<int>>> re_breaks;
  long warnings = 0;
  double seconds = 0.0;
};

/// y_t = delta_p' (1, t, t^1.5, t^2) + u_t with u_t = phi u_{t-1} + N(0, sigma2)
/// innovations; delta0 stacks the (m+1) regimes' 4 coefficients.
RegressionData trend_series(int T, const std::vector<int>& breaks, const VectorXd& delta0, double sigma2,
                            std::uint64_t seed, double phi = 0.0);

/// One replication's data (exposed for tests).
RegressionData simulate_data(const SimDesign& design, std::size_t sigma_index, int replication);

SimResult run_monte_carlo(const SimDesign& design, Exec exec = Exec::Parallel);

struct HistogramRow {
  int break_index;  // 1-based
  int estimated_time;
  int count;
};

/// Break-date frequencies per break index, pooled over the sigma grid.
std::vector<HistogramRow> break_histogram(const std::vector<std::vector<std::vector<int>>>& breaks, int m);

/// Most frequent date for each break index (earliest on ties).
std::vector<int> marginal_modes(const std::vector<HistogramRow>& histogram, int m);

/// Most frequent full break vector (lexicographically smallest on ties).
std::vector<int> joint_mode(const std::vector<std::vector<std::vector<int>>>& breaks);

}  // namespace cpshrink
