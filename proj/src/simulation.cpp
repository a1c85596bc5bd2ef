#include "cpshrink/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <random>

#include "cpshrink/rng.hpp"

namespace cpshrink {

namespace {

MatrixXd toeplitz_half(int q) {
  MatrixXd s(q, q);
  for (int a = 0; a < q; ++a)
    for (int b = 0; b < q; ++b) s(a, b) = std::pow(0.5, std::abs(a - b));
  return s;
}

std::vector<int> even_breaks(int T, int m) {
  std::vector<int> b;
  for (int i = 1; i <= m; ++i) b.push_back(static_cast<int>(static_cast<long long>(i) * T / (m + 1)));
  return b;
}

MatrixXd draw_regressors(const SimDesign& d, Engine& eng, std::normal_distribution<double>& nd) {
  const MatrixXd L = d.regressor_cov.llt().matrixL();
  MatrixXd z(d.T, d.q);
  VectorXd e(d.q);
  for (int t = 0; t < d.T; ++t) {
    for (int j = 0; j < d.q; ++j) e(j) = nd(eng);
    z.row(t) = (d.regressor_mean + L * e).transpose();
  }
  return z;
}

bool has(const std::vector<std::string>& v, const std::string& s) { return std::find(v.begin(), v.end(), s) != v.end(); }

}  // namespace

void SimDesign::validate() const {
  if (q < 1 || m < 0 || T < 2) throw Error(ErrorCode::InvalidArgument, "design needs q >= 1, m >= 0, T >= 2");
  Partition(true_breaks, T);  // validates the break dates
  if (static_cast<int>(true_breaks.size()) != m) throw Error(ErrorCode::DimensionMismatch, "true_breaks must have m entries");
  if (delta0.size() != (m + 1) * q) throw Error(ErrorCode::DimensionMismatch, "delta0 must have (m+1)q entries");
  if (restriction.cols() != (m + 1) * q) throw Error(ErrorCode::DimensionMismatch, "restriction must have (m+1)q columns");
  if (regressor_mean.size() != q || regressor_cov.rows() != q || regressor_cov.cols() != q) {
    throw Error(ErrorCode::DimensionMismatch, "regressor law must be q-dimensional");
  }
  if (regressor_cov.llt().info() != Eigen::Success) throw Error(ErrorCode::InvalidArgument, "regressor covariance must be PD");
  if (n_reps < 1) throw Error(ErrorCode::InvalidArgument, "n_reps must be >= 1");
  if (sigma2_grid.empty()) throw Error(ErrorCode::InvalidArgument, "sigma2 grid is empty");
  for (double s : sigma2_grid) {
    if (!(s > 0.0)) throw Error(ErrorCode::InvalidArgument, "error variances must be positive");
  }
  if (!has(estimators, "ue")) throw Error(ErrorCode::InvalidArgument, "estimators must include ue");
  for (const auto& e : estimators) {
    if (e != "ue" && e != "re" && e != "js" && e != "pp" && e != "pretest") {
      throw Error(ErrorCode::InvalidArgument, "unknown estimator '" + e + "'");
    }
  }
  if ((has(estimators, "js") || has(estimators, "pp")) && restriction.k() <= 2) {
    throw Error(ErrorCode::KTooSmall, "James-Stein estimators need k > 2");
  }
  if (loss_weight && (loss_weight->rows() != delta0.size() || loss_weight->cols() != delta0.size())) {
    throw Error(ErrorCode::DimensionMismatch, "loss weight must be (m+1)q square");
  }
  SearchConfig probe;
  probe.m = m;
  probe.min_seg_frac = min_seg_frac;
  const int h = min_segment_length(probe, T, q);
  if ((m + 1) * h > T) throw Error(ErrorCode::InfeasibleConfig, "minimum segment length leaves no feasible partition");
  if (restricted_method == SearchMethod::DynamicProgramming) {
    throw Error(ErrorCode::InvalidArgument, "restricted search must be exhaustive or coordinate-refine");
  }
}

PipelineOptions SimDesign::pipeline_options() const {
  PipelineOptions o;
  o.m = m;
  o.min_seg_frac = min_seg_frac;
  o.restricted_method = restricted_method;
  o.max_iters = max_iters;
  o.exhaustive_budget = exhaustive_budget;
  o.omega = omega;
  o.shrinkage_partition = shrinkage_partition;
  o.estimators = estimators;
  o.pretest_alpha = pretest_alpha;
  return o;
}

PipelineResult fit_pipeline(const RegressionData& data, const Restriction& restriction, const PipelineOptions& o) {
  SearchConfig ue_cfg;
  ue_cfg.m = o.m;
  ue_cfg.min_seg_frac = o.min_seg_frac;
  SearchConfig re_cfg = ue_cfg;
  re_cfg.method = o.restricted_method;
  re_cfg.max_iters = o.max_iters;
  re_cfg.exhaustive_budget = o.exhaustive_budget;

  PipelineResult out{find_breaks_unrestricted(data, ue_cfg),
                     {Partition::none(data.T()), 0.0, re_cfg.method, 0, false, {}}, {}, {}, {}};
  const Partition& pu = out.ue_search.partition;
  out.re_search = find_breaks_restricted(data, restriction, re_cfg, &pu);
  const Partition& pr = out.re_search.partition;
  const CoefEstimate ue = fit_unrestricted(data, pu);
  const CoefEstimate re = fit_restricted(data, pr, restriction);

  const bool shrink = has(o.estimators, "js") || has(o.estimators, "pp") || has(o.estimators, "pretest");
  std::optional<CoefEstimate> ue_s, re_s;
  if (shrink) {
    const Partition& ps = o.shrinkage_partition == ShrinkagePartition::Unrestricted ? pu : pr;
    ue_s = ps == pu ? ue : fit_unrestricted(data, ps);
    re_s = ps == pr ? re : fit_restricted(data, ps, restriction);
    out.plugins = estimate_plugins(data, ps, restriction, o.omega);
    out.psi = psi_statistic(*ue_s, *re_s, *out.plugins, data.T());
  }
  for (const std::string& name : o.estimators) {
    if (name != "ue" && name != "re" && name != "js" && name != "pp" && name != "pretest") {
      throw Error(ErrorCode::InvalidArgument, "unknown estimator '" + name + "'");
    }
  }
  for (const std::string& name : o.estimators) {
    if (name == "ue") out.estimates.push_back(ue);
    else if (name == "re") out.estimates.push_back(re);
    else {
      const int k = restriction.k();
      const ShrinkageFunction h =
          name == "js" ? make_james_stein(k) : (name == "pp" ? make_positive_part(k) : make_pretest(k, o.pretest_alpha));
      out.estimates.push_back(shrinkage_estimate(*ue_s, *re_s, *out.plugins, h, data.T()));
    }
  }
  return out;
}

SimDesign build_case1(int T) {
  SimDesign d;
  d.name = "case1";
  d.m = 3;
  d.q = 2;
  d.T = T;
  if (T == 40) d.true_breaks = {10, 20, 30};
  else if (T == 100) d.true_breaks = {25, 50, 75};
  else d.true_breaks = even_breaks(T, 3);
  d.delta0 = VectorXd(8);
  d.delta0 << 1, 2, 0, 0, 1, 2, 0, 0;
  // Columns E1 E2 E3 E4 -E1 -E2 E5 E6 of the 6x6 identity.
  MatrixXd R = MatrixXd::Zero(6, 8);
  const int row_of_col[8] = {0, 1, 2, 3, 0, 1, 4, 5};
  const double sign[8] = {1, 1, 1, 1, -1, -1, 1, 1};
  for (int c = 0; c < 8; ++c) R(row_of_col[c], c) = sign[c];
  d.restriction = Restriction(R, VectorXd::Zero(6));
  d.regressor_mean = VectorXd::Ones(2);
  d.regressor_cov = toeplitz_half(2);
  return d;
}

SimDesign build_case2(int T) {
  SimDesign d;
  d.name = "case2";
  d.m = 4;
  d.q = 5;
  d.T = T;
  if (T == 100) d.true_breaks = {20, 40, 60, 80};
  else if (T == 500) d.true_breaks = {100, 200, 300, 400};
  else d.true_breaks = even_breaks(T, 4);
  d.delta0 = VectorXd::Zero(25);
  for (int blk : {0, 2, 4})
    for (int j = 0; j < 5; ++j) d.delta0(blk * 5 + j) = j + 1;
  MatrixXd R = MatrixXd::Zero(8, 25);
  for (int i = 0; i < 5; ++i) {
    R(i, i) = 1.0;
    R(i, 10 + i) = -1.0;
  }
  R(5, 5) = 1.0;
  R(6, 18) = 1.0;
  R(7, 19) = 1.0;
  d.restriction = Restriction(R, VectorXd::Zero(8));
  d.regressor_mean = VectorXd::Ones(5);
  d.regressor_cov = toeplitz_half(5);
  return d;
}

RegressionData simulate_data(const SimDesign& d, std::size_t sigma_index, int replication) {
  Engine eng = make_engine(d.seed, {sigma_index, static_cast<std::uint64_t>(replication)});
  std::normal_distribution<double> nd;
  MatrixXd z;
  if (d.redraw_regressors) {
    z = draw_regressors(d, eng, nd);
  } else {
    Engine fixed = make_engine(d.seed, {0xf1ed});
    std::normal_distribution<double> fnd;
    z = draw_regressors(d, fixed, fnd);
  }
  const Partition truth(d.true_breaks, d.T);
  const double sd = std::sqrt(d.sigma2_grid.at(sigma_index));
  VectorXd y(d.T);
  for (int t = 0; t < d.T; ++t) {
    const int p = truth.regime_of(t + 1);
    y(t) = z.row(t).dot(d.delta0.segment(p * d.q, d.q)) + sd * nd(eng);
  }
  return RegressionData(std::move(y), std::move(z));
}

RegressionData trend_series(int T, const std::vector<int>& breaks, const VectorXd& delta0, double sigma2,
                            std::uint64_t seed, double phi) {
  const Partition part(breaks, T);
  const MatrixXd z = trend_basis(T);
  if (delta0.size() != 4 * part.segment_count()) throw Error(ErrorCode::DimensionMismatch, "delta0 must have 4(m+1) entries");
  Engine eng = make_engine(seed, {0x7e});
  std::normal_distribution<double> nd(0.0, std::sqrt(sigma2));
  VectorXd y(T);
  double u = 0.0;
  for (int t = 0; t < T; ++t) {
    u = phi * u + nd(eng);
    y(t) = z.row(t).dot(delta0.segment(4 * part.regime_of(t + 1), 4)) + u;
  }
  return RegressionData(std::move(y), z);
}

SimResult run_monte_carlo(const SimDesign& d, Exec exec) {
  d.validate();
  const auto t0 = std::chrono::steady_clock::now();
  std::atomic<long> warnings{0};
  ScopedWarningHandler quiet([&warnings](std::string_view) { ++warnings; });

  const std::size_t n_est = d.estimators.size();
  const MatrixXd W = d.loss_weight ? *d.loss_weight : MatrixXd::Identity(d.delta0.size(), d.delta0.size());
  const PipelineOptions options = d.pipeline_options();

  SimResult out;
  out.ue_breaks.assign(d.sigma2_grid.size(), std::vector<std::vector<int>>(d.n_reps));
  out.re_breaks = out.ue_breaks;
  for (std::size_t s = 0; s < d.sigma2_grid.size(); ++s) {
    // Per-replication output slots keep the reduction order fixed.
    std::vector<double> loss(static_cast<std::size_t>(d.n_reps) * n_est, 0.0);
    std::vector<std::string> failed(d.n_reps);
    parallel_for(d.n_reps, exec, [&](std::int64_t r) {
      try {
        const RegressionData data = simulate_data(d, s, static_cast<int>(r));
        const PipelineResult fit = fit_pipeline(data, d.restriction, options);
        for (std::size_t e = 0; e < n_est; ++e) {
          const VectorXd err = fit.estimates[e].delta - d.delta0;
          loss[static_cast<std::size_t>(r) * n_est + e] = err.dot(W * err);
        }
        out.ue_breaks[s][r] = fit.ue_search.partition.breaks();
        out.re_breaks[s][r] = fit.re_search.partition.breaks();
      } catch (const Error& e) {
        failed[r] = to_string(e.code());
      }
    });

    SigmaSummary sum;
    sum.sigma2 = d.sigma2_grid[s];
    sum.estimators = d.estimators;
    for (int r = 0; r < d.n_reps; ++r) {
      if (failed[r].empty()) ++sum.n_ok;
      else {
        ++sum.n_fail;
        ++sum.failure_codes[failed[r]];
      }
    }
    std::vector<double> col;
    col.reserve(sum.n_ok);
    for (std::size_t e = 0; e < n_est; ++e) {
      col.clear();
      for (int r = 0; r < d.n_reps; ++r) {
        if (failed[r].empty()) col.push_back(loss[static_cast<std::size_t>(r) * n_est + e]);
      }
      sum.risk.push_back(col.empty() ? NAN : pairwise_sum(col) / static_cast<double>(col.size()));
    }
    const std::size_t ue_at = static_cast<std::size_t>(std::find(d.estimators.begin(), d.estimators.end(), "ue") - d.estimators.begin());
    for (std::size_t e = 0; e < n_est; ++e) sum.rmse.push_back(sum.risk[ue_at] / sum.risk[e]);
    out.summaries.push_back(std::move(sum));
  }
  out.warnings = warnings.load();
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

std::vector<HistogramRow> break_histogram(const std::vector<std::vector<std::vector<int>>>& breaks, int m) {
  std::map<std::pair<int, int>, int> counts;
  for (const auto& per_sigma : breaks)
    for (const auto& b : per_sigma) {
      if (static_cast<int>(b.size()) != m) continue;
      for (int i = 0; i < m; ++i) ++counts[{i + 1, b[i]}];
    }
  std::vector<HistogramRow> rows;
  for (const auto& [key, c] : counts) rows.push_back({key.first, key.second, c});
  return rows;
}

std::vector<int> marginal_modes(const std::vector<HistogramRow>& histogram, int m) {
  std::vector<int> mode(m, 0), best(m, -1);
  for (const auto& row : histogram) {
    const int i = row.break_index - 1;
    if (i < 0 || i >= m) continue;
    if (row.count > best[i]) {
      best[i] = row.count;
      mode[i] = row.estimated_time;
    }
  }
  return mode;
}

std::vector<int> joint_mode(const std::vector<std::vector<std::vector<int>>>& breaks) {
  std::map<std::vector<int>, int> counts;
  for (const auto& per_sigma : breaks)
    for (const auto& b : per_sigma) {
      if (!b.empty()) ++counts[b];
    }
  std::vector<int> mode;
  int best = -1;
  for (const auto& [b, c] : counts) {
    if (c > best) {
      best = c;
      mode = b;
    }
  }
  return mode;
}

}  // namespace cpshrink
