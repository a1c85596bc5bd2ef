#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "cpshrink/cli.hpp"
#include "cpshrink/rng.hpp"
#include "cpshrink/stein_oracle.hpp"
#include "json.hpp"

namespace cpshrink::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path prepare_out(const RunConfig& c) {
  const fs::path out(c.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create output directory " + out.string() + ": " + ec.message());
  return out;
}

// Config echo, version and seeds; no timestamps so reruns are identical.
void write_manifest(const fs::path& out, const std::string& command, const RunConfig& c,
                    const std::vector<std::string>& files, const json& extra = json::object()) {
  json m;
  m["tool"] = "cpshrink";
  m["version"] = CPSHRINK_VERSION;
  m["command"] = command;
  m["config"] = json::parse(c.dump());
  m["seeds"] = {{"root", c.seed}};
  m["outputs"] = files;
  for (const auto& item : extra.items()) m[item.key()] = item.value();
  write_atomic(out / "manifest.json", m.dump(2) + "\n");
}

std::string join_breaks(const std::vector<int>& b, int offset) {
  std::string s;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (i) s += ';';
    s += std::to_string(b[i] + offset);
  }
  return s;
}

std::string series_name(const DataSpec& d) {
  if (!d.series.empty()) return d.series;
  return fs::path(d.path).stem().string();
}

struct Prepared {
  RegressionData data;
  Restriction restriction;
};

Prepared prepare_fit(const RunConfig& c) {
  RegressionData data = load_data(c.data);
  Restriction restriction = build_restriction(c.restriction, c.m, data.q());
  return {std::move(data), std::move(restriction)};
}

const CoefEstimate* find_estimate(const PipelineResult& r, const std::string& name) {
  for (const auto& e : r.estimates) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

}  // namespace

int cmd_fit(const RunConfig& c) {
  const Prepared in = prepare_fit(c);
  const PipelineResult fit = fit_pipeline(in.data, in.restriction, c.pipeline_options());
  const fs::path out = prepare_out(c);
  const int k = in.restriction.k();

  std::ostringstream summary;
  summary << "series,T,q,m,k";
  if (c.m > 0) summary << ",ue_breaks,re_breaks,re_search,re_is_global";
  summary << ",ssr_ue,ssr_re,psi,delta_hat\n";
  summary << series_name(c.data) << ',' << in.data.T() << ',' << in.data.q() << ',' << c.m << ',' << k;
  if (c.m > 0) {
    summary << ',' << join_breaks(fit.ue_search.partition.breaks(), c.data.time_offset) << ','
            << join_breaks(fit.re_search.partition.breaks(), c.data.time_offset) << ','
            << to_string(fit.re_search.method_used) << ',' << (fit.re_search.is_global ? "true" : "false");
  }
  const double psi = fit.psi.value_or(NAN);
  summary << ',' << format_number(fit.ue_search.ssr) << ',' << format_number(fit.re_search.ssr) << ','
          << format_number(psi) << ',' << format_number(fit.psi ? empirical_delta(psi, k) : NAN) << '\n';

  std::ostringstream coefs;
  coefs << "estimator,segment,coef_index,value\n";
  const int q = in.data.q();
  for (const auto& e : fit.estimates) {
    for (Index i = 0; i < e.delta.size(); ++i) {
      coefs << e.name << ',' << (i / q + 1) << ',' << (i % q + 1) << ',' << format_number(e.delta(i)) << '\n';
    }
  }
  write_atomic(out / "fit_summary.csv", summary.str());
  write_atomic(out / "fit.csv", coefs.str());
  write_manifest(out, "fit", c, {"fit_summary.csv", "fit.csv"});
  return kExitOk;
}

int cmd_bootstrap(const RunConfig& c) {
  const Prepared in = prepare_fit(c);
  const PipelineOptions opts = c.pipeline_options();
  const PipelineResult fit = fit_pipeline(in.data, in.restriction, opts);
  const CoefEstimate* ue = find_estimate(fit, "ue");
  if (!ue) throw Error(ErrorCode::ConfigError, "bootstrap needs the ue estimator");

  // Residual bootstrap around the unrestricted fit at the UE breaks.
  const SegmentedDesign design = build_design(in.data, ue->partition);
  const VectorXd fitted = design.zbar * ue->delta;
  VectorXd resid = in.data.y() - fitted;
  resid.array() -= resid.mean();
  const int T = in.data.T();
  const int B = c.bootstrap_b;
  const std::size_t n_est = fit.estimates.size();

  std::vector<double> sq(static_cast<std::size_t>(B) * n_est, 0.0);
  std::vector<char> ok(B, 0);
  ScopedWarningHandler quiet([](std::string_view) {});
  parallel_for(B, Exec::Parallel, [&](std::int64_t b) {
    Engine eng = make_engine(c.seed, {0xb0, static_cast<std::uint64_t>(b)});
    std::uniform_int_distribution<int> pick(0, T - 1);
    VectorXd y = fitted;
    for (int t = 0; t < T; ++t) y(t) += resid(pick(eng));
    try {
      const RegressionData star(std::move(y), in.data.z());
      const PipelineResult r = fit_pipeline(star, in.restriction, opts);
      for (std::size_t e = 0; e < n_est; ++e) {
        sq[static_cast<std::size_t>(b) * n_est + e] = (r.estimates[e].delta - fit.estimates[e].delta).squaredNorm();
      }
      ok[b] = 1;
    } catch (const Error&) {
    }
  });

  int n_fail = 0;
  for (char o : ok) n_fail += o ? 0 : 1;
  auto mse = [&](const std::string& name) -> double {
    for (std::size_t e = 0; e < n_est; ++e) {
      if (fit.estimates[e].name != name) continue;
      std::vector<double> col;
      for (int b = 0; b < B; ++b) {
        if (ok[b]) col.push_back(sq[static_cast<std::size_t>(b) * n_est + e]);
      }
      return col.empty() ? NAN : pairwise_sum(col) / static_cast<double>(col.size());
    }
    return NAN;
  };

  std::ostringstream csv;
  csv << "series,ue_breaks,re_breaks,mse_ue,mse_re,mse_js,mse_pp,B,n_fail\n";
  csv << series_name(c.data) << ',' << join_breaks(fit.ue_search.partition.breaks(), c.data.time_offset) << ','
      << join_breaks(fit.re_search.partition.breaks(), c.data.time_offset) << ',' << format_number(mse("ue")) << ','
      << format_number(mse("re")) << ',' << format_number(mse("js")) << ',' << format_number(mse("pp")) << ',' << B
      << ',' << n_fail << '\n';
  const fs::path out = prepare_out(c);
  write_atomic(out / "bootstrap.csv", csv.str());
  write_manifest(out, "bootstrap", c, {"bootstrap.csv"},
                 {{"mse_reference", "original-sample point estimate of each estimator"}});
  return kExitOk;
}

SimDesign design_from_config(const RunConfig& c) {
  SimDesign d;
  if (c.simulate.sim_case == 1) d = build_case1(c.simulate.T);
  else if (c.simulate.sim_case == 2) d = build_case2(c.simulate.T);
  else {
    const auto& s = c.simulate;
    if (s.q < 1) throw Error(ErrorCode::ConfigError, "custom simulate design needs q >= 1");
    d.name = "custom";
    d.m = c.m;
    d.q = s.q;
    d.T = s.T;
    d.true_breaks = s.true_breaks;
    d.delta0 = Eigen::Map<const VectorXd>(s.delta0.data(), static_cast<Index>(s.delta0.size()));
    d.restriction = build_restriction(c.restriction, c.m, s.q);
    d.regressor_mean = VectorXd::Ones(s.q);
    d.regressor_cov = MatrixXd(s.q, s.q);
    for (int a = 0; a < s.q; ++a)
      for (int b = 0; b < s.q; ++b) d.regressor_cov(a, b) = std::pow(0.5, std::abs(a - b));
  }
  d.sigma2_grid = c.simulate.sigma2;
  d.n_reps = c.simulate.reps;
  d.seed = c.seed;
  d.estimators = c.estimators;
  d.redraw_regressors = c.simulate.redraw_regressors;
  d.min_seg_frac = c.min_seg_frac;
  const PipelineOptions o = c.pipeline_options();
  d.restricted_method = o.restricted_method;
  d.max_iters = o.max_iters;
  d.exhaustive_budget = o.exhaustive_budget;
  d.omega = o.omega;
  d.shrinkage_partition = o.shrinkage_partition;
  d.pretest_alpha = o.pretest_alpha;
  return d;
}

int cmd_simulate(const RunConfig& c) {
  const SimDesign d = design_from_config(c);
  const SimResult r = run_monte_carlo(d);

  std::ostringstream rmse, risk;
  rmse << "sigma2,estimator,rmse,n_fail\n";
  risk << "sigma2,estimator,risk,n_ok\n";
  for (const auto& s : r.summaries) {
    for (std::size_t e = 0; e < s.estimators.size(); ++e) {
      rmse << format_number(s.sigma2) << ',' << s.estimators[e] << ',' << format_number(s.rmse[e]) << ',' << s.n_fail
           << '\n';
      risk << format_number(s.sigma2) << ',' << s.estimators[e] << ',' << format_number(s.risk[e]) << ',' << s.n_ok
           << '\n';
    }
  }
  auto hist = [&](const std::vector<std::vector<std::vector<int>>>& breaks) {
    std::ostringstream h;
    h << "case,T,break_index,estimated_time,count\n";
    for (const auto& row : break_histogram(breaks, d.m)) {
      h << d.name << ',' << d.T << ',' << row.break_index << ',' << row.estimated_time << ',' << row.count << '\n';
    }
    return h.str();
  };
  const fs::path out = prepare_out(c);
  write_atomic(out / "rmse.csv", rmse.str());
  write_atomic(out / "risk.csv", risk.str());
  write_atomic(out / "breaks_hist_ue.csv", hist(r.ue_breaks));
  write_atomic(out / "breaks_hist_re.csv", hist(r.re_breaks));

  json extra;
  extra["design"] = d.name;
  extra["restricted_search"] = std::string(to_string(d.restricted_method)) +
                               (d.restricted_method == SearchMethod::CoordinateRefine ? " (local, not global)" : "");
  extra["histograms"] = "pooled over the sigma2 grid";
  if (d.name == "case2" && d.T != 500) extra["note"] = "case 2 at T=" + std::to_string(d.T) + " is a scaled-down variant";
  long fails = 0;
  for (const auto& s : r.summaries) fails += s.n_fail;
  extra["n_fail_total"] = fails;
  write_manifest(out, "simulate", c, {"rmse.csv", "risk.csv", "breaks_hist_ue.csv", "breaks_hist_re.csv"}, extra);
  return kExitOk;
}

AsymptoticScaffold scaffold_from_config(const RunConfig& c) {
  const RiskSpec& s = c.risk;
  auto mat = [](const std::vector<std::vector<double>>& rows, Index r, Index cols, const char* what) {
    MatrixXd m(r, cols);
    if (static_cast<Index>(rows.size()) != r) throw Error(ErrorCode::ConfigError, std::string("risk.") + what + " has the wrong size");
    for (Index i = 0; i < r; ++i) {
      if (static_cast<Index>(rows[i].size()) != cols) throw Error(ErrorCode::ConfigError, std::string("risk.") + what + " has the wrong size");
      for (Index j = 0; j < cols; ++j) m(i, j) = rows[i][j];
    }
    return m;
  };
  const int p = s.p, k = s.k;
  const MatrixXd gamma = s.gamma.empty() ? random_psd(p, derive_seed(c.seed, {1})) : mat(s.gamma, p, p, "gamma");
  MatrixXd omega;
  if (!s.omega.empty()) omega = mat(s.omega, p, p, "omega");
  else omega = s.omega_proportional ? gamma : random_psd(p, derive_seed(c.seed, {2}));
  Engine eng = make_engine(c.seed, {3});
  std::normal_distribution<double> nd;
  MatrixXd R(k, p);
  if (!s.R.empty()) R = mat(s.R, k, p, "R");
  else
    for (Index i = 0; i < R.size(); ++i) R.data()[i] = nd(eng);
  VectorXd mu(k);
  if (!s.mu.empty()) {
    if (static_cast<int>(s.mu.size()) != k) throw Error(ErrorCode::ConfigError, "risk.mu must have k entries");
    mu = Eigen::Map<const VectorXd>(s.mu.data(), k);
  } else {
    for (Index i = 0; i < k; ++i) mu(i) = nd(eng);
  }
  return AsymptoticScaffold::make(gamma, omega, R, mu);
}

int cmd_risk(const RunConfig& c) {
  const AsymptoticScaffold s = scaffold_from_config(c);
  const MatrixXd w_star = c.risk.w_star.empty() ? MatrixXd::Identity(s.p(), s.p()) : [&] {
    MatrixXd m(s.p(), s.p());
    if (static_cast<int>(c.risk.w_star.size()) != s.p()) throw Error(ErrorCode::ConfigError, "risk.w_star must be p x p");
    for (int i = 0; i < s.p(); ++i) {
      if (static_cast<int>(c.risk.w_star[i].size()) != s.p()) throw Error(ErrorCode::ConfigError, "risk.w_star must be p x p");
      for (int j = 0; j < s.p(); ++j) m(i, j) = c.risk.w_star[i][j];
    }
    return m;
  }();
  const WeightSpec w(w_star, s);
  std::vector<double> grid;
  const int n = c.risk.grid_points;
  for (int i = 0; i < n; ++i) grid.push_back(n == 1 ? 0.0 : c.risk.grid_max * i / (n - 1));
  const auto curve = adr_curve(s, w, grid);

  std::ostringstream csv;
  csv << "delta,adr_ue,adr_re,adr_js,adr_pp,dominance_holds\n";
  for (const auto& pt : curve) {
    csv << format_number(pt.delta) << ',' << format_number(pt.ue) << ',' << format_number(pt.re) << ','
        << format_number(pt.js) << ',' << format_number(pt.pp) << ',' << (pt.dominance_holds ? "true" : "false") << '\n';
  }
  const fs::path out = prepare_out(c);
  write_atomic(out / "adr.csv", csv.str());
  std::vector<std::string> files{"adr.csv"};
  if (s.k() > 2) {
    const DominanceReport d = dominance_check(s, w);
    std::ostringstream dc;
    dc << "quantity,value\n";
    dc << "holds," << (d.holds ? "true" : "false") << '\n';
    dc << "holds_sufficient," << (d.holds_sufficient ? "true" : "false") << '\n';
    dc << "c1," << format_number(d.c1) << '\n';
    dc << "c2_bound," << format_number(d.c2_bound) << '\n';
    dc << "c2_bound_sufficient," << format_number(d.c2_bound_sufficient) << '\n';
    dc << "trace_wl12," << format_number(d.trace_wl12) << '\n';
    dc << "neg_chmin_wl11," << format_number(d.eig_min_terms[0]) << '\n';
    dc << "chmin_wl12," << format_number(d.eig_min_terms[1]) << '\n';
    dc << "pi_star_max_eig," << format_number(d.pi_star_max_eig) << '\n';
    for (const auto& v : d.violated) dc << "violated,\"" << v << "\"\n";
    write_atomic(out / "dominance.csv", dc.str());
    files.push_back("dominance.csv");
  }
  write_manifest(out, "risk", c, files);
  return kExitOk;
}

int cmd_verify(const RunConfig& c) {
  const VerifySpec& v = c.verify;
  const std::vector<double> deltas{0.0, 0.5, 2.0, 5.0, 10.0};
  const double cut = v.k + 2.0;
  std::vector<ShrinkageFunction> h_exact{make_constant(1.0),
                                         make_custom("inv", [](double x) { return 1.0 / x; }),
                                         make_custom("ind", [cut](double x) { return x < cut ? 1.0 : 0.0; }, {cut})};
  // Exact moment terms, so the closed forms use the series kernels.
  h_exact[0].name = "one";
  h_exact[1].h_terms = std::vector<MomentTerm>{{1.0, -1, {}}};
  h_exact[2].h_terms = std::vector<MomentTerm>{{1.0, 0, cut}};

  std::ostringstream csv;
  csv << "setup,identity,h,delta,max_abs_err,max_z,expect_pass,passed\n";
  bool all_good = true;
  auto row = [&](const std::string& setup, const char* id, const std::string& h, double delta, double err, double z,
                 bool expect, bool passed) {
    csv << setup << ',' << id << ',' << h << ',' << format_number(delta) << ',' << format_number(err) << ','
        << format_number(z) << ',' << (expect ? "true" : "false") << ',' << (passed ? "true" : "false") << '\n';
    if (expect != passed) all_good = false;
  };

  std::optional<AsymptoticScaffold> first;
  for (int s = 0; s < v.setups; ++s) {
    const double target = deltas[static_cast<std::size_t>(s) % deltas.size()];
    const AsymptoticScaffold sc = random_scaffold(v.p, v.k, target, derive_seed(c.seed, {0x5e, static_cast<std::uint64_t>(s)}));
    if (!first) first = sc;
    const MatrixXd w_star = random_psd(v.p, derive_seed(c.seed, {0x77, static_cast<std::uint64_t>(s)}));
    const GaussianSetup g = GaussianSetup::from_scaffold(sc, w_star);
    const std::string name = std::to_string(s + 1);
    for (std::size_t hi = 0; hi < h_exact.size(); ++hi) {
      const ShrinkageFunction& h = h_exact[hi];
      auto seed = [&](std::uint64_t id) { return derive_seed(c.seed, {static_cast<std::uint64_t>(s), id, hi}); };
      const auto cv = mc_vector_identity(g, h, v.n_samples, seed(1));
      row(name, "vector", h.name, g.delta(), cv.max_abs_err, cv.max_z, true, cv.passes());
      const auto cq = mc_quadratic_identity(g, h, v.n_samples, seed(2));
      row(name, "quadratic", h.name, g.delta(), cq.abs_err, cq.z, true, cq.passes());
      const auto cc = mc_cross_identity(g, h, v.n_samples, seed(3));
      row(name, "cross", h.name, g.delta(), cc.abs_err, cc.z, true, cc.passes());
      // The cross identity holds for any weight; with W = A^{1/2} W* A^{1/2}
      // the Y part collapses to its mean, so also run it with W = I.
      GaussianSetup gi = g;
      gi.w = MatrixXd::Identity(v.p, v.p);
      const auto ci = mc_cross_identity(gi, h, v.n_samples, seed(4));
      row(name, "cross-identity-weight", h.name, g.delta(), ci.abs_err, ci.z, true, ci.passes());
    }
  }

  // Negative controls: each breaks one hypothesis and must be detected.
  {
    const AsymptoticScaffold sc = first->with_delta(5.0);
    const GaussianSetup g = GaussianSetup::from_scaffold(sc, MatrixXd::Identity(v.p, v.p));
    Eigen::JacobiSVD<MatrixXd> svd(sc.R(), Eigen::ComputeFullV);
    const VectorXd n = svd.matrixV().col(v.p - 1) * (g.mu_x.norm() + 1.0);
    // Mean shifted off the range of sigma: sigma A mu != mu.
    const GaussianSetup off = GaussianSetup::unchecked(g.mu_x + n, g.sigma, g.a, MatrixXd::Identity(v.p, v.p));
    const auto cv = mc_vector_identity(off, h_exact[1], v.n_samples, derive_seed(c.seed, {0xbad, 1}));
    row("negative-mean", "vector", "inv", off.delta(), cv.max_abs_err, cv.max_z, false, cv.passes());
    // Covariance doubled: sigma A sigma != sigma.
    const GaussianSetup base = GaussianSetup::from_scaffold(sc, random_psd(v.p, derive_seed(c.seed, {0xbad, 0})));
    const GaussianSetup wide = GaussianSetup::unchecked(base.mu_x, 2.0 * base.sigma, base.a, base.w);
    const auto cq = mc_quadratic_identity(wide, h_exact[1], v.n_samples, derive_seed(c.seed, {0xbad, 2}));
    row("negative-scale", "quadratic", "inv", wide.delta(), cq.abs_err, cq.z, false, cq.passes());
  }

  const fs::path out = prepare_out(c);
  write_atomic(out / "verify.csv", csv.str());
  write_manifest(out, "verify", c, {"verify.csv"}, {{"passed", all_good}});
  return all_good ? kExitOk : kExitVerification;
}

}  // namespace cpshrink::cli
