#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "cpshrink/cli.hpp"
#include "json.hpp"

namespace cpshrink::cli {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); }

// Reads keys out of one JSON object and rejects any it did not ask for.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) bad(where_ + " must be an object");
  }

  const json* find(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void get(const char* key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) bad(path(key) + " must be an integer");
      const auto x = v->get<long long>();
      if (x < INT32_MIN || x > INT32_MAX) bad(path(key) + " is out of range");
      out = static_cast<int>(x);
    }
  }
  void get(const char* key, std::int64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) bad(path(key) + " must be an integer");
      out = v->get<std::int64_t>();
    }
  }
  void get(const char* key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0)) {
        bad(path(key) + " must be a non-negative integer");
      }
      out = v->get<std::uint64_t>();
    }
  }
  void get(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) bad(path(key) + " must be a number");
      out = v->get<double>();
    }
  }
  void get(const char* key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) bad(path(key) + " must be true or false");
      out = v->get<bool>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) bad(path(key) + " must be a string");
      out = v->get<std::string>();
    }
  }
  template <typename T>
  void get(const char* key, std::vector<T>& out) {
    if (const json* v = find(key)) {
      try {
        out = v->get<std::vector<T>>();
      } catch (const json::exception&) {
        bad(path(key) + " has the wrong element type");
      }
    }
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) bad("unknown key " + path(item.key().c_str()));
    }
  }

  std::string path(const char* key) const { return where_.empty() ? key : where_ + "." + key; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

RestrictionEntry parse_entry(const json& j, const std::string& where) {
  Fields f(j, where);
  RestrictionEntry e;
  f.get("pattern", e.pattern);
  if (e.pattern == "equal-segments") {
    f.get("i", e.i);
    f.get("j", e.j);
  } else if (e.pattern == "zero-segment") {
    f.get("i", e.i);
  } else if (e.pattern == "zero-coef") {
    f.get("segment", e.segment);
    f.get("coef", e.coef);
  } else if (e.pattern == "matrix") {
    f.get("R", e.R);
    f.get("r", e.r);
  } else if (e.pattern != "linear-trend") {
    bad(where + ".pattern: unknown restriction pattern '" + e.pattern + "'");
  }
  f.finish();
  return e;
}

json entry_json(const RestrictionEntry& e) {
  json j{{"pattern", e.pattern}};
  if (e.pattern == "equal-segments") {
    j["i"] = e.i;
    j["j"] = e.j;
  } else if (e.pattern == "zero-segment") {
    j["i"] = e.i;
  } else if (e.pattern == "zero-coef") {
    j["segment"] = e.segment;
    j["coef"] = e.coef;
  } else if (e.pattern == "matrix") {
    j["R"] = e.R;
    j["r"] = e.r;
  }
  return j;
}

MatrixXd to_matrix(const std::vector<std::vector<double>>& rows, const std::string& what) {
  if (rows.empty()) bad(what + " is empty");
  const std::size_t cols = rows.front().size();
  MatrixXd m(static_cast<Index>(rows.size()), static_cast<Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cols) bad(what + " has rows of different length");
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<Index>(i), static_cast<Index>(c)) = rows[i][c];
  }
  return m;
}

bool one_of(const std::string& s, std::initializer_list<const char*> options) {
  for (const char* o : options) {
    if (s == o) return true;
  }
  return false;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    bad(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Fields top(j, "");
  if (const json* d = top.find("data")) {
    Fields f(*d, "data");
    f.get("path", c.data.path);
    f.get("basis", c.data.basis);
    f.get("series", c.data.series);
    f.get("time_offset", c.data.time_offset);
    f.finish();
  }
  if (const json* d = top.find("model")) {
    Fields f(*d, "model");
    f.get("m", c.m);
    f.get("min_seg_frac", c.min_seg_frac);
    f.finish();
  }
  if (const json* d = top.find("restriction")) {
    if (!d->is_array()) bad("restriction must be a list");
    c.restriction.clear();
    for (std::size_t i = 0; i < d->size(); ++i) {
      c.restriction.push_back(parse_entry((*d)[i], "restriction[" + std::to_string(i) + "]"));
    }
  }
  top.get("estimators", c.estimators);
  if (const json* d = top.find("omega")) {
    Fields f(*d, "omega");
    f.get("method", c.omega);
    f.get("bandwidth", c.hac_bandwidth);
    f.finish();
  }
  if (const json* d = top.find("search")) {
    Fields f(*d, "search");
    f.get("restricted", c.restricted_search);
    f.get("max_iters", c.max_iters);
    f.get("exhaustive_budget", c.exhaustive_budget);
    f.finish();
  }
  top.get("shrinkage_partition", c.shrinkage_partition);
  if (const json* d = top.find("bootstrap")) {
    Fields f(*d, "bootstrap");
    f.get("B", c.bootstrap_b);
    f.finish();
  }
  if (const json* d = top.find("simulate")) {
    Fields f(*d, "simulate");
    f.get("case", c.simulate.sim_case);
    f.get("T", c.simulate.T);
    f.get("reps", c.simulate.reps);
    f.get("sigma2", c.simulate.sigma2);
    f.get("redraw_regressors", c.simulate.redraw_regressors);
    f.get("pretest_alpha", c.simulate.pretest_alpha);
    f.get("q", c.simulate.q);
    f.get("true_breaks", c.simulate.true_breaks);
    f.get("delta0", c.simulate.delta0);
    f.finish();
  }
  if (const json* d = top.find("risk")) {
    Fields f(*d, "risk");
    f.get("p", c.risk.p);
    f.get("k", c.risk.k);
    f.get("omega_proportional", c.risk.omega_proportional);
    f.get("gamma", c.risk.gamma);
    f.get("omega", c.risk.omega);
    f.get("R", c.risk.R);
    f.get("mu", c.risk.mu);
    f.get("w_star", c.risk.w_star);
    f.get("grid_max", c.risk.grid_max);
    f.get("grid_points", c.risk.grid_points);
    f.finish();
  }
  if (const json* d = top.find("verify")) {
    Fields f(*d, "verify");
    f.get("n_samples", c.verify.n_samples);
    f.get("setups", c.verify.setups);
    f.get("p", c.verify.p);
    f.get("k", c.verify.k);
    f.finish();
  }
  top.get("seed", c.seed);
  top.get("out", c.out);
  top.finish();
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) bad("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string RunConfig::dump() const {
  json j;
  j["data"] = {{"path", data.path}, {"basis", data.basis}, {"series", data.series}, {"time_offset", data.time_offset}};
  j["model"] = {{"m", m}, {"min_seg_frac", min_seg_frac}};
  j["restriction"] = json::array();
  for (const auto& e : restriction) j["restriction"].push_back(entry_json(e));
  j["estimators"] = estimators;
  j["omega"] = {{"method", omega}, {"bandwidth", hac_bandwidth}};
  j["search"] = {{"restricted", restricted_search}, {"max_iters", max_iters}, {"exhaustive_budget", exhaustive_budget}};
  j["shrinkage_partition"] = shrinkage_partition;
  j["bootstrap"] = {{"B", bootstrap_b}};
  j["simulate"] = {{"case", simulate.sim_case},
                   {"T", simulate.T},
                   {"reps", simulate.reps},
                   {"sigma2", simulate.sigma2},
                   {"redraw_regressors", simulate.redraw_regressors},
                   {"pretest_alpha", simulate.pretest_alpha},
                   {"q", simulate.q},
                   {"true_breaks", simulate.true_breaks},
                   {"delta0", simulate.delta0}};
  j["risk"] = {{"p", risk.p},         {"k", risk.k},   {"omega_proportional", risk.omega_proportional},
               {"gamma", risk.gamma}, {"omega", risk.omega}, {"R", risk.R},
               {"mu", risk.mu},       {"w_star", risk.w_star}, {"grid_max", risk.grid_max},
               {"grid_points", risk.grid_points}};
  j["verify"] = {{"n_samples", verify.n_samples}, {"setups", verify.setups}, {"p", verify.p}, {"k", verify.k}};
  j["seed"] = seed;
  j["out"] = out;
  return j.dump(2) + "\n";
}

void RunConfig::validate() const {
  if (!one_of(data.basis, {"columns", "gdp-trend"})) bad("data.basis must be columns or gdp-trend");
  if (m < 0) bad("model.m must be >= 0");
  if (!(min_seg_frac > 0.0 && min_seg_frac < 1.0)) bad("model.min_seg_frac must lie in (0, 1)");
  std::set<std::string> names;
  for (const auto& e : estimators) {
    if (!one_of(e, {"ue", "re", "js", "pp", "pretest"})) bad("unknown estimator '" + e + "'");
    if (!names.insert(e).second) bad("estimator '" + e + "' listed twice");
  }
  if (!one_of(omega, {"hc0", "hac"})) bad("omega.method must be hc0 or hac");
  if (hac_bandwidth < -1) bad("omega.bandwidth must be >= 0 (or -1 for the default)");
  if (!one_of(restricted_search, {"refine", "exhaustive"})) bad("search.restricted must be refine or exhaustive");
  if (max_iters < 1) bad("search.max_iters must be >= 1");
  if (!one_of(shrinkage_partition, {"ue", "re"})) bad("shrinkage_partition must be ue or re");
  if (bootstrap_b < 1) bad("bootstrap.B must be >= 1");
  if (simulate.sim_case < 0 || simulate.sim_case > 2) bad("simulate.case must be 0, 1 or 2");
  if (simulate.T < 2 || simulate.reps < 1) bad("simulate.T must be >= 2 and simulate.reps >= 1");
  if (simulate.sigma2.empty()) bad("simulate.sigma2 is empty");
  for (double s : simulate.sigma2) {
    if (!(s > 0.0)) bad("simulate.sigma2 entries must be positive");
  }
  if (!(simulate.pretest_alpha > 0.0 && simulate.pretest_alpha < 1.0)) bad("simulate.pretest_alpha must lie in (0, 1)");
  if (risk.p < 1 || risk.k < 1 || risk.k > risk.p) bad("risk needs 1 <= k <= p");
  if (risk.grid_points < 1 || !(risk.grid_max >= 0.0)) bad("risk grid must have >= 1 point and grid_max >= 0");
  if (verify.n_samples < 10'000) bad("verify.n_samples must be >= 10000");
  if (verify.setups < 1 || verify.k < 1 || verify.k >= verify.p) bad("verify needs setups >= 1 and 1 <= k < p");
}

OmegaMethod RunConfig::omega_method() const {
  return omega == "hac" ? OmegaMethod::hac(hac_bandwidth) : OmegaMethod::hc0();
}

PipelineOptions RunConfig::pipeline_options() const {
  PipelineOptions o;
  o.m = m;
  o.min_seg_frac = min_seg_frac;
  o.restricted_method = restricted_search == "exhaustive" ? SearchMethod::Exhaustive : SearchMethod::CoordinateRefine;
  o.max_iters = max_iters;
  o.exhaustive_budget = exhaustive_budget;
  o.omega = omega_method();
  o.shrinkage_partition = shrinkage_partition == "re" ? ShrinkagePartition::Restricted : ShrinkagePartition::Unrestricted;
  o.estimators = estimators;
  o.pretest_alpha = simulate.pretest_alpha;
  return o;
}

Restriction build_restriction(const std::vector<RestrictionEntry>& entries, int m, int q) {
  if (entries.empty()) bad("a restriction is required");
  std::optional<Restriction> out;
  for (const auto& e : entries) {
    Restriction next = [&] {
      if (e.pattern == "linear-trend") return linear_trend_restriction(m, q);
      if (e.pattern == "equal-segments") return equal_segments_restriction(m, q, e.i, e.j);
      if (e.pattern == "zero-segment") return zero_segment_restriction(m, q, e.i);
      if (e.pattern == "zero-coef") return zero_coefficient_restriction(m, q, e.segment, e.coef);
      const MatrixXd R = to_matrix(e.R, "restriction R");
      if (static_cast<Index>(e.r.size()) != R.rows()) bad("restriction r must have one entry per row of R");
      return Restriction(R, Eigen::Map<const VectorXd>(e.r.data(), static_cast<Index>(e.r.size())));
    }();
    out = out ? out->stacked(next) : next;
  }
  return *out;
}

RegressionData load_data(const DataSpec& spec) {
  if (spec.path.empty()) bad("data.path is required");
  return read_regression_csv(spec.path, spec.basis == "gdp-trend");
}

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (x == 0.0) return "0";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot rename " + tmp.string() + ": " + ec.message());
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidData:
    case ErrorCode::IoError:
    case ErrorCode::InfeasibleConfig:
    case ErrorCode::KTooSmall:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::InvalidPartition:
      return kExitConfig;
    default:
      return kExitNumerical;
  }
}

}  // namespace cpshrink::cli
