#include "cpshrink/risk.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/non_central_chi_squared.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>

namespace cpshrink {

namespace {

int spec_power(const MomentSpec& spec) {
  switch (spec.kind) {
    case MomentKind::InverseFirst: return 1;
    case MomentKind::InverseSecond: return 2;
    case MomentKind::TruncBelow: return -spec.power;
  }
  return 0;
}

// Central chi-square(n) moment of the given kind.
double central_moment(const MomentSpec& spec, double n) {
  using boost::math::gamma_p;
  switch (spec.kind) {
    case MomentKind::InverseFirst: return 1.0 / (n - 2.0);
    case MomentKind::InverseSecond: return 1.0 / ((n - 2.0) * (n - 4.0));
    case MomentKind::TruncBelow:
      switch (spec.power) {
        case 0: return gamma_p(n / 2.0, spec.c / 2.0);
        case -1: return gamma_p(n / 2.0 - 1.0, spec.c / 2.0) / (n - 2.0);
        default: return gamma_p(n / 2.0 - 2.0, spec.c / 2.0) / ((n - 2.0) * (n - 4.0));
      }
  }
  return 0.0;
}

double trace_product(const MatrixXd& a, const MatrixXd& b) { return (a.array() * b.transpose().array()).sum(); }

double min_real_eigenvalue(const MatrixXd& m) {
  Eigen::EigenSolver<MatrixXd> es(m, false);
  return es.eigenvalues().real().minCoeff();
}

}  // namespace

std::string MomentSpec::to_string() const {
  switch (kind) {
    case MomentKind::InverseFirst: return "inverse-first";
    case MomentKind::InverseSecond: return "inverse-second";
    case MomentKind::TruncBelow: {
      char buf[64];
      std::snprintf(buf, sizeof buf, "trunc-below(c=%g,power=%d)", c, power);
      return buf;
    }
  }
  return "?";
}

double nc_chi2_moment(MomentSpec spec, int df, double delta, double tol) {
  if (spec.kind == MomentKind::TruncBelow) {
    if (spec.power != 0 && spec.power != -1 && spec.power != -2) {
      throw Error(ErrorCode::InvalidArgument, "truncated moment power must be 0, -1 or -2");
    }
    if (!(spec.c > 0.0)) throw Error(ErrorCode::InvalidArgument, "truncation point must be positive");
  }
  if (df < 1) throw Error(ErrorCode::InvalidArgument, "degrees of freedom must be positive");
  if (!(delta >= 0.0) || !std::isfinite(delta)) throw Error(ErrorCode::InvalidArgument, "noncentrality must be finite and >= 0");
  if (!(tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tolerance must be positive");
  const int s = spec_power(spec);
  if (df <= 2 * s) {
    throw Error(ErrorCode::DivergentMoment, spec.to_string() + " is infinite for df=" + std::to_string(df));
  }

  const double lambda = delta / 2.0;
  if (lambda == 0.0) return central_moment(spec, df);
  const double log_lambda = std::log(lambda);
  double sum = 0.0;
  double m_next = central_moment(spec, df);
  for (int j = 0; j < kMomentMaxTerms; ++j) {
    const double m_j = m_next;
    const double w = std::exp(-lambda + j * log_lambda - std::lgamma(j + 1.0));
    sum += w * m_j;
    // Central moments decrease in the degrees of freedom, so the remaining
    // sum is at most m_{j+1} P(N > j).
    m_next = central_moment(spec, df + 2.0 * (j + 1));
    const double tail = boost::math::gamma_p(j + 1.0, lambda);
    if (m_next * tail < tol) return sum;
  }
  throw Error(ErrorCode::NonConvergence, spec.to_string() + " series did not converge within " +
                                             std::to_string(kMomentMaxTerms) + " terms (delta=" +
                                             std::to_string(delta) + ")");
}

double expect_term(const MomentTerm& term, int df, double delta, double tol) {
  if (term.below) return term.coef * nc_chi2_moment(MomentSpec::trunc_below(*term.below, term.power), df, delta, tol);
  switch (term.power) {
    case 0: return term.coef;
    case -1: return term.coef * nc_chi2_moment(MomentSpec::inverse_first(), df, delta, tol);
    case -2: return term.coef * nc_chi2_moment(MomentSpec::inverse_second(), df, delta, tol);
    default: throw Error(ErrorCode::InvalidArgument, "moment term power must be 0, -1 or -2");
  }
}

double expect_by_quadrature(const std::function<double(double)>& f, int df, double delta,
                            const std::vector<double>& breakpoints) {
  if (df < 1) throw Error(ErrorCode::InvalidArgument, "degrees of freedom must be positive");
  if (!(delta >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noncentrality must be >= 0");
  std::function<double(double)> pdf;
  if (delta == 0.0) {
    boost::math::chi_squared dist(df);
    pdf = [dist](double x) { return boost::math::pdf(dist, x); };
  } else {
    boost::math::non_central_chi_squared dist(df, delta);
    pdf = [dist](double x) { return boost::math::pdf(dist, x); };
  }
  auto g = [&](double x) {
    if (!(x > 0.0)) return 0.0;
    const double d = pdf(x);
    if (d == 0.0) return 0.0;
    // integrable singularity at 0: f * pdf overflows only for x so small that
    // the remaining mass is far below the tolerance
    const double v = f(x) * d;
    return std::isfinite(v) || x > 1e-100 ? v : 0.0;
  };

  std::vector<double> pts{0.0};
  for (double b : breakpoints) {
    if (b > 0.0 && std::isfinite(b)) pts.push_back(b);
  }
  pts.push_back(df + delta);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

  constexpr double tol = 1e-12;
  boost::math::quadrature::tanh_sinh<double> finite;
  boost::math::quadrature::exp_sinh<double> tail;
  double total = 0.0;
  try {
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) total += finite.integrate(g, pts[i], pts[i + 1], tol);
    total += tail.integrate(g, pts.back(), std::numeric_limits<double>::infinity(), tol);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::NonConvergence, std::string("quadrature failed: ") + e.what());
  }
  return total;
}

double expect_h(const ShrinkageFunction& h, int df, double delta, bool squared) {
  const auto& terms = squared ? h.h2_terms : h.h_terms;
  if (terms) {
    double s = 0.0;
    for (const MomentTerm& t : *terms) s += expect_term(t, df, delta);
    return s;
  }
  if (squared) {
    return expect_by_quadrature([&h](double x) { const double v = h(x); return v * v; }, df, delta, h.breakpoints);
  }
  return expect_by_quadrature(h.evaluate, df, delta, h.breakpoints);
}

AsymptoticScaffold AsymptoticScaffold::make(const MatrixXd& gamma, const MatrixXd& omega, const MatrixXd& R,
                                            const VectorXd& mu) {
  const Index p = gamma.rows();
  if (gamma.cols() != p || omega.rows() != p || omega.cols() != p || R.cols() != p || mu.size() != R.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "scaffold inputs have inconsistent sizes");
  }
  if (R.rows() < 1 || R.rows() > p) throw Error(ErrorCode::DimensionMismatch, "R must have 1..p rows");
  if (!full_row_rank(R)) throw Error(ErrorCode::SingularConstraintGram, "R is not of full row rank");

  AsymptoticScaffold s;
  s.gamma_ = symmetrize(gamma);
  s.omega_ = symmetrize(omega);
  s.R_ = R;
  s.mu_ = mu;
  const MatrixXd gi = spd_inverse(s.gamma_, ErrorCode::GammaSingular, "Gamma");
  s.j0_ = gi * R.transpose() * spd_inverse(symmetrize(R * gi * R.transpose()), ErrorCode::SingularConstraintGram, "R Gamma^-1 R'");
  const MatrixXd proj = MatrixXd::Identity(p, p) - s.j0_ * R;
  s.sigma11_ = symmetrize(gi * s.omega_ * gi);
  s.sigma12_ = s.sigma11_ * proj.transpose();
  s.sigma21_ = proj * s.sigma11_;
  s.sigma22_ = symmetrize(proj * s.sigma11_ * proj.transpose());
  const MatrixXd jr = s.j0_ * R;
  s.lambda11_ = symmetrize(jr * s.sigma11_ * jr.transpose());
  s.lambda12_ = jr * s.sigma12_;
  s.lambda21_ = s.sigma21_ * jr.transpose();
  // Var(delta~) from Var(delta^) = Var((delta^ - delta~) + delta~).
  s.lambda22_ = s.sigma11_ - s.lambda11_ - s.lambda12_ - s.lambda21_;
  s.a_ = symmetrize(R.transpose() *
                    spd_inverse(symmetrize(R * s.sigma11_ * R.transpose()), ErrorCode::SingularConstraintGram,
                                "R Sigma11 R'") *
                    R);
  s.mu1_ = -s.j0_ * mu;
  s.delta_ = std::max(0.0, s.mu1_.dot(s.a_ * s.mu1_));
  return s;
}

AsymptoticScaffold AsymptoticScaffold::with_delta(double delta) const {
  if (!(delta >= 0.0) || !std::isfinite(delta)) throw Error(ErrorCode::InvalidArgument, "Delta must be finite and >= 0");
  AsymptoticScaffold s = *this;
  VectorXd dir = mu_;
  if (delta_ == 0.0) dir = VectorXd::Unit(k(), 0);
  const VectorXd m1 = -j0_ * dir;
  const double base = m1.dot(a_ * m1);
  s.mu_ = dir * std::sqrt(delta / base);
  s.mu1_ = -j0_ * s.mu_;
  s.delta_ = std::max(0.0, s.mu1_.dot(a_ * s.mu1_));
  return s;
}

AsymptoticScaffold::Residuals AsymptoticScaffold::invariant_residuals() const {
  Residuals r{};
  r.a_lambda_a = (a_ * lambda11_ * a_ - a_).norm() / std::max(a_.norm(), 1e-300);
  r.lambda_a_lambda = (lambda11_ * a_ * lambda11_ - lambda11_).norm() / std::max(lambda11_.norm(), 1e-300);
  r.lambda_a_mu = (lambda11_ * a_ * mu1_ - mu1_).norm() / std::max(mu1_.norm(), 1.0);
  r.lambda22_sigma22 = (lambda22_ - sigma22_).norm();
  r.lambda21_transpose = (lambda21_ - lambda12_.transpose()).norm();
  return r;
}

WeightSpec::WeightSpec(MatrixXd w_star_in, const AsymptoticScaffold& scaffold) : w_star(std::move(w_star_in)) {
  if (w_star.rows() != scaffold.p() || w_star.cols() != scaffold.p()) {
    throw Error(ErrorCode::DimensionMismatch, "W* must be p x p");
  }
  const MatrixXd half = sym_sqrt(scaffold.a());
  w = symmetrize(half * symmetrize(w_star) * half);
}

WeightSpec WeightSpec::direct(MatrixXd w_in) {
  WeightSpec ws;
  ws.w = symmetrize(w_in);
  ws.w_star = ws.w;
  return ws;
}

double adr_unrestricted(const AsymptoticScaffold& s, const WeightSpec& w) { return trace_product(w.w, s.sigma11()); }

double adr_restricted(const AsymptoticScaffold& s, const WeightSpec& w) {
  return trace_product(w.w, s.sigma22()) + s.mu1().dot(w.w * s.mu1());
}

AdrBreakdown adr_class(const ShrinkageFunction& h, const AsymptoticScaffold& s, const WeightSpec& w) {
  const int k = s.k();
  const double D = s.delta();
  const VectorXd& m1 = s.mu1();
  const double a = m1.dot(w.w * m1);
  const double b = m1.dot(s.a() * s.lambda12() * w.w * m1);
  const double cross = trace_product(s.lambda12() * w.w * s.lambda11(), s.a());
  const double d = trace_product(w.w, s.lambda11());
  const double h2 = expect_h(h, k + 2, D);
  const double h4 = expect_h(h, k + 4, D);
  const double hh2 = expect_h(h, k + 2, D, true);
  const double hh4 = expect_h(h, k + 4, D, true);

  AdrBreakdown out;
  out.terms = {adr_restricted(s, w), -2.0 * h2 * a, -2.0 * h2 * b, 2.0 * h2 * cross, 2.0 * h4 * b, hh2 * d, hh4 * a};
  for (double t : out.terms) out.total += t;
  return out;
}

namespace {

struct JsPieces {
  double js, a, b, c, d;
  int k;
  double D;
};

JsPieces james_stein_pieces(const AsymptoticScaffold& s, const WeightSpec& w) {
  const int k = s.k();
  if (k <= 2) throw Error(ErrorCode::KTooSmall, "shrinkage ADR needs k > 2, got k=" + std::to_string(k));
  const double D = s.delta();
  const VectorXd& m1 = s.mu1();
  const double a = m1.dot(w.w * m1);
  const double b = m1.dot(s.a() * s.lambda12() * w.w * m1);
  const double c = trace_product(w.w, s.lambda12());
  const double d = trace_product(w.w, s.lambda11());
  const double e2 = nc_chi2_moment(MomentSpec::inverse_first(), k + 2, D);
  const double e44 = nc_chi2_moment(MomentSpec::inverse_second(), k + 4, D);
  const double e24 = nc_chi2_moment(MomentSpec::inverse_second(), k + 2, D);
  const double km2 = k - 2;
  const double js = adr_unrestricted(s, w) - 2.0 * km2 * e2 * (c + d) + (k * k - 4.0) * e44 * a + km2 * km2 * e24 * d +
                    4.0 * km2 * e44 * b;
  return {js, a, b, c, d, k, D};
}

}  // namespace

double adr_james_stein(const AsymptoticScaffold& s, const WeightSpec& w) { return james_stein_pieces(s, w).js; }

double adr_positive_part(const AsymptoticScaffold& s, const WeightSpec& w) {
  const JsPieces p = james_stein_pieces(s, w);
  const double c = p.k - 2.0;
  auto tr = [&](int df, int power) { return nc_chi2_moment(MomentSpec::trunc_below(c, power), df, p.D); };
  const double t2 = tr(p.k + 2, 0) - c * tr(p.k + 2, -1);
  const double t4 = tr(p.k + 4, 0) - c * tr(p.k + 4, -1);
  const double u2 = tr(p.k + 2, 0) - 2.0 * c * tr(p.k + 2, -1) + c * c * tr(p.k + 2, -2);
  const double u4 = tr(p.k + 4, 0) - 2.0 * c * tr(p.k + 4, -1) + c * c * tr(p.k + 4, -2);
  return p.js + 2.0 * t2 * p.a + 2.0 * t2 * p.b - 2.0 * t2 * p.c - 2.0 * t4 * p.b - u2 * p.d - u4 * p.a;
}

DominanceReport dominance_check(const AsymptoticScaffold& s, const WeightSpec& w) {
  const int k = s.k();
  if (k <= 2) throw Error(ErrorCode::KTooSmall, "dominance conditions need k > 2, got k=" + std::to_string(k));
  const MatrixXd wl11 = w.w * s.lambda11();
  const MatrixXd wl12 = w.w * s.lambda12();
  DominanceReport r;
  r.trace_wl12 = wl12.trace();
  r.c1 = wl11.trace() + r.trace_wl12;
  const MatrixXd half = sym_sqrt(s.a());
  const MatrixXd pi0 = half * (s.lambda11() + 4.0 * s.lambda12() / (k + 2.0)) * wl11 * half;
  r.pi_star_max_eig = Eigen::SelfAdjointEigenSolver<MatrixXd>(0.5 * (pi0 + pi0.transpose()), Eigen::EigenvaluesOnly)
                          .eigenvalues()
                          .maxCoeff();
  r.c2_bound = (k + 2.0) * r.pi_star_max_eig / 4.0;
  r.c2_bound_sufficient = (k + 2.0) * r.pi_star_max_eig / 2.0;
  r.eig_min_terms = {-min_real_eigenvalue(wl11), min_real_eigenvalue(wl12)};

  // Exact zeros (e.g. L12 = 0) come out at rounding level.
  const double slack = 1e-10 * std::max(1.0, w.w.norm() * s.sigma11().norm());
  const bool c_trace = r.trace_wl12 <= slack;
  const bool c_eig = r.eig_min_terms[0] <= r.eig_min_terms[1] + slack;
  const bool c_bound = r.c1 + slack >= std::max(-r.trace_wl12, r.c2_bound);
  const bool c_bound_suff = r.c1 + slack >= std::max(-r.trace_wl12, r.c2_bound_sufficient);
  if (!c_trace) r.violated.emplace_back("trace(W L12) <= 0");
  if (!c_eig) r.violated.emplace_back("-ch_min(W L11) <= ch_min(W L12)");
  if (!c_bound) r.violated.emplace_back("trace(W(L11+L12)) >= max(-trace(W L12), (k+2) ch_max(Pi*)/4)");
  r.holds = c_trace && c_eig && c_bound;
  r.holds_sufficient = c_trace && c_eig && c_bound_suff;
  return r;
}

std::vector<AdrPoint> adr_curve(const AsymptoticScaffold& s, const WeightSpec& w, const std::vector<double>& grid,
                                Exec exec) {
  std::vector<AdrPoint> out(grid.size());
  const bool dom = s.k() > 2 && dominance_check(s, w).holds;
  auto one = [&](std::size_t i) {
    const AsymptoticScaffold at = s.with_delta(grid[i]);
    AdrPoint pt{grid[i], adr_unrestricted(at, w), adr_restricted(at, w), 0.0, 0.0, dom};
    if (s.k() > 2) {
      pt.js = adr_james_stein(at, w);
      pt.pp = adr_positive_part(at, w);
    } else {
      pt.js = pt.pp = std::numeric_limits<double>::quiet_NaN();
    }
    out[i] = pt;
  };
  parallel_for(static_cast<std::int64_t>(grid.size()), exec, [&](std::int64_t i) { one(static_cast<std::size_t>(i)); });
  return out;
}

}  // namespace cpshrink
