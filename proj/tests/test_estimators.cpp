#include <doctest.h>

#include <random>

#include "cpshrink/estimators.hpp"
#include "support.hpp"

using namespace cpshrink;
namespace ts = testing_support;

namespace {

PluginMatrices identity_plugin(int p, int k) {
  PluginMatrices pl;
  pl.a_hat = MatrixXd::Identity(p, p);
  pl.k = k;
  pl.rank_a = k;
  return pl;
}

CoefEstimate estimate(VectorXd d, EstimateKind kind, int T = 10) {
  return {std::move(d), Partition::none(T), kind, kind == EstimateKind::Unrestricted ? "ue" : "re", 0.0};
}

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST_SUITE("estimators") {

TEST_CASE("exact recovery without noise") {
  const auto d = ts::random_piecewise(50, 3, {20, 35}, 0.0, 11);
  const auto fit = fit_unrestricted(d, Partition({20, 35}, 50));
  const auto oracle = ts::ols(ts::stacked_design(d.z(), {20, 35}), d.y());
  CHECK((fit.delta - oracle.delta).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(fit.ssr <= 1e-18 * d.y().squaredNorm() + 1e-20);

  const RegressionData scalar(2.0 * VectorXd::LinSpaced(7, 1.0, 7.0), VectorXd::LinSpaced(7, 1.0, 7.0));
  CHECK(fit_unrestricted(scalar, Partition::none(7)).delta(0) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("rank deficient segments are reported with 1-based times") {
  MatrixXd z = MatrixXd::Ones(10, 2);
  z.col(1).setLinSpaced(10, 0.0, 1.0);
  z.block(0, 1, 4, 1).setConstant(0.5);
  const RegressionData d(VectorXd::Ones(10), z);
  try {
    fit_unrestricted(d, Partition({4}, 10));
    FAIL("expected SegmentRankDeficient");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SegmentRankDeficient);
    CHECK(std::string(e.what()).find("1..4") != std::string::npos);
  }
}

TEST_CASE("restricted fit against the null-space oracle") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto eng = ts::engine(700 + s);
    const auto d = ts::random_piecewise(45, 3, {15, 30}, 1.0, 700 + s);
    const Partition p({15, 30}, 45);
    const int k = 1 + static_cast<int>(s % 5);
    const Restriction res(ts::gaussian_matrix(k, 9, eng), ts::gaussian_matrix(k, 1, eng).col(0));
    const auto re = fit_restricted(d, p, res);
    const auto oracle = ts::nullspace_restricted(ts::stacked_design(d.z(), {15, 30}), d.y(), res.R(), res.r());
    CHECK(res.violation(re.delta) <= 1e-8 * (1.0 + res.r().cwiseAbs().maxCoeff()));
    CHECK(ts::rel_err(re.ssr, oracle.ssr) <= 1e-8);
    CHECK((re.delta - oracle.delta).norm() <= 1e-7 * std::max(1.0, oracle.delta.norm()));
    CHECK(re.ssr >= fit_unrestricted(d, p).ssr);
  }
}

TEST_CASE("restricted fit special cases") {
  const auto d = ts::random_piecewise(30, 2, {15}, 0.5, 5);
  const Partition p({15}, 30);
  CHECK(fit_restricted(d, p, Restriction(MatrixXd::Identity(4, 4), VectorXd::Zero(4))).delta.norm() <= 1e-12);
  const auto ue = fit_unrestricted(d, p);
  MatrixXd R(2, 4);
  R << 1, 0, -1, 0, 0, 2, 0, 1;
  const auto re = fit_restricted(d, p, Restriction(R, R * ue.delta));
  CHECK((re.delta - ue.delta).norm() <= 1e-9 * ue.delta.norm());
  MatrixXd dup(2, 4);
  dup << 1, 0, -1, 0, 2, 0, -2, 0;
  CHECK(ts::error_code([&] { fit_restricted(d, p, Restriction(dup, VectorXd::Zero(2))); }) ==
        ErrorCode::SingularConstraintGram);
  CHECK(ts::error_code([&] { fit_restricted(d, p, Restriction(MatrixXd::Identity(3, 3), VectorXd::Zero(3))); }) ==
        ErrorCode::DimensionMismatch);
}

TEST_CASE("gamma hat") {
  const RegressionData one(VectorXd::Zero(8), MatrixXd::Ones(8, 1));
  CHECK(estimate_gamma(build_design(one, Partition::none(8)))(0, 0) == doctest::Approx(1.0));
  const MatrixXd g = estimate_gamma(build_design(one, Partition({4}, 8)));
  CHECK(g(0, 0) == doctest::Approx(0.5));
  CHECK(g(1, 1) == doctest::Approx(0.5));
  CHECK(g(0, 1) == 0.0);
  const RegressionData flat(VectorXd::Zero(8), MatrixXd::Ones(8, 2));
  CHECK(ts::error_code([&] { estimate_gamma(build_design(flat, Partition::none(8))); }) == ErrorCode::GammaSingular);
}

TEST_CASE("gamma hat converges to the block proportions") {
  const int T = 20000;
  auto eng = ts::engine(31);
  MatrixXd z = ts::gaussian_matrix(T, 2, eng);
  z.col(0).array() += 1.0;
  const MatrixXd g = estimate_gamma(build_design(RegressionData(VectorXd::Zero(T), z), Partition({T / 4}, T)));
  MatrixXd ezz(2, 2);
  ezz << 2, 0, 0, 1;  // E[z z'] for z = (1 + e1, e2)
  CHECK((g.topLeftCorner(2, 2) - 0.25 * ezz).norm() <= 0.03);
  CHECK((g.bottomRightCorner(2, 2) - 0.75 * ezz).norm() <= 0.05);
}

TEST_CASE("omega hat") {
  const RegressionData one(VectorXd::Zero(6), MatrixXd::Ones(6, 1));
  const auto design = build_design(one, Partition::none(6));
  CHECK(estimate_omega(design, VectorXd::Constant(6, 3.0), OmegaMethod::hc0())(0, 0) == doctest::Approx(9.0));
  CHECK(ts::error_code([&] { estimate_omega(design, VectorXd::Zero(5), OmegaMethod::hc0()); }) ==
        ErrorCode::DimensionMismatch);
  CHECK(default_hac_bandwidth(100) == 4);
  CHECK(default_hac_bandwidth(500) == 5);
  CHECK(OmegaMethod::hac(3).to_string() == "hac(3)");
}

TEST_CASE("HC0 approaches sigma^2 Gamma for independent errors") {
  const int T = 20000;
  auto eng = ts::engine(41);
  const MatrixXd z = ts::gaussian_matrix(T, 3, eng);
  const VectorXd u = 1.5 * ts::gaussian_matrix(T, 1, eng).col(0);
  const auto design = build_design(RegressionData(u, z), Partition::none(T));
  const MatrixXd om = estimate_omega(design, u, OmegaMethod::hc0());
  const MatrixXd target = 2.25 * estimate_gamma(design);
  CHECK(relative_difference(om, target) <= 0.05);
}

TEST_CASE("HAC is closer to the long-run variance than HC0 under AR(1) errors") {
  // innovations N(0,1), phi = 0.5: long-run variance 1/(1-phi)^2 = 4
  const int T = 4000;
  const double phi = 0.5;
  double err_hac = 0.0, err_hc0 = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto eng = ts::engine(900 + s);
    std::normal_distribution<double> nd;
    VectorXd u(T);
    double prev = nd(eng) / std::sqrt(1 - phi * phi);
    for (int t = 0; t < T; ++t) u(t) = prev = phi * prev + nd(eng);
    const auto design = build_design(RegressionData(u, MatrixXd::Ones(T, 1)), Partition::none(T));
    err_hac += std::abs(estimate_omega(design, u, OmegaMethod::hac())(0, 0) - 4.0);
    err_hc0 += std::abs(estimate_omega(design, u, OmegaMethod::hc0())(0, 0) - 4.0);
  }
  CHECK(err_hac < err_hc0);
  CHECK(err_hac / 10 < 1.0);
}

TEST_CASE("shrinkage functions") {
  const auto js3 = make_james_stein(3);
  CHECK(js3(1.0) == 0.0);
  CHECK(js3(1e12) == doctest::Approx(1.0));
  const auto pp4 = make_positive_part(4);
  for (double x : {0.1, 1.0, 2.0, 2.5, 4.0, 50.0}) {
    CHECK(pp4(x) >= 0.0);
    CHECK(pp4(x) < 1.0);
    CHECK(pp4(x) == std::max(0.0, make_james_stein(4)(x)));
  }
  CHECK(ts::error_code([] { make_james_stein(2); }) == ErrorCode::KTooSmall);
  CHECK(ts::error_code([] { make_positive_part(1); }) == ErrorCode::KTooSmall);
  CHECK(ts::error_code([] { make_pretest(4, 1.0); }) == ErrorCode::InvalidArgument);
  CHECK(make_constant(1.0).name == "ue");
  CHECK(make_constant(0.0).name == "re");
}

TEST_CASE("pretest flips at the chi-square quantile") {
  // 0.95 quantile of chi-square(4), from an independent implementation
  const double q = 9.48772903678115;
  const auto pt = make_pretest(4, 0.05);
  CHECK(pt(q - 1e-9) == 0.0);
  CHECK(pt(q + 1e-9) == 1.0);
  CHECK(pt(9.4) == 0.0);
  CHECK(pt(9.49) == 1.0);
  REQUIRE(pt.breakpoints.size() == 1);
  CHECK(pt.breakpoints[0] == doctest::Approx(q).epsilon(1e-12));
}

TEST_CASE("shrinkage estimate on constructed inputs") {
  const auto plugin = identity_plugin(4, 4);
  const auto re = estimate(VectorXd::Zero(4), EstimateKind::Restricted);
  SUBCASE("James-Stein at psi = 4 is the midpoint") {
    const auto ue = estimate(vec({2, 0, 0, 0}), EstimateKind::Unrestricted);
    CHECK(psi_statistic(ue, re, plugin, 1) == 4.0);
    const auto b = shrinkage_estimate(ue, re, plugin, make_james_stein(4), 1);
    CHECK(b.delta(0) == doctest::Approx(1.0));
    CHECK(b.kind == EstimateKind::Shrinkage);
  }
  SUBCASE("positive part at psi = 1 collapses to the restricted fit") {
    const auto ue = estimate(vec({1, 0, 0, 0}), EstimateKind::Unrestricted);
    CHECK(shrinkage_estimate(ue, re, plugin, make_positive_part(4), 1).delta == re.delta);
  }
  SUBCASE("constant h reproduces UE and RE") {
    const auto ue = estimate(vec({1, -2, 0.5, 3}), EstimateKind::Unrestricted);
    CHECK(shrinkage_estimate(ue, re, plugin, make_constant(1.0), 7).delta == ue.delta);
    CHECK(shrinkage_estimate(ue, re, plugin, make_constant(0.0), 7).delta == re.delta);
  }
  SUBCASE("psi = 0 never evaluates h") {
    const auto h = make_custom("boom", [](double) -> double { throw std::logic_error("evaluated"); });
    CHECK(shrinkage_estimate(re, re, plugin, h, 5).delta == re.delta);
  }
  SUBCASE("errors") {
    const auto ue = estimate(vec({1, 0, 0, 0}), EstimateKind::Unrestricted);
    CHECK(ts::error_code([&] { shrinkage_estimate(ue, re, identity_plugin(4, 2), make_james_stein(3), 1); }) ==
          ErrorCode::KTooSmall);
    auto moved = re;
    moved.partition = Partition({5}, 10);
    CHECK(ts::error_code([&] { psi_statistic(ue, moved, plugin, 1); }) == ErrorCode::MismatchedPartitions);
  }
}

TEST_CASE("plug-ins and the estimators on data") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto d = ts::random_piecewise(80, 3, {40}, 1.0, 1000 + s);
    const Partition p({40}, 80);
    const auto res = equal_segments_restriction(1, 3, 1, 2);
    const auto ue = fit_unrestricted(d, p);
    const auto re = fit_restricted(d, p, res);
    const auto pl = estimate_plugins(d, p, res, OmegaMethod::hc0());
    CHECK(pl.k == 3);
    CHECK(pl.rank_a == 3);

    // naive route through explicit inverses
    const auto design = build_design(d, p);
    const MatrixXd gi = estimate_gamma(design).inverse();
    const MatrixXd om = estimate_omega(design, d.y() - design.zbar * ue.delta, OmegaMethod::hc0());
    const MatrixXd naive = res.R().transpose() * (res.R() * gi * om * gi * res.R().transpose()).inverse() * res.R();
    CHECK(relative_difference(pl.a_hat, naive) <= 1e-8);
    CHECK(relative_difference(pl.omega_hat, om) <= 1e-12);

    const double psi = psi_statistic(ue, re, pl, 80);
    CHECK(psi >= 0.0);
    for (const auto& h : {make_james_stein(3), make_positive_part(3), make_constant(0.3)}) {
      const auto b = shrinkage_estimate(ue, re, pl, h, 80);
      const VectorXd u = ue.delta - re.delta;
      const VectorXd v = b.delta - re.delta;
      // v is h(psi) u
      CHECK((v - h(psi) * u).norm() <= 1e-10 * std::max(1.0, u.norm()));
      if (h.name == "pp") CHECK(v.dot(u) >= 0.0);
    }
  }
}

TEST_CASE("psi vanishes when the unrestricted fit satisfies the restriction") {
  const auto d = ts::random_piecewise(60, 2, {30}, 1.0, 77);
  const Partition p({30}, 60);
  const auto ue = fit_unrestricted(d, p);
  MatrixXd R(1, 4);
  R << 1, 1, -1, 0;
  const Restriction res(R, R * ue.delta);
  const auto pl = estimate_plugins(d, p, res);
  CHECK(psi_statistic(ue, fit_restricted(d, p, res), pl, 60) <= 1e-16);
  const Restriction off(R, R * ue.delta + VectorXd::Constant(1, 0.5));
  CHECK(psi_statistic(ue, fit_restricted(d, p, off), estimate_plugins(d, p, off), 60) > 1e-3);
}

}
