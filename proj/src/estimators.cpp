#include "cpshrink/estimators.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>

#include "cpshrink/detail/least_squares.hpp"

namespace cpshrink {

namespace {

void check_partition(const RegressionData& data, const Partition& partition) {
  if (partition.T() != data.T()) throw Error(ErrorCode::InvalidPartition, "partition T does not match data");
}

// Clips negative eigenvalues of a symmetric estimate, warning when any are
// materially negative.
MatrixXd clip_psd(const MatrixXd& m) {
  const MatrixXd s = symmetrize(m);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(s);
  const VectorXd& ev = eig.eigenvalues();
  const double top = std::max(ev.cwiseAbs().maxCoeff(), 0.0);
  if (ev.minCoeff() >= 0.0) return s;
  if (ev.minCoeff() < -kPinvTolerance * top) warn("omega estimate had negative eigenvalues; clipped to zero");
  return eig.eigenvectors() * ev.cwiseMax(0.0).asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

CoefEstimate fit_unrestricted(const RegressionData& data, const Partition& partition) {
  check_partition(data, partition);
  detail::FactorCache cache(data);
  const auto sol = detail::solve_unrestricted(detail::partition_factors(cache, partition));
  return {sol.delta, partition, EstimateKind::Unrestricted, "ue", sol.ssr};
}

CoefEstimate fit_restricted(const RegressionData& data, const Partition& partition, const Restriction& restriction) {
  check_partition(data, partition);
  detail::FactorCache cache(data);
  const auto factors = detail::partition_factors(cache, partition);
  const auto ue = detail::solve_unrestricted(factors);
  const auto re = detail::solve_restricted(factors, ue, restriction);
  // SSR evaluated directly at the returned coefficients.
  const SegmentedDesign design = build_design(data, partition);
  const double ssr = (data.y() - design.zbar * re.delta).squaredNorm();
  return {re.delta, partition, EstimateKind::Restricted, "re", ssr};
}

std::string OmegaMethod::to_string() const {
  if (kind == Kind::HC0) return "hc0";
  return bandwidth < 0 ? "hac" : "hac(" + std::to_string(bandwidth) + ")";
}

int default_hac_bandwidth(int T) { return static_cast<int>(std::floor(4.0 * std::pow(T / 100.0, 2.0 / 9.0))); }

MatrixXd estimate_gamma(const SegmentedDesign& design) {
  if (!validate_segment_rank(design)) throw Error(ErrorCode::GammaSingular, "a regime's regressor block is rank deficient");
  const double T = static_cast<double>(design.zbar.rows());
  return symmetrize(design.zbar.transpose() * design.zbar / T);
}

MatrixXd omega_from_scores(const MatrixXd& scores, OmegaMethod method) {
  const Index T = scores.rows();
  MatrixXd omega = scores.transpose() * scores;
  if (method.kind == OmegaMethod::Kind::HAC) {
    const int B = method.bandwidth < 0 ? default_hac_bandwidth(static_cast<int>(T)) : method.bandwidth;
    for (int l = 1; l <= B && l < T; ++l) {
      const double w = 1.0 - static_cast<double>(l) / (B + 1);
      const MatrixXd g = scores.bottomRows(T - l).transpose() * scores.topRows(T - l);
      omega += w * (g + g.transpose());
    }
  }
  return clip_psd(omega / static_cast<double>(T));
}

MatrixXd estimate_omega(const SegmentedDesign& design, const VectorXd& residuals, OmegaMethod method) {
  if (residuals.size() != design.zbar.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "residual vector length " + std::to_string(residuals.size()) +
                                                  " differs from T=" + std::to_string(design.zbar.rows()));
  }
  return omega_from_scores(residuals.asDiagonal() * design.zbar, method);
}

PluginMatrices estimate_plugins(const RegressionData& data, const Partition& partition,
                                const Restriction& restriction, OmegaMethod method) {
  check_partition(data, partition);
  const SegmentedDesign design = build_design(data, partition);
  if (restriction.cols() != design.zbar.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "restriction columns do not match (m+1)q");
  }
  detail::FactorCache cache(data);
  const auto factors = detail::partition_factors(cache, partition);
  const auto ue = detail::solve_unrestricted(factors);
  const VectorXd u = data.y() - design.zbar * ue.delta;
  const double T = data.T();

  PluginMatrices out;
  out.gamma_hat = estimate_gamma(design);
  out.omega_method = method;
  out.k = restriction.k();
  const MatrixXd scores = u.asDiagonal() * design.zbar;
  out.omega_hat = omega_from_scores(scores, method);

  // With Zbar = Q r, Gamma^-1 Omega Gamma^-1 = T^2 r^-1 Omega~ r^-T where
  // Omega~ is the same estimator on whitened scores r^-T s_t. This avoids
  // forming Gamma^-1 for badly scaled regressors.
  const MatrixXd whitened = detail::apply_r_inverse_transpose(factors, scores.transpose()).transpose();
  const MatrixXd omega_w = omega_from_scores(whitened, method);
  const MatrixXd mt = detail::apply_r_inverse_transpose(factors, restriction.R().transpose());
  const MatrixXd middle = symmetrize(T * T * (mt.transpose() * omega_w * mt));
  out.rank_a = static_cast<int>(psd_rank(middle));
  if (out.rank_a < out.k) {
    warn("R Gamma^-1 Omega Gamma^-1 R' has rank " + std::to_string(out.rank_a) + " < k=" + std::to_string(out.k) +
         "; using its pseudo-inverse");
  }
  out.a_hat = symmetrize(restriction.R().transpose() * sym_pinv(middle) * restriction.R());
  return out;
}

double psi_statistic(const CoefEstimate& ue, const CoefEstimate& re, const PluginMatrices& plugin, int T) {
  if (!(ue.partition == re.partition)) {
    throw Error(ErrorCode::MismatchedPartitions, "UE at " + ue.partition.to_string() + " but RE at " +
                                                     re.partition.to_string());
  }
  const VectorXd d = re.delta - ue.delta;
  return std::max(0.0, static_cast<double>(T) * d.dot(plugin.a_hat * d));
}

ShrinkageFunction make_constant(double c) {
  ShrinkageFunction f;
  f.name = c == 1.0 ? "ue" : (c == 0.0 ? "re" : "constant");
  f.evaluate = [c](double) { return c; };
  f.h_terms = std::vector<MomentTerm>{{c, 0, {}}};
  f.h2_terms = std::vector<MomentTerm>{{c * c, 0, {}}};
  return f;
}

ShrinkageFunction make_james_stein(int k) {
  if (k <= 2) throw Error(ErrorCode::KTooSmall, "James-Stein shrinkage needs k > 2, got k=" + std::to_string(k));
  const double a = k - 2;
  ShrinkageFunction f;
  f.name = "js";
  f.evaluate = [a](double x) { return 1.0 - a / x; };
  f.requires_k_gt_2 = true;
  f.h_terms = std::vector<MomentTerm>{{1.0, 0, {}}, {-a, -1, {}}};
  f.h2_terms = std::vector<MomentTerm>{{1.0, 0, {}}, {-2.0 * a, -1, {}}, {a * a, -2, {}}};
  return f;
}

ShrinkageFunction make_positive_part(int k) {
  if (k <= 2) throw Error(ErrorCode::KTooSmall, "positive-part shrinkage needs k > 2, got k=" + std::to_string(k));
  const double a = k - 2;
  ShrinkageFunction f;
  f.name = "pp";
  f.evaluate = [a](double x) { return std::max(0.0, 1.0 - a / x); };
  f.requires_k_gt_2 = true;
  f.breakpoints = {a};
  // h+ = h - h 1{x < k-2}, and likewise for the square.
  f.h_terms = std::vector<MomentTerm>{{1.0, 0, {}}, {-a, -1, {}}, {-1.0, 0, a}, {a, -1, a}};
  f.h2_terms = std::vector<MomentTerm>{{1.0, 0, {}}, {-2.0 * a, -1, {}}, {a * a, -2, {}},
                                       {-1.0, 0, a}, {2.0 * a, -1, a},   {-a * a, -2, a}};
  return f;
}

ShrinkageFunction make_pretest(int k, double alpha) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "pretest needs k >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "pretest alpha must lie in (0, 1)");
  const double crit = boost::math::quantile(boost::math::chi_squared(k), 1.0 - alpha);
  ShrinkageFunction f;
  f.name = "pretest";
  f.evaluate = [crit](double x) { return x > crit ? 1.0 : 0.0; };
  f.breakpoints = {crit};
  f.h_terms = std::vector<MomentTerm>{{1.0, 0, {}}, {-1.0, 0, crit}};
  f.h2_terms = f.h_terms;
  return f;
}

ShrinkageFunction make_custom(std::string name, std::function<double(double)> h, std::vector<double> breakpoints) {
  ShrinkageFunction f;
  f.name = std::move(name);
  f.evaluate = std::move(h);
  f.breakpoints = std::move(breakpoints);
  return f;
}

CoefEstimate shrinkage_estimate(const CoefEstimate& ue, const CoefEstimate& re, const PluginMatrices& plugin,
                                const ShrinkageFunction& h, int T) {
  if (h.requires_k_gt_2 && plugin.k <= 2) {
    throw Error(ErrorCode::KTooSmall, h.name + " needs k > 2, got k=" + std::to_string(plugin.k));
  }
  const double psi = psi_statistic(ue, re, plugin, T);
  CoefEstimate out{re.delta, re.partition, EstimateKind::Shrinkage, h.name, 0.0};
  if (psi > 0.0) out.delta = re.delta + h(psi) * (ue.delta - re.delta);
  return out;
}

}  // namespace cpshrink
