#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cpshrink/model_core.hpp"

namespace cpshrink {

enum class EstimateKind { Unrestricted, Restricted, Shrinkage };

struct CoefEstimate {
  VectorXd delta;
  Partition partition;
  EstimateKind kind = EstimateKind::Unrestricted;
  std::string name;  // "ue", "re", or the shrinkage function's name
  double ssr = 0.0;  // left at 0 for shrinkage estimates (no data at hand)
};

CoefEstimate fit_unrestricted(const RegressionData& data, const Partition& partition);
CoefEstimate fit_restricted(const RegressionData& data, const Partition& partition, const Restriction& restriction);

struct OmegaMethod {
  enum class Kind { HC0, HAC };
  Kind kind = Kind::HC0;
  int bandwidth = -1;  // HAC lag truncation; -1 picks default_hac_bandwidth(T)

  static OmegaMethod hc0() { return {}; }
  static OmegaMethod hac(int bandwidth = -1) { return {Kind::HAC, bandwidth}; }
  std::string to_string() const;
};

/// floor(4 (T/100)^(2/9)).
int default_hac_bandwidth(int T);

/// Gamma-hat = Zbar'Zbar / T. Throws GammaSingular when a regime block is
/// rank deficient.
MatrixXd estimate_gamma(const SegmentedDesign& design);

/// HC0: T^-1 sum u_t^2 zbar_t zbar_t'. HAC: Bartlett-weighted autocovariances
/// of u_t zbar_t. Symmetrized; negative eigenvalues clipped with a warning.
MatrixXd estimate_omega(const SegmentedDesign& design, const VectorXd& residuals, OmegaMethod method);

/// Same estimator applied to arbitrary score rows s_t (T x p).
MatrixXd omega_from_scores(const MatrixXd& scores, OmegaMethod method);

struct PluginMatrices {
  MatrixXd gamma_hat;
  MatrixXd omega_hat;
  MatrixXd a_hat;  // R' (R Gamma^-1 Omega Gamma^-1 R')^+ R
  OmegaMethod omega_method;
  int k = 0;
  int rank_a = 0;  // rank of the middle matrix; < k triggers a warning
};

/// Plug-ins at a partition, using the unrestricted residuals there.
PluginMatrices estimate_plugins(const RegressionData& data, const Partition& partition,
                                const Restriction& restriction, OmegaMethod method = {});

/// psi = T (delta~ - delta^)' A (delta~ - delta^).
double psi_statistic(const CoefEstimate& ue, const CoefEstimate& re, const PluginMatrices& plugin, int T);

/// c * x^power * 1{x < below} (indicator absent when `below` is empty).
struct MomentTerm {
  double coef = 0.0;
  int power = 0;  // 0, -1 or -2
  std::optional<double> below;
};

struct ShrinkageFunction {
  std::string name;
  std::function<double(double)> evaluate;
  bool requires_k_gt_2 = false;
  // Points where h is discontinuous or kinked; used by quadrature.
  std::vector<double> breakpoints;
  // When h and h^2 are sums of MomentTerm, risk evaluation can use exact
  // series kernels instead of quadrature.
  std::optional<std::vector<MomentTerm>> h_terms;
  std::optional<std::vector<MomentTerm>> h2_terms;

  double operator()(double x) const { return evaluate(x); }
};

ShrinkageFunction make_constant(double c);
ShrinkageFunction make_james_stein(int k);
ShrinkageFunction make_positive_part(int k);
/// h(x) = 1{x > chi2_{k, 1-alpha} quantile}.
ShrinkageFunction make_pretest(int k, double alpha);
ShrinkageFunction make_custom(std::string name, std::function<double(double)> h, std::vector<double> breakpoints = {});

/// delta~ + h(psi)(delta^ - delta~); returns delta~ when psi == 0.
CoefEstimate shrinkage_estimate(const CoefEstimate& ue, const CoefEstimate& re, const PluginMatrices& plugin,
                                const ShrinkageFunction& h, int T);

}  // namespace cpshrink
