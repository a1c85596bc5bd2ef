#pragma once

#include <algorithm>
#include <array>
#include <functional>
#include <string>
#include <vector>

#include "cpshrink/estimators.hpp"
#include "cpshrink/exec.hpp"

namespace cpshrink {

inline constexpr double kMomentTolerance = 1e-10;
inline constexpr int kMomentMaxTerms = 100'000;

enum class MomentKind { InverseFirst, InverseSecond, TruncBelow };

struct MomentSpec {
  MomentKind kind = MomentKind::InverseFirst;
  double c = 0.0;  // TruncBelow threshold
  int power = 0;   // TruncBelow: 0, -1 or -2

  static MomentSpec inverse_first() { return {MomentKind::InverseFirst, 0.0, 0}; }
  static MomentSpec inverse_second() { return {MomentKind::InverseSecond, 0.0, 0}; }
  static MomentSpec trunc_below(double c, int power) { return {MomentKind::TruncBelow, c, power}; }
  std::string to_string() const;
};

/// E[X^-1], E[X^-2] or E[X^power 1{X < c}] for X ~ noncentral chi-square(df,
/// delta), summed as a Poisson(delta/2) mixture of central moments until the
/// tail bound drops below tol. Throws DivergentMoment, NonConvergence.
double nc_chi2_moment(MomentSpec spec, int df, double delta, double tol = kMomentTolerance);

/// E[term(X)] for one MomentTerm.
double expect_term(const MomentTerm& term, int df, double delta, double tol = kMomentTolerance);

/// E[f(X)] by adaptive quadrature against the noncentral density, split at
/// the given breakpoints. Independent of the series kernels.
double expect_by_quadrature(const std::function<double(double)>& f, int df, double delta,
                            const std::vector<double>& breakpoints = {});

/// E[h(X)] (or E[h(X)^2]) using exact moment terms when h carries them and
/// quadrature otherwise.
double expect_h(const ShrinkageFunction& h, int df, double delta, bool squared = false);

/// Population matrices of the joint limit of the UE and RE.
class AsymptoticScaffold {
 public:
  /// Throws DimensionMismatch, GammaSingular, SingularConstraintGram.
  static AsymptoticScaffold make(const MatrixXd& gamma, const MatrixXd& omega, const MatrixXd& R, const VectorXd& mu);

  /// Same matrices with mu rescaled so that Delta equals `delta`. A zero mu is
  /// replaced by the first unit vector before scaling.
  AsymptoticScaffold with_delta(double delta) const;

  int k() const { return static_cast<int>(R_.rows()); }
  int p() const { return static_cast<int>(R_.cols()); }
  const MatrixXd& gamma() const { return gamma_; }
  const MatrixXd& omega() const { return omega_; }
  const MatrixXd& R() const { return R_; }
  const VectorXd& mu() const { return mu_; }
  const MatrixXd& j0() const { return j0_; }
  const VectorXd& mu1() const { return mu1_; }
  const MatrixXd& sigma11() const { return sigma11_; }
  const MatrixXd& sigma12() const { return sigma12_; }
  const MatrixXd& sigma21() const { return sigma21_; }
  const MatrixXd& sigma22() const { return sigma22_; }
  const MatrixXd& lambda11() const { return lambda11_; }
  const MatrixXd& lambda12() const { return lambda12_; }
  const MatrixXd& lambda21() const { return lambda21_; }
  const MatrixXd& lambda22() const { return lambda22_; }
  const MatrixXd& a() const { return a_; }
  double delta() const { return delta_; }

  struct Residuals {
    double a_lambda_a;         // ||A L11 A - A|| / ||A||
    double lambda_a_lambda;    // ||L11 A L11 - L11|| / ||L11||
    double lambda_a_mu;        // ||L11 A mu1 - mu1|| / max(||mu1||, 1)
    double lambda22_sigma22;   // ||L22 - S22||
    double lambda21_transpose; // ||L21 - L12'||
  };
  Residuals invariant_residuals() const;

 private:
  MatrixXd gamma_, omega_, R_;
  VectorXd mu_;
  MatrixXd j0_;
  VectorXd mu1_;
  MatrixXd sigma11_, sigma12_, sigma21_, sigma22_;
  MatrixXd lambda11_, lambda12_, lambda21_, lambda22_;
  MatrixXd a_;
  double delta_ = 0.0;
};

/// W = A^{1/2} W* A^{1/2}.
struct WeightSpec {
  MatrixXd w_star;
  MatrixXd w;

  WeightSpec(MatrixXd w_star, const AsymptoticScaffold& scaffold);
  /// A weight used as given (e.g. identity loss), with w_star = w.
  static WeightSpec direct(MatrixXd w);

 private:
  WeightSpec() = default;
};

struct AdrBreakdown {
  // [0] restricted ADR, then the six h-dependent terms in display order.
  std::array<double, 7> terms{};
  double total = 0.0;
};

AdrBreakdown adr_class(const ShrinkageFunction& h, const AsymptoticScaffold& s, const WeightSpec& w);
double adr_unrestricted(const AsymptoticScaffold& s, const WeightSpec& w);
double adr_restricted(const AsymptoticScaffold& s, const WeightSpec& w);
double adr_james_stein(const AsymptoticScaffold& s, const WeightSpec& w);
double adr_positive_part(const AsymptoticScaffold& s, const WeightSpec& w);

struct DominanceReport {
  bool holds = false;             // the three conditions with the (k+2)/4 factor
  bool holds_sufficient = false;  // same, with the (k+2)/2 factor that the JS expansion supports
  double c1 = 0.0;                // trace(W (L11 + L12))
  double c2_bound = 0.0;          // (k+2) ch_max(Pi*) / 4
  double c2_bound_sufficient = 0.0;
  double trace_wl12 = 0.0;
  std::array<double, 2> eig_min_terms{};  // -ch_min(W L11), ch_min(W L12)
  double pi_star_max_eig = 0.0;
  std::vector<std::string> violated;
};

DominanceReport dominance_check(const AsymptoticScaffold& s, const WeightSpec& w);

struct AdrPoint {
  double delta;
  double ue, re, js, pp;
  bool dominance_holds;
};

/// ADR of the four estimators along a Delta grid (mu direction from s).
std::vector<AdrPoint> adr_curve(const AsymptoticScaffold& s, const WeightSpec& w, const std::vector<double>& grid,
                                Exec exec = Exec::Parallel);

/// Mean-corrected noncentrality for reporting from data: max(0, psi - k).
inline double empirical_delta(double psi, int k) { return std::max(0.0, psi - k); }

}  // namespace cpshrink
