#pragma once

#include <cstdint>
#include <optional>

#include "cpshrink/exec.hpp"
#include "cpshrink/risk.hpp"

namespace cpshrink {

inline constexpr std::int64_t kMcChunk = 1 << 16;

/// X ~ N(mu_x, sigma) with sigma of rank k, plus optionally Y with
/// Cov(X, Y) = sigma12, Var(Y) = sigma22 and E[Y] = -mu_x.
struct GaussianSetup {
  VectorXd mu_x;
  MatrixXd sigma;
  MatrixXd a;
  MatrixXd w_star;
  MatrixXd w;
  int k = 0;
  std::optional<MatrixXd> sigma12;
  std::optional<MatrixXd> sigma22;

  /// Checks A sigma A = A, sigma A sigma = sigma, sigma A mu = mu (1e-8
  /// relative) and builds W = A^{1/2} W* A^{1/2}. Throws InvalidArgument.
  static GaussianSetup validated(VectorXd mu_x, MatrixXd sigma, MatrixXd a, MatrixXd w_star);
  /// No hypothesis checks; W used as given. For negative controls.
  static GaussianSetup unchecked(VectorXd mu_x, MatrixXd sigma, MatrixXd a, MatrixXd w);

  /// X = limit of sqrt(T)(delta^ - delta~), Y = limit of sqrt(T)(delta~ - delta0):
  /// mu_x = -mu1, sigma = L11, sigma12 = L12, sigma22 = L22.
  static GaussianSetup from_scaffold(const AsymptoticScaffold& s, const MatrixXd& w_star);

  double delta() const { return mu_x.dot(a * mu_x); }
  bool has_joint() const { return sigma12.has_value() && sigma22.has_value(); }
};

/// Random Gamma, Omega, R (k x p), mu and W* with Delta scaled to `delta`.
AsymptoticScaffold random_scaffold(int p, int k, double delta, std::uint64_t seed);
MatrixXd random_psd(int p, std::uint64_t seed);

struct VectorIdentityCheck {
  VectorXd mc_estimate;
  VectorXd closed_form;
  VectorXd mc_stderr;
  double max_abs_err = 0.0;
  double max_z = 0.0;  // max |err_j| / stderr_j
  bool passes(double z = 3.0) const;
};

struct ScalarIdentityCheck {
  double mc_estimate = 0.0;
  double closed_form = 0.0;
  double mc_stderr = 0.0;
  double abs_err = 0.0;
  double z = 0.0;
  bool passes(double z_max = 3.0) const;
};

/// E[h(X'AX) W X] against E[h(chi2_{k+2}(Delta))] W mu.
VectorIdentityCheck mc_vector_identity(const GaussianSetup& setup, const ShrinkageFunction& h, std::int64_t n_samples,
                                       std::uint64_t seed, Exec exec = Exec::Parallel);

/// E[h(X'AX) X'WX] against E[h_{k+2}] tr(W sigma) + E[h_{k+4}] mu'W mu.
ScalarIdentityCheck mc_quadratic_identity(const GaussianSetup& setup, const ShrinkageFunction& h,
                                          std::int64_t n_samples, std::uint64_t seed, Exec exec = Exec::Parallel);

/// E[h(X'AX) Y'WX] against the four-term expansion in (mu, sigma12).
ScalarIdentityCheck mc_cross_identity(const GaussianSetup& setup, const ShrinkageFunction& h, std::int64_t n_samples,
                                      std::uint64_t seed, Exec exec = Exec::Parallel);

}  // namespace cpshrink
