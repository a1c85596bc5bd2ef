#include "cpshrink/stein_oracle.hpp"

#include <cmath>
#include <random>

#include "cpshrink/rng.hpp"

namespace cpshrink {

namespace {

double rel(const MatrixXd& a, const MatrixXd& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

// Per-sample values accumulated over fixed-size chunks; each chunk has its
// own stream and its own partial sums, combined by a pairwise tree.
struct Moments {
  VectorXd mean;
  VectorXd stderr_;
};

template <typename Sample>
Moments chunked_mean(int dim, std::int64_t n, std::uint64_t seed, Exec exec, Sample&& sample) {
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "need at least two Monte Carlo draws");
  const std::int64_t chunks = (n + kMcChunk - 1) / kMcChunk;
  std::vector<double> sums(static_cast<std::size_t>(chunks * dim));
  std::vector<double> squares(sums.size());
  parallel_for(chunks, exec, [&](std::int64_t c) {
    Engine eng = make_engine(seed, {static_cast<std::uint64_t>(c)});
    std::normal_distribution<double> nd;  // per chunk: it caches a spare draw
    const std::int64_t begin = c * kMcChunk;
    const std::int64_t end = std::min(n, begin + kMcChunk);
    VectorXd s = VectorXd::Zero(dim);
    VectorXd s2 = VectorXd::Zero(dim);
    VectorXd v(dim);
    for (std::int64_t i = begin; i < end; ++i) {
      sample(eng, nd, v);
      s += v;
      s2 += v.cwiseProduct(v);
    }
    for (int j = 0; j < dim; ++j) {
      sums[static_cast<std::size_t>(j * chunks + c)] = s(j);
      squares[static_cast<std::size_t>(j * chunks + c)] = s2(j);
    }
  });
  Moments m{VectorXd(dim), VectorXd(dim)};
  const double dn = static_cast<double>(n);
  for (int j = 0; j < dim; ++j) {
    const std::span<const double> sj(sums.data() + static_cast<std::size_t>(j * chunks), static_cast<std::size_t>(chunks));
    const std::span<const double> qj(squares.data() + static_cast<std::size_t>(j * chunks), static_cast<std::size_t>(chunks));
    const double mean = pairwise_sum(sj) / dn;
    const double var = std::max(0.0, (pairwise_sum(qj) - dn * mean * mean) / (dn - 1.0));
    m.mean(j) = mean;
    m.stderr_(j) = std::sqrt(var / dn);
  }
  return m;
}

MatrixXd factor_or_throw(const MatrixXd& cov) {
  MatrixXd f = psd_factor(cov);
  if (f.cols() == 0) throw Error(ErrorCode::SingularFactorization, "covariance has rank zero");
  return f;
}

// Slack for exact agreement (h == 1 and mu == 0 give zero variance).
double rounding_slack(double scale) { return 1e-12 * std::max(1.0, std::abs(scale)); }

ScalarIdentityCheck scalar_check(const Moments& m, double closed) {
  ScalarIdentityCheck c;
  c.mc_estimate = m.mean(0);
  c.mc_stderr = m.stderr_(0);
  c.closed_form = closed;
  c.abs_err = std::abs(c.mc_estimate - closed);
  c.z = c.abs_err / (c.mc_stderr + rounding_slack(closed) / 3.0);
  return c;
}

}  // namespace

GaussianSetup GaussianSetup::validated(VectorXd mu_x, MatrixXd sigma, MatrixXd a, MatrixXd w_star) {
  const Index p = mu_x.size();
  if (sigma.rows() != p || sigma.cols() != p || a.rows() != p || a.cols() != p || w_star.rows() != p ||
      w_star.cols() != p) {
    throw Error(ErrorCode::DimensionMismatch, "Gaussian setup sizes disagree");
  }
  constexpr double tol = 1e-8;
  if (rel(a * sigma * a, a) > tol) throw Error(ErrorCode::InvalidArgument, "A Sigma A != A");
  if (rel(sigma * a * sigma, sigma) > tol) throw Error(ErrorCode::InvalidArgument, "Sigma A Sigma != Sigma");
  if ((sigma * a * mu_x - mu_x).norm() > tol * std::max(1.0, mu_x.norm())) {
    throw Error(ErrorCode::InvalidArgument, "Sigma A mu != mu");
  }
  GaussianSetup s;
  const MatrixXd half = sym_sqrt(a);
  s.w = symmetrize(half * symmetrize(w_star) * half);
  s.w_star = std::move(w_star);
  s.k = static_cast<int>(psd_rank(sigma));
  s.mu_x = std::move(mu_x);
  s.sigma = symmetrize(sigma);
  s.a = symmetrize(a);
  return s;
}

GaussianSetup GaussianSetup::unchecked(VectorXd mu_x, MatrixXd sigma, MatrixXd a, MatrixXd w) {
  GaussianSetup s;
  s.k = static_cast<int>(psd_rank(sigma));
  s.mu_x = std::move(mu_x);
  s.sigma = symmetrize(sigma);
  s.a = symmetrize(a);
  s.w = symmetrize(w);
  s.w_star = s.w;
  return s;
}

GaussianSetup GaussianSetup::from_scaffold(const AsymptoticScaffold& sc, const MatrixXd& w_star) {
  GaussianSetup s = validated(-sc.mu1(), sc.lambda11(), sc.a(), w_star);
  s.sigma12 = sc.lambda12();
  s.sigma22 = symmetrize(sc.lambda22());
  return s;
}

MatrixXd random_psd(int p, std::uint64_t seed) {
  Engine eng = make_engine(seed, {0x70});
  std::normal_distribution<double> nd;
  MatrixXd g(p, p);
  for (Index i = 0; i < g.size(); ++i) g.data()[i] = nd(eng);
  return symmetrize(g * g.transpose() / p + 0.2 * MatrixXd::Identity(p, p));
}

AsymptoticScaffold random_scaffold(int p, int k, double delta, std::uint64_t seed) {
  Engine eng = make_engine(seed, {0x5c});
  std::normal_distribution<double> nd;
  const MatrixXd gamma = random_psd(p, derive_seed(seed, {1}));
  const MatrixXd omega = random_psd(p, derive_seed(seed, {2}));
  MatrixXd R(k, p);
  for (Index i = 0; i < R.size(); ++i) R.data()[i] = nd(eng);
  VectorXd mu(k);
  for (Index i = 0; i < k; ++i) mu(i) = nd(eng);
  return AsymptoticScaffold::make(gamma, omega, R, mu).with_delta(delta);
}

bool VectorIdentityCheck::passes(double z) const {
  for (Index j = 0; j < closed_form.size(); ++j) {
    if (std::abs(mc_estimate(j) - closed_form(j)) > z * mc_stderr(j) + rounding_slack(closed_form(j))) return false;
  }
  return true;
}

bool ScalarIdentityCheck::passes(double z_max) const {
  return abs_err <= z_max * mc_stderr + rounding_slack(closed_form);
}

VectorIdentityCheck mc_vector_identity(const GaussianSetup& setup, const ShrinkageFunction& h, std::int64_t n_samples,
                                       std::uint64_t seed, Exec exec) {
  const MatrixXd L = factor_or_throw(setup.sigma);
  const int p = static_cast<int>(setup.mu_x.size());
  const Moments m = chunked_mean(p, n_samples, seed, exec, [&](Engine& eng, std::normal_distribution<double>& nd, VectorXd& v) {
    VectorXd z(L.cols());
    for (Index i = 0; i < z.size(); ++i) z(i) = nd(eng);
    const VectorXd x = setup.mu_x + L * z;
    v = h(x.dot(setup.a * x)) * (setup.w * x);
  });
  VectorIdentityCheck c;
  c.mc_estimate = m.mean;
  c.mc_stderr = m.stderr_;
  c.closed_form = expect_h(h, setup.k + 2, setup.delta()) * (setup.w * setup.mu_x);
  const VectorXd err = (c.mc_estimate - c.closed_form).cwiseAbs();
  c.max_abs_err = err.maxCoeff();
  for (int j = 0; j < p; ++j) {
    c.max_z = std::max(c.max_z, err(j) / (c.mc_stderr(j) + rounding_slack(c.closed_form(j)) / 3.0));
  }
  return c;
}

ScalarIdentityCheck mc_quadratic_identity(const GaussianSetup& setup, const ShrinkageFunction& h,
                                          std::int64_t n_samples, std::uint64_t seed, Exec exec) {
  const MatrixXd L = factor_or_throw(setup.sigma);
  const Moments m = chunked_mean(1, n_samples, seed, exec, [&](Engine& eng, std::normal_distribution<double>& nd, VectorXd& v) {
    VectorXd z(L.cols());
    for (Index i = 0; i < z.size(); ++i) z(i) = nd(eng);
    const VectorXd x = setup.mu_x + L * z;
    v(0) = h(x.dot(setup.a * x)) * x.dot(setup.w * x);
  });
  const double D = setup.delta();
  const double d1 = (setup.w * setup.sigma).trace();
  const double d2 = setup.mu_x.dot(setup.w * setup.mu_x);
  return scalar_check(m, expect_h(h, setup.k + 2, D) * d1 + expect_h(h, setup.k + 4, D) * d2);
}

ScalarIdentityCheck mc_cross_identity(const GaussianSetup& setup, const ShrinkageFunction& h, std::int64_t n_samples,
                                      std::uint64_t seed, Exec exec) {
  if (!setup.has_joint()) throw Error(ErrorCode::InvalidArgument, "cross identity needs the joint (X, Y) block");
  const Index p = setup.mu_x.size();
  MatrixXd joint(2 * p, 2 * p);
  joint << setup.sigma, *setup.sigma12, setup.sigma12->transpose(), *setup.sigma22;
  const MatrixXd L = factor_or_throw(symmetrize(joint));
  const Moments m = chunked_mean(1, n_samples, seed, exec, [&](Engine& eng, std::normal_distribution<double>& nd, VectorXd& v) {
    VectorXd z(L.cols());
    for (Index i = 0; i < z.size(); ++i) z(i) = nd(eng);
    const VectorXd e = L * z;
    const VectorXd x = setup.mu_x + e.head(p);
    const VectorXd y = -setup.mu_x + e.tail(p);
    v(0) = h(x.dot(setup.a * x)) * y.dot(setup.w * x);
  });
  const double D = setup.delta();
  const double h2 = expect_h(h, setup.k + 2, D);
  const double h4 = expect_h(h, setup.k + 4, D);
  const VectorXd& mu = setup.mu_x;
  const MatrixXd& s12 = *setup.sigma12;
  const double t1 = -h2 * mu.dot(setup.w * mu);
  const double t2 = -h2 * mu.dot(setup.a * s12 * setup.w * mu);
  const double t3 = h2 * (s12 * setup.w * setup.sigma * setup.a).trace();
  const double t4 = h4 * mu.dot(setup.a * s12 * setup.w * mu);
  return scalar_check(m, t1 + t2 + t3 + t4);
}

}  // namespace cpshrink
