#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Nothing here calls the library's solvers: fits go through Eigen's
// column-pivoting QR on explicitly assembled designs.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "cpshrink/model_core.hpp"

namespace testing_support {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline std::mt19937_64 engine(std::uint64_t seed) { return std::mt19937_64(seed * 0x9e3779b97f4a7c15ULL + 17); }

inline MatrixXd gaussian_matrix(int rows, int cols, std::mt19937_64& eng) {
  std::normal_distribution<double> nd;
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(eng);
  return m;
}

// Piecewise linear model with Gaussian regressors (first column constant)
// and regime shifts at the given breaks.
inline cpshrink::RegressionData random_piecewise(int T, int q, const std::vector<int>& breaks, double noise,
                                                 std::uint64_t seed) {
  auto eng = engine(seed);
  MatrixXd z = gaussian_matrix(T, q, eng);
  z.col(0).setOnes();
  const MatrixXd coef = 2.0 * gaussian_matrix(static_cast<int>(breaks.size()) + 1, q, eng);
  std::normal_distribution<double> nd;
  VectorXd y(T);
  int regime = 0;
  for (int t = 0; t < T; ++t) {
    while (regime < static_cast<int>(breaks.size()) && t >= breaks[regime]) ++regime;
    y(t) = z.row(t).dot(coef.row(regime)) + noise * nd(eng);
  }
  return {y, z};
}

// Z-bar assembled row by row from 1-based break dates.
inline MatrixXd stacked_design(const MatrixXd& z, const std::vector<int>& breaks) {
  const int T = static_cast<int>(z.rows());
  const int q = static_cast<int>(z.cols());
  MatrixXd zbar = MatrixXd::Zero(T, (static_cast<int>(breaks.size()) + 1) * q);
  int regime = 0;
  for (int t = 0; t < T; ++t) {
    while (regime < static_cast<int>(breaks.size()) && t >= breaks[regime]) ++regime;
    zbar.block(t, regime * q, 1, q) = z.row(t);
  }
  return zbar;
}

struct Fit {
  VectorXd delta;
  double ssr;
};

inline Fit ols(const MatrixXd& x, const VectorXd& y) {
  Fit f;
  f.delta = x.colPivHouseholderQr().solve(y);
  f.ssr = (y - x * f.delta).squaredNorm();
  return f;
}

// min ||y - X d|| s.t. R d = r, by d = d0 + N theta with N spanning ker(R).
inline Fit nullspace_restricted(const MatrixXd& x, const VectorXd& y, const MatrixXd& R, const VectorXd& r) {
  Eigen::JacobiSVD<MatrixXd> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Index k = R.rows();
  const Eigen::Index n = R.cols();
  const VectorXd d0 = svd.solve(r);
  const MatrixXd N = svd.matrixV().rightCols(n - k);
  Fit f;
  if (N.cols() == 0) {
    f.delta = d0;
  } else {
    const VectorXd theta = (x * N).colPivHouseholderQr().solve(y - x * d0);
    f.delta = d0 + N * theta;
  }
  f.ssr = (y - x * f.delta).squaredNorm();
  return f;
}

// All break vectors with every segment at least h long, in lexicographic order.
inline void for_each_partition(int T, int m, int h, const std::function<void(const std::vector<int>&)>& visit) {
  std::vector<int> b(static_cast<std::size_t>(m));
  std::function<void(int, int)> rec = [&](int idx, int prev) {
    if (idx == m) {
      if (T - prev >= h) visit(b);
      return;
    }
    for (int t = prev + h; t <= T - (m - idx) * h; ++t) {
      b[static_cast<std::size_t>(idx)] = t;
      rec(idx + 1, t);
    }
  };
  rec(0, 0);
}

struct BruteResult {
  std::vector<int> breaks;
  double ssr = std::numeric_limits<double>::infinity();
};

// Global minimizer of a partition objective; the first strict improvement in
// lexicographic order wins, so ties keep the earliest break vector.
inline BruteResult brute_force(int T, int m, int h, const std::function<double(const std::vector<int>&)>& objective) {
  BruteResult best;
  for_each_partition(T, m, h, [&](const std::vector<int>& b) {
    const double s = objective(b);
    if (s < best.ssr) {
      best.ssr = s;
      best.breaks = b;
    }
  });
  return best;
}

inline double unrestricted_objective(const cpshrink::RegressionData& d, const std::vector<int>& b) {
  return ols(stacked_design(d.z(), b), d.y()).ssr;
}

inline double restricted_objective(const cpshrink::RegressionData& d, const cpshrink::Restriction& res,
                                   const std::vector<int>& b) {
  return nullspace_restricted(stacked_design(d.z(), b), d.y(), res.R(), res.r()).ssr;
}

// Error code thrown by f, or nothing when it returns normally.
inline std::optional<cpshrink::ErrorCode> error_code(const std::function<void()>& f) {
  try {
    f();
  } catch (const cpshrink::Error& e) {
    return e.code();
  }
  return std::nullopt;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-12); }

}  // namespace testing_support
