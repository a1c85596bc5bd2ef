#pragma once

#include <Eigen/Dense>

#include "cpshrink/error.hpp"

namespace cpshrink {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kRankTolerance = 1e-10;
inline constexpr double kPinvTolerance = 1e-12;
inline constexpr double kConditionWarning = 1e12;

MatrixXd symmetrize(const MatrixXd& m);

/// Symmetric square root; eigenvalues below tol * max are clipped to zero.
MatrixXd sym_sqrt(const MatrixXd& m, double rel_tol = kPinvTolerance);

/// Moore-Penrose pseudo-inverse of a symmetric matrix via eigendecomposition.
MatrixXd sym_pinv(const MatrixXd& m, double rel_tol = kPinvTolerance);

/// Rank-revealing factor L (n x r) with L L' = m for a PSD matrix m.
MatrixXd psd_factor(const MatrixXd& m, double rel_tol = kPinvTolerance);

/// Numerical rank of a symmetric PSD matrix.
Index psd_rank(const MatrixXd& m, double rel_tol = kPinvTolerance);

/// Inverse of a symmetric positive definite matrix. Throws `on_fail` when the
/// Cholesky factorization breaks down; warns above kConditionWarning.
MatrixXd spd_inverse(const MatrixXd& m, ErrorCode on_fail, const char* what);

/// True when the smallest singular value exceeds tol times the largest, after
/// scaling every column to unit norm. Zero columns count as deficient.
bool equilibrated_full_rank(const MatrixXd& m, double rel_tol = kRankTolerance);

bool full_row_rank(const MatrixXd& m, double rel_tol = kRankTolerance);

/// ||a - b||_F / max(||b||_F, floor).
double relative_difference(const MatrixXd& a, const MatrixXd& b, double floor = 1.0);

/// Block-diagonal assembly of square blocks.
MatrixXd block_diagonal(const std::vector<MatrixXd>& blocks);

}  // namespace cpshrink
