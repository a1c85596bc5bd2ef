#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>

#include "cpshrink/model_core.hpp"

namespace cpshrink::detail {

/// Row-by-row QR of a least-squares problem via Givens rotations. Keeps the
/// q x q triangular factor, the rotated right-hand side and the residual sum
/// of squares; adding a row costs O(q^2).
class IncrementalQR {
 public:
  explicit IncrementalQR(int q);

  template <typename Row>
  void add_row(const Row& z, double y) {
    for (int c = 0; c < q_; ++c) work_(c) = z(c);
    absorb(y);
  }

  int rows() const { return rows_; }
  int q() const { return q_; }
  double ssr() const { return ssr_; }
  const MatrixXd& r() const { return r_; }
  const VectorXd& d() const { return d_; }
  bool full_rank() const;

 private:
  void absorb(double y);

  int q_;
  int rows_ = 0;
  MatrixXd r_;
  VectorXd d_;
  VectorXd work_;
  double ssr_ = 0.0;
};

struct SegmentFactor {
  Segment segment;
  MatrixXd r;  // upper triangular, Z_p = Q r
  VectorXd d;  // leading q entries of Q' y_p
  double ssr = 0.0;
  bool full_rank = false;
};

SegmentFactor factor_segment(const RegressionData& data, Segment segment);

/// Memoizes segment factors for one data set; not thread-safe.
class FactorCache {
 public:
  explicit FactorCache(const RegressionData& data) : data_(&data) {}
  const SegmentFactor& get(Segment segment);
  std::size_t size() const { return cache_.size(); }

 private:
  const RegressionData* data_;
  std::unordered_map<std::uint64_t, SegmentFactor> cache_;
};

std::vector<const SegmentFactor*> partition_factors(FactorCache& cache, const Partition& partition);

struct LsSolution {
  VectorXd delta;
  double ssr = 0.0;
};

/// Stacked per-regime OLS. Throws SegmentRankDeficient.
LsSolution solve_unrestricted(std::span<const SegmentFactor* const> factors);

/// X -> blockdiag(r_p)^{-1} X.
MatrixXd apply_r_inverse(std::span<const SegmentFactor* const> factors, const MatrixXd& x);
/// X -> blockdiag(r_p)^{-T} X.
MatrixXd apply_r_inverse_transpose(std::span<const SegmentFactor* const> factors, const MatrixXd& x);

/// Equality-constrained least squares from the unrestricted solution:
/// delta~ = delta^ - G^{-1} R' (R G^{-1} R')^{-1} (R delta^ - r), G = Zbar'Zbar,
/// with SSR~ = SSR^ + (R delta^ - r)' (R G^{-1} R')^{-1} (R delta^ - r).
/// Throws SingularConstraintGram, DimensionMismatch.
LsSolution solve_restricted(std::span<const SegmentFactor* const> factors, const LsSolution& unrestricted,
                            const Restriction& restriction, bool want_delta = true);

}  // namespace cpshrink::detail
