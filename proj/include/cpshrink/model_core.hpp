#pragma once

#include <compare>
#include <filesystem>
#include <string>
#include <vector>

#include "cpshrink/linalg.hpp"

namespace cpshrink {

/// Response y (length T) and regressor rows z_t (T x q).
class RegressionData {
 public:
  RegressionData(VectorXd y, MatrixXd z);

  const VectorXd& y() const { return y_; }
  const MatrixXd& z() const { return z_; }
  int T() const { return static_cast<int>(y_.size()); }
  int q() const { return static_cast<int>(z_.cols()); }

 private:
  VectorXd y_;
  MatrixXd z_;
};

/// Half-open 0-based row range [begin, end) of one regime.
struct Segment {
  int begin;
  int end;
  int length() const { return end - begin; }
};

/// Interior break dates T_1 < ... < T_m, 1-based: regime p covers
/// times T_{p-1}+1 .. T_p with T_0 = 0 and T_{m+1} = T.
class Partition {
 public:
  Partition(std::vector<int> breaks, int T);
  static Partition none(int T) { return Partition({}, T); }

  int m() const { return static_cast<int>(breaks_.size()); }
  int T() const { return T_; }
  int segment_count() const { return m() + 1; }
  const std::vector<int>& breaks() const { return breaks_; }
  Segment segment(int p) const;  // p = 0..m
  std::vector<Segment> segments() const;
  /// 0-based regime index of 1-based time t.
  int regime_of(int t) const;
  std::string to_string() const;

  friend bool operator==(const Partition&, const Partition&) = default;
  friend std::strong_ordering operator<=>(const Partition& a, const Partition& b) {
    if (auto c = a.T_ <=> b.T_; c != 0) return c;
    return a.breaks_ <=> b.breaks_;
  }

 private:
  std::vector<int> breaks_;
  int T_;
};

/// Linear hypothesis R delta = r with R of full row rank k.
class Restriction {
 public:
  Restriction(MatrixXd R, VectorXd r);

  const MatrixXd& R() const { return R_; }
  const VectorXd& r() const { return r_; }
  int k() const { return static_cast<int>(R_.rows()); }
  int cols() const { return static_cast<int>(R_.cols()); }

  /// Stacks the rows of two restrictions over the same coefficient vector.
  Restriction stacked(const Restriction& other) const;
  double violation(const VectorXd& delta) const;  // ||R delta - r||_inf

 private:
  MatrixXd R_;
  VectorXd r_;
};

/// Z-bar = diag(Z_1, ..., Z_{m+1}) for a partition.
struct SegmentedDesign {
  MatrixXd zbar;
  Partition partition;
  int q;
};

SegmentedDesign build_design(const RegressionData& data, const Partition& partition);

/// Sum over the rows of regime p of z_t z_t'.
MatrixXd segment_gram(const SegmentedDesign& design, int p);

/// True iff every regime's regressor block has full column rank under the
/// relative singular-value tolerance (columns equilibrated first).
bool validate_segment_rank(const SegmentedDesign& design);

// Named restriction patterns over (m+1) regimes of q coefficients each.
// Segment and coefficient indices are 1-based.
Restriction equal_segments_restriction(int m, int q, int i, int j);
Restriction zero_segment_restriction(int m, int q, int i);
Restriction zero_coefficient_restriction(int m, int q, int segment, int coef);
/// Zeroes every coefficient after the second (intercept, slope) in each regime.
Restriction linear_trend_restriction(int m, int q);

/// Regressors (1, t, t^1.5, t^2) for t = 1..T.
MatrixXd trend_basis(int T);

/// CSV with header `t,y,z1,...,zq`, t = 1..T contiguous. With
/// `trend_basis_from_t` the z columns are optional and ignored; the regressors
/// become trend_basis(T).
RegressionData read_regression_csv(const std::filesystem::path& path, bool trend_basis_from_t = false);

/// Writes the `t,y,z1,...,zq` layout with round-trip precision.
void write_regression_csv(const std::filesystem::path& path, const RegressionData& data);

}  // namespace cpshrink
