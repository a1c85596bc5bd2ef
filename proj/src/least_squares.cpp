#include "cpshrink/detail/least_squares.hpp"

#include <cmath>

namespace cpshrink::detail {

IncrementalQR::IncrementalQR(int q)
    : q_(q), r_(MatrixXd::Zero(q, q)), d_(VectorXd::Zero(q)), work_(VectorXd::Zero(q)) {}

void IncrementalQR::absorb(double y) {
  for (int i = 0; i < q_; ++i) {
    const double b = work_(i);
    if (b == 0.0) continue;
    const double a = r_(i, i);
    const double rho = std::hypot(a, b);
    const double c = a / rho;
    const double s = b / rho;
    r_(i, i) = rho;
    for (int j = i + 1; j < q_; ++j) {
      const double rij = r_(i, j);
      const double xj = work_(j);
      r_(i, j) = c * rij + s * xj;
      work_(j) = -s * rij + c * xj;
    }
    const double di = d_(i);
    d_(i) = c * di + s * y;
    y = -s * di + c * y;
  }
  ssr_ += y * y;
  ++rows_;
}

bool IncrementalQR::full_rank() const { return rows_ >= q_ && equilibrated_full_rank(r_); }

SegmentFactor factor_segment(const RegressionData& data, Segment segment) {
  if (segment.begin < 0 || segment.end > data.T() || segment.length() < 1) {
    throw Error(ErrorCode::InvalidPartition, "segment outside the sample");
  }
  IncrementalQR qr(data.q());
  for (int t = segment.begin; t < segment.end; ++t) qr.add_row(data.z().row(t), data.y()(t));
  return {segment, qr.r(), qr.d(), qr.ssr(), qr.full_rank()};
}

const SegmentFactor& FactorCache::get(Segment segment) {
  const std::uint64_t key = (static_cast<std::uint64_t>(segment.begin) << 32) | static_cast<std::uint32_t>(segment.end);
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  return cache_.emplace(key, factor_segment(*data_, segment)).first->second;
}

std::vector<const SegmentFactor*> partition_factors(FactorCache& cache, const Partition& partition) {
  std::vector<const SegmentFactor*> out;
  out.reserve(partition.segment_count());
  for (const Segment& s : partition.segments()) out.push_back(&cache.get(s));
  return out;
}

LsSolution solve_unrestricted(std::span<const SegmentFactor* const> factors) {
  const Index q = factors.front()->r.rows();
  LsSolution sol{VectorXd(static_cast<Index>(factors.size()) * q), 0.0};
  for (std::size_t p = 0; p < factors.size(); ++p) {
    const SegmentFactor& f = *factors[p];
    if (!f.full_rank) {
      throw Error(ErrorCode::SegmentRankDeficient, "regime " + std::to_string(p + 1) + " (times " +
                                                       std::to_string(f.segment.begin + 1) + ".." +
                                                       std::to_string(f.segment.end) + ") is rank deficient");
    }
    sol.delta.segment(static_cast<Index>(p) * q, q) = f.r.triangularView<Eigen::Upper>().solve(f.d);
    sol.ssr += f.ssr;
  }
  return sol;
}

MatrixXd apply_r_inverse(std::span<const SegmentFactor* const> factors, const MatrixXd& x) {
  const Index q = factors.front()->r.rows();
  MatrixXd out(x.rows(), x.cols());
  for (std::size_t p = 0; p < factors.size(); ++p) {
    const Index at = static_cast<Index>(p) * q;
    out.middleRows(at, q) = factors[p]->r.triangularView<Eigen::Upper>().solve(x.middleRows(at, q));
  }
  return out;
}

MatrixXd apply_r_inverse_transpose(std::span<const SegmentFactor* const> factors, const MatrixXd& x) {
  const Index q = factors.front()->r.rows();
  MatrixXd out(x.rows(), x.cols());
  for (std::size_t p = 0; p < factors.size(); ++p) {
    const Index at = static_cast<Index>(p) * q;
    out.middleRows(at, q) = factors[p]->r.transpose().triangularView<Eigen::Lower>().solve(x.middleRows(at, q));
  }
  return out;
}

LsSolution solve_restricted(std::span<const SegmentFactor* const> factors, const LsSolution& unrestricted,
                            const Restriction& restriction, bool want_delta) {
  const Index p = unrestricted.delta.size();
  if (restriction.cols() != p) {
    throw Error(ErrorCode::DimensionMismatch, "restriction has " + std::to_string(restriction.cols()) +
                                                  " columns but the model has " + std::to_string(p) + " coefficients");
  }
  // M' = r^{-T} R' so that R G^{-1} R' = M M'.
  const MatrixXd mt = apply_r_inverse_transpose(factors, restriction.R().transpose());
  Eigen::HouseholderQR<MatrixXd> qr(mt);
  const Index k = restriction.k();
  const MatrixXd u = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  const VectorXd diag = u.diagonal().cwiseAbs();
  if (!(diag.minCoeff() > kRankTolerance * diag.maxCoeff())) {
    throw Error(ErrorCode::SingularConstraintGram, "R G^{-1} R' is singular");
  }
  auto solve_gram = [&](const VectorXd& e, VectorXd* half) {
    VectorXd w = u.transpose().triangularView<Eigen::Lower>().solve(e);
    if (half) *half = w;
    return VectorXd(u.triangularView<Eigen::Upper>().solve(w));
  };

  const VectorXd e = restriction.R() * unrestricted.delta - restriction.r();
  VectorXd w;
  const VectorXd lambda = solve_gram(e, &w);
  LsSolution sol;
  sol.ssr = unrestricted.ssr + w.squaredNorm();
  if (!want_delta) return sol;
  sol.delta = unrestricted.delta - apply_r_inverse(factors, mt * lambda);
  // One refinement step drives R delta~ - r to rounding level.
  const VectorXd e2 = restriction.R() * sol.delta - restriction.r();
  if (e2.cwiseAbs().maxCoeff() > 0.0) sol.delta -= apply_r_inverse(factors, mt * solve_gram(e2, nullptr));
  return sol;
}

}  // namespace cpshrink::detail
