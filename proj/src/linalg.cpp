#include "cpshrink/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <sstream>

namespace cpshrink {

MatrixXd symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

namespace {

Eigen::SelfAdjointEigenSolver<MatrixXd> eigen_sym(const MatrixXd& m) {
  if (m.rows() != m.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "expected a square matrix");
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(m));
  if (es.info() != Eigen::Success) {
    throw Error(ErrorCode::SingularFactorization, "symmetric eigendecomposition failed");
  }
  return es;
}

double clip_threshold(const VectorXd& evals, double rel_tol) {
  const double top = evals.size() > 0 ? evals.cwiseAbs().maxCoeff() : 0.0;
  return rel_tol * top;
}

}  // namespace

MatrixXd sym_sqrt(const MatrixXd& m, double rel_tol) {
  auto es = eigen_sym(m);
  VectorXd ev = es.eigenvalues();
  const double thr = clip_threshold(ev, rel_tol);
  for (Index i = 0; i < ev.size(); ++i) ev(i) = ev(i) > thr ? std::sqrt(ev(i)) : 0.0;
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

MatrixXd sym_pinv(const MatrixXd& m, double rel_tol) {
  auto es = eigen_sym(m);
  VectorXd ev = es.eigenvalues();
  const double thr = clip_threshold(ev, rel_tol);
  for (Index i = 0; i < ev.size(); ++i) ev(i) = std::abs(ev(i)) > thr && ev(i) != 0.0 ? 1.0 / ev(i) : 0.0;
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

MatrixXd psd_factor(const MatrixXd& m, double rel_tol) {
  auto es = eigen_sym(m);
  const VectorXd& ev = es.eigenvalues();
  const double thr = clip_threshold(ev, rel_tol);
  std::vector<Index> keep;
  for (Index i = 0; i < ev.size(); ++i) {
    if (ev(i) > thr) keep.push_back(i);
  }
  MatrixXd factor(m.rows(), static_cast<Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) {
    factor.col(static_cast<Index>(c)) = es.eigenvectors().col(keep[c]) * std::sqrt(ev(keep[c]));
  }
  return factor;
}

Index psd_rank(const MatrixXd& m, double rel_tol) {
  auto es = eigen_sym(m);
  const VectorXd& ev = es.eigenvalues();
  const double thr = clip_threshold(ev, rel_tol);
  return (ev.array() > thr).count();
}

MatrixXd spd_inverse(const MatrixXd& m, ErrorCode on_fail, const char* what) {
  if (m.rows() != m.cols()) throw Error(ErrorCode::DimensionMismatch, std::string(what) + " is not square");
  const MatrixXd s = symmetrize(m);
  Eigen::LLT<MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) {
    throw Error(on_fail, std::string(what) + " is not positive definite");
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(s, Eigen::EigenvaluesOnly);
  const VectorXd& ev = es.eigenvalues();
  if (ev(0) <= 0.0) throw Error(on_fail, std::string(what) + " is not positive definite");
  const double cond = ev(ev.size() - 1) / ev(0);
  if (cond > kConditionWarning) {
    std::ostringstream os;
    os << what << " condition number " << cond << " exceeds " << kConditionWarning;
    warn(os.str());
  }
  return symmetrize(llt.solve(MatrixXd::Identity(s.rows(), s.cols())));
}

bool equilibrated_full_rank(const MatrixXd& m, double rel_tol) {
  if (m.cols() == 0) return true;
  if (m.rows() < m.cols()) return false;
  MatrixXd scaled = m;
  for (Index j = 0; j < m.cols(); ++j) {
    const double n = m.col(j).norm();
    if (!(n > 0.0) || !std::isfinite(n)) return false;
    scaled.col(j) /= n;
  }
  Eigen::JacobiSVD<MatrixXd> svd(scaled);
  const VectorXd& sv = svd.singularValues();
  return sv(sv.size() - 1) > rel_tol * sv(0);
}

bool full_row_rank(const MatrixXd& m, double rel_tol) {
  if (m.rows() == 0 || m.rows() > m.cols()) return false;
  Eigen::JacobiSVD<MatrixXd> svd(m);
  const VectorXd& sv = svd.singularValues();
  return sv(0) > 0.0 && sv(sv.size() - 1) > rel_tol * sv(0);
}

double relative_difference(const MatrixXd& a, const MatrixXd& b, double floor) {
  return (a - b).norm() / std::max(b.norm(), floor);
}

MatrixXd block_diagonal(const std::vector<MatrixXd>& blocks) {
  Index n = 0;
  for (const auto& b : blocks) n += b.rows();
  MatrixXd out = MatrixXd::Zero(n, n);
  Index at = 0;
  for (const auto& b : blocks) {
    out.block(at, at, b.rows(), b.cols()) = b;
    at += b.rows();
  }
  return out;
}

}  // namespace cpshrink
