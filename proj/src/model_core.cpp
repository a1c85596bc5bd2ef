#include "cpshrink/model_core.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace cpshrink {

RegressionData::RegressionData(VectorXd y, MatrixXd z) : y_(std::move(y)), z_(std::move(z)) {
  if (y_.size() != z_.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "y has " + std::to_string(y_.size()) + " entries but z has " +
                                                  std::to_string(z_.rows()) + " rows");
  }
  if (y_.size() < 2) throw Error(ErrorCode::InvalidData, "need at least two observations");
  if (z_.cols() < 1) throw Error(ErrorCode::InvalidData, "need at least one regressor");
  if (!y_.allFinite() || !z_.allFinite()) throw Error(ErrorCode::InvalidData, "non-finite observation");
}

Partition::Partition(std::vector<int> breaks, int T) : breaks_(std::move(breaks)), T_(T) {
  if (T_ < 1) throw Error(ErrorCode::InvalidPartition, "T must be positive");
  int prev = 0;
  for (int b : breaks_) {
    if (b <= prev || b >= T_) {
      throw Error(ErrorCode::InvalidPartition,
                  "breaks must satisfy 1 <= T_1 < ... < T_m < T, got " + to_string());
    }
    prev = b;
  }
}

Segment Partition::segment(int p) const {
  const int begin = p == 0 ? 0 : breaks_[p - 1];
  const int end = p == m() ? T_ : breaks_[p];
  return {begin, end};
}

std::vector<Segment> Partition::segments() const {
  std::vector<Segment> out;
  out.reserve(breaks_.size() + 1);
  for (int p = 0; p <= m(); ++p) out.push_back(segment(p));
  return out;
}

int Partition::regime_of(int t) const {
  int p = 0;
  while (p < m() && t > breaks_[p]) ++p;
  return p;
}

std::string Partition::to_string() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < breaks_.size(); ++i) os << (i ? "," : "") << breaks_[i];
  os << ')';
  return os.str();
}

Restriction::Restriction(MatrixXd R, VectorXd r) : R_(std::move(R)), r_(std::move(r)) {
  if (R_.rows() != r_.size()) {
    throw Error(ErrorCode::DimensionMismatch, "R has " + std::to_string(R_.rows()) + " rows but r has " +
                                                  std::to_string(r_.size()) + " entries");
  }
  if (R_.rows() < 1) throw Error(ErrorCode::DimensionMismatch, "restriction needs at least one row");
  if (R_.rows() > R_.cols()) throw Error(ErrorCode::DimensionMismatch, "restriction has more rows than columns");
  if (!R_.allFinite() || !r_.allFinite()) throw Error(ErrorCode::InvalidData, "non-finite restriction");
  if (!full_row_rank(R_)) throw Error(ErrorCode::SingularConstraintGram, "R does not have full row rank");
}

Restriction Restriction::stacked(const Restriction& other) const {
  if (other.cols() != cols()) throw Error(ErrorCode::DimensionMismatch, "stacked restrictions differ in width");
  MatrixXd R(k() + other.k(), cols());
  R << R_, other.R_;
  VectorXd r(k() + other.k());
  r << r_, other.r_;
  return Restriction(std::move(R), std::move(r));
}

double Restriction::violation(const VectorXd& delta) const {
  if (delta.size() != cols()) throw Error(ErrorCode::DimensionMismatch, "coefficient length does not match R");
  return (R_ * delta - r_).cwiseAbs().maxCoeff();
}

SegmentedDesign build_design(const RegressionData& data, const Partition& partition) {
  if (partition.T() != data.T()) {
    throw Error(ErrorCode::InvalidPartition, "partition built for T=" + std::to_string(partition.T()) +
                                                 " but data has T=" + std::to_string(data.T()));
  }
  const int q = data.q();
  MatrixXd zbar = MatrixXd::Zero(data.T(), static_cast<Index>(partition.segment_count()) * q);
  for (int p = 0; p < partition.segment_count(); ++p) {
    const Segment s = partition.segment(p);
    zbar.block(s.begin, static_cast<Index>(p) * q, s.length(), q) = data.z().middleRows(s.begin, s.length());
  }
  return {std::move(zbar), partition, q};
}

MatrixXd segment_gram(const SegmentedDesign& design, int p) {
  const Segment s = design.partition.segment(p);
  const auto block = design.zbar.block(s.begin, static_cast<Index>(p) * design.q, s.length(), design.q);
  return block.transpose() * block;
}

bool validate_segment_rank(const SegmentedDesign& design) {
  for (int p = 0; p < design.partition.segment_count(); ++p) {
    const Segment s = design.partition.segment(p);
    const MatrixXd block = design.zbar.block(s.begin, static_cast<Index>(p) * design.q, s.length(), design.q);
    if (!equilibrated_full_rank(block)) return false;
  }
  return true;
}

namespace {

void check_indices(int m, int q, int segment, int coef) {
  if (segment < 1 || segment > m + 1) {
    throw Error(ErrorCode::InvalidArgument, "segment index " + std::to_string(segment) + " outside 1.." +
                                                std::to_string(m + 1));
  }
  if (coef < 1 || coef > q) {
    throw Error(ErrorCode::InvalidArgument, "coefficient index " + std::to_string(coef) + " outside 1.." +
                                                std::to_string(q));
  }
}

}  // namespace

Restriction equal_segments_restriction(int m, int q, int i, int j) {
  check_indices(m, q, i, 1);
  check_indices(m, q, j, 1);
  if (i == j) throw Error(ErrorCode::InvalidArgument, "equal-segments needs two distinct segments");
  MatrixXd R = MatrixXd::Zero(q, static_cast<Index>(m + 1) * q);
  for (int c = 0; c < q; ++c) {
    R(c, static_cast<Index>(i - 1) * q + c) = 1.0;
    R(c, static_cast<Index>(j - 1) * q + c) = -1.0;
  }
  return Restriction(std::move(R), VectorXd::Zero(q));
}

Restriction zero_segment_restriction(int m, int q, int i) {
  check_indices(m, q, i, 1);
  MatrixXd R = MatrixXd::Zero(q, static_cast<Index>(m + 1) * q);
  for (int c = 0; c < q; ++c) R(c, static_cast<Index>(i - 1) * q + c) = 1.0;
  return Restriction(std::move(R), VectorXd::Zero(q));
}

Restriction zero_coefficient_restriction(int m, int q, int segment, int coef) {
  check_indices(m, q, segment, coef);
  MatrixXd R = MatrixXd::Zero(1, static_cast<Index>(m + 1) * q);
  R(0, static_cast<Index>(segment - 1) * q + coef - 1) = 1.0;
  return Restriction(std::move(R), VectorXd::Zero(1));
}

Restriction linear_trend_restriction(int m, int q) {
  if (q < 3) throw Error(ErrorCode::InvalidArgument, "linear-trend needs q >= 3 regressors per regime");
  const int per = q - 2;
  MatrixXd R = MatrixXd::Zero(static_cast<Index>(m + 1) * per, static_cast<Index>(m + 1) * q);
  for (int p = 0; p <= m; ++p) {
    for (int c = 0; c < per; ++c) R(p * per + c, static_cast<Index>(p) * q + 2 + c) = 1.0;
  }
  return Restriction(std::move(R), VectorXd::Zero(R.rows()));
}

MatrixXd trend_basis(int T) {
  MatrixXd z(T, 4);
  for (int t = 1; t <= T; ++t) {
    const double x = t;
    z.row(t - 1) << 1.0, x, x * std::sqrt(x), x * x;
  }
  return z;
}

namespace {

std::vector<std::string> split_csv_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    const auto first = cell.find_first_not_of(" \t");
    const auto last = cell.find_last_not_of(" \t");
    out.push_back(first == std::string::npos ? std::string() : cell.substr(first, last - first + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, int line_no) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  if (!s.empty() && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end || s.empty()) {
    throw Error(ErrorCode::InvalidData, "line " + std::to_string(line_no) + ": cannot parse '" + s + "' as a number");
  }
  return v;
}

}  // namespace

RegressionData read_regression_csv(const std::filesystem::path& path, bool trend_basis_from_t) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::InvalidData, path.string() + " is empty");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "t" || header[1] != "y") {
    throw Error(ErrorCode::InvalidData, "header must start with t,y");
  }
  const std::size_t q = header.size() - 2;
  for (std::size_t c = 0; c < q; ++c) {
    if (header[c + 2] != "z" + std::to_string(c + 1)) {
      throw Error(ErrorCode::InvalidData, "expected column z" + std::to_string(c + 1) + ", got '" + header[c + 2] + "'");
    }
  }
  if (q == 0 && !trend_basis_from_t) throw Error(ErrorCode::InvalidData, "no regressor columns z1..zq");

  std::vector<double> ys;
  std::vector<std::vector<double>> zs;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::InvalidData, "line " + std::to_string(line_no) + ": expected " +
                                              std::to_string(header.size()) + " fields");
    }
    const double t = parse_double(cells[0], line_no);
    if (t != static_cast<double>(ys.size() + 1)) {
      throw Error(ErrorCode::InvalidData, "line " + std::to_string(line_no) + ": t must run 1..T contiguously");
    }
    ys.push_back(parse_double(cells[1], line_no));
    std::vector<double> row(q);
    for (std::size_t c = 0; c < q; ++c) row[c] = parse_double(cells[c + 2], line_no);
    zs.push_back(std::move(row));
  }
  const int T = static_cast<int>(ys.size());
  VectorXd y = Eigen::Map<VectorXd>(ys.data(), T);
  if (trend_basis_from_t) return RegressionData(std::move(y), trend_basis(T));
  MatrixXd z(T, static_cast<Index>(q));
  for (int t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < q; ++c) z(t, static_cast<Index>(c)) = zs[t][c];
  }
  return RegressionData(std::move(y), std::move(z));
}

void write_regression_csv(const std::filesystem::path& path, const RegressionData& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "t,y";
  for (int c = 1; c <= data.q(); ++c) out << ",z" << c;
  out << '\n';
  char buf[32];
  for (int t = 0; t < data.T(); ++t) {
    out << (t + 1);
    std::snprintf(buf, sizeof buf, ",%.17g", data.y()(t));
    out << buf;
    for (int c = 0; c < data.q(); ++c) {
      std::snprintf(buf, sizeof buf, ",%.17g", data.z()(t, c));
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace cpshrink
