#include "cpshrink/segmentation.hpp"

#include <cmath>
#include <limits>
#include <optional>

#include "cpshrink/detail/least_squares.hpp"

namespace cpshrink {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_feasible(int T, int m, int h) {
  if (m < 0) throw Error(ErrorCode::InfeasibleConfig, "negative break count");
  if (static_cast<long long>(m + 1) * h > T) {
    throw Error(ErrorCode::InfeasibleConfig, std::to_string(m + 1) + " segments of length >= " + std::to_string(h) +
                                                 " do not fit in T=" + std::to_string(T));
  }
}

// Calls f(breaks) for every feasible break vector in lexicographic order.
template <typename F>
void enumerate_partitions(int T, int m, int h, F&& f) {
  std::vector<int> breaks(m);
  auto rec = [&](auto& self, int idx, int lo) -> void {
    if (idx == m) {
      f(breaks);
      return;
    }
    const int hi = T - (m - idx) * h;
    for (int b = lo; b <= hi; ++b) {
      breaks[idx] = b;
      self(self, idx + 1, b + h);
    }
  };
  rec(rec, 0, h);
}

// Restricted SSR at a partition; +inf when a segment is rank deficient.
double restricted_objective(detail::FactorCache& cache, const Partition& partition, const Restriction& restriction) {
  const auto factors = detail::partition_factors(cache, partition);
  for (const auto* f : factors) {
    if (!f->full_rank) return kInf;
  }
  const auto ue = detail::solve_unrestricted(factors);
  return detail::solve_restricted(factors, ue, restriction, false).ssr;
}

}  // namespace

const char* to_string(SearchMethod method) {
  switch (method) {
    case SearchMethod::DynamicProgramming: return "dynamic-programming";
    case SearchMethod::Exhaustive: return "exhaustive";
    case SearchMethod::CoordinateRefine: return "coordinate-refine";
  }
  return "?";
}

int min_segment_length(const SearchConfig& config, int T, int q) {
  if (!(config.min_seg_frac > 0.0 && config.min_seg_frac < 1.0)) {
    throw Error(ErrorCode::InfeasibleConfig, "min_seg_frac must lie in (0, 1)");
  }
  const int h = static_cast<int>(std::floor(config.min_seg_frac * T));
  return std::max(h, q);
}

std::uint64_t count_partitions(int T, int m, int h) {
  if (static_cast<long long>(m + 1) * h > T) return 0;
  // C(n, m) with n = T - (m+1)h + m, saturating.
  const std::uint64_t n = static_cast<std::uint64_t>(T - (m + 1) * h + m);
  long double c = 1.0L;
  for (int i = 1; i <= m; ++i) c = c * static_cast<long double>(n - m + i) / i;
  if (c > 1.8e19L) return std::numeric_limits<std::uint64_t>::max();
  return static_cast<std::uint64_t>(std::llround(c));
}

double ssr_unrestricted(const RegressionData& data, const Partition& partition) {
  if (partition.T() != data.T()) throw Error(ErrorCode::InvalidPartition, "partition T does not match data");
  detail::FactorCache cache(data);
  return detail::solve_unrestricted(detail::partition_factors(cache, partition)).ssr;
}

double ssr_restricted(const RegressionData& data, const Partition& partition, const Restriction& restriction) {
  if (partition.T() != data.T()) throw Error(ErrorCode::InvalidPartition, "partition T does not match data");
  detail::FactorCache cache(data);
  const auto factors = detail::partition_factors(cache, partition);
  const auto ue = detail::solve_unrestricted(factors);
  return detail::solve_restricted(factors, ue, restriction, false).ssr;
}

SegmentCostTable::SegmentCostTable(int T, int min_length)
    : T_(T), min_length_(min_length), cost_(static_cast<std::size_t>(T) * T, kInf) {
  if (min_length < 1) throw Error(ErrorCode::InfeasibleConfig, "minimum segment length must be >= 1");
}

SegmentCostTable::SegmentCostTable(const RegressionData& data, int min_length, Exec exec)
    : SegmentCostTable(data.T(), min_length) {
  const int T = T_;
  const int q = data.q();
  auto fill_row = [&](int i) {
    detail::IncrementalQR qr(q);
    bool ranked = false;
    double* row = cost_.data() + static_cast<std::size_t>(i) * T;
    for (int t = i; t < T; ++t) {
      qr.add_row(data.z().row(t), data.y()(t));
      if (t - i + 1 < min_length_) continue;
      // Rank can only grow as rows are added.
      if (!ranked) ranked = qr.full_rank();
      if (ranked) row[t] = qr.ssr();
    }
  };
  parallel_for(T, exec, [&](std::int64_t i) { fill_row(static_cast<int>(i)); });
}

SegmentCostTable SegmentCostTable::reference(const RegressionData& data, int min_length) {
  SegmentCostTable table(data.T(), min_length);
  const int T = data.T();
  for (int i = 0; i < T; ++i) {
    for (int j = i + min_length; j <= T; ++j) {
      const MatrixXd z = data.z().middleRows(i, j - i);
      if (!equilibrated_full_rank(z)) continue;
      const VectorXd y = data.y().segment(i, j - i);
      const VectorXd beta = z.householderQr().solve(y);
      table.cost_[static_cast<std::size_t>(i) * T + (j - 1)] = (y - z * beta).squaredNorm();
    }
  }
  return table;
}

SegmentationResult find_breaks_unrestricted(const RegressionData& data, const SearchConfig& config) {
  const int h = min_segment_length(config, data.T(), data.q());
  check_feasible(data.T(), config.m, h);
  SearchConfig dp = config;
  dp.method = SearchMethod::DynamicProgramming;
  if (config.method == SearchMethod::Exhaustive) {
    // Honour an explicit exhaustive request: enumerate on the same table.
    const SegmentCostTable table(data, h);
    const std::uint64_t n = count_partitions(data.T(), config.m, h);
    if (n > config.exhaustive_budget) {
      throw Error(ErrorCode::BudgetExceeded, std::to_string(n) + " partitions exceed the exhaustive budget of " +
                                                 std::to_string(config.exhaustive_budget));
    }
    std::optional<std::vector<int>> best;
    double best_ssr = kInf;
    enumerate_partitions(data.T(), config.m, h, [&](const std::vector<int>& b) {
      double s = 0.0;
      int prev = 0;
      for (int x : b) {
        s += table(prev, x);
        prev = x;
      }
      s += table(prev, data.T());
      if (s < best_ssr) {
        best_ssr = s;
        best = b;
      }
    });
    if (!best) throw Error(ErrorCode::SegmentRankDeficient, "every candidate partition has a rank-deficient segment");
    return {Partition(*best, data.T()), best_ssr, SearchMethod::Exhaustive, 0, true, {}};
  }
  return find_breaks_unrestricted(SegmentCostTable(data, h), dp);
}

SegmentationResult find_breaks_unrestricted(const SegmentCostTable& table, const SearchConfig& config) {
  const int T = table.T();
  const int h = table.min_length();
  const int m = config.m;
  check_feasible(T, m, h);

  // best[b][j]: b breaks covering rows [0, j], j 0-based inclusive.
  std::vector<std::vector<double>> val(m + 1, std::vector<double>(T, kInf));
  std::vector<std::vector<std::vector<int>>> arg(m + 1, std::vector<std::vector<int>>(T));
  for (int j = h - 1; j < T; ++j) val[0][j] = table(0, j + 1);
  for (int b = 1; b <= m; ++b) {
    const int j_lo = (b + 1) * h - 1;
    const int j_hi = T - (m - b) * h - 1;
    for (int j = j_lo; j <= j_hi; ++j) {
      double best = kInf;
      int best_i = -1;
      // i = first row of the last segment = 1-based break date.
      for (int i = b * h; i <= j - h + 1; ++i) {
        const double v = val[b - 1][i - 1] + table(i, j + 1);
        if (v < best) {
          best = v;
          best_i = i;
        } else if (v == best && best_i >= 0 && v < kInf) {
          std::vector<int> cand = arg[b - 1][i - 1];
          cand.push_back(i);
          std::vector<int> cur = arg[b - 1][best_i - 1];
          cur.push_back(best_i);
          if (cand < cur) best_i = i;
        }
      }
      if (best_i < 0) continue;
      val[b][j] = best;
      arg[b][j] = arg[b - 1][best_i - 1];
      arg[b][j].push_back(best_i);
    }
  }
  if (!(val[m][T - 1] < kInf)) {
    throw Error(ErrorCode::SegmentRankDeficient, "every candidate partition has a rank-deficient segment");
  }
  return {Partition(arg[m][T - 1], T), val[m][T - 1], SearchMethod::DynamicProgramming, 0, true, {}};
}

SegmentationResult find_breaks_restricted(const RegressionData& data, const Restriction& restriction,
                                          const SearchConfig& config, const Partition* start) {
  const int T = data.T();
  const int m = config.m;
  const int h = min_segment_length(config, T, data.q());
  check_feasible(T, m, h);
  if (restriction.cols() != (m + 1) * data.q()) {
    throw Error(ErrorCode::DimensionMismatch, "restriction has " + std::to_string(restriction.cols()) +
                                                  " columns, expected (m+1)q = " + std::to_string((m + 1) * data.q()));
  }
  detail::FactorCache cache(data);

  if (config.method == SearchMethod::Exhaustive) {
    const std::uint64_t n = count_partitions(T, m, h);
    if (n > config.exhaustive_budget) {
      throw Error(ErrorCode::BudgetExceeded, std::to_string(n) + " partitions exceed the exhaustive budget of " +
                                                 std::to_string(config.exhaustive_budget));
    }
    std::optional<std::vector<int>> best;
    double best_ssr = kInf;
    enumerate_partitions(T, m, h, [&](const std::vector<int>& b) {
      const double s = restricted_objective(cache, Partition(b, T), restriction);
      if (s < best_ssr) {
        best_ssr = s;
        best = b;
      }
    });
    if (!best) throw Error(ErrorCode::SegmentRankDeficient, "every candidate partition has a rank-deficient segment");
    return {Partition(*best, T), best_ssr, SearchMethod::Exhaustive, 0, true, {}};
  }
  if (config.method != SearchMethod::CoordinateRefine) {
    throw Error(ErrorCode::InvalidArgument, "restricted search supports exhaustive or coordinate-refine only");
  }

  std::vector<int> breaks;
  if (start) {
    if (start->T() != T || start->m() != m) throw Error(ErrorCode::InvalidPartition, "start partition does not match");
    breaks = start->breaks();
  } else {
    SearchConfig dp = config;
    dp.method = SearchMethod::DynamicProgramming;
    breaks = find_breaks_unrestricted(data, dp).partition.breaks();
  }
  double current = restricted_objective(cache, Partition(breaks, T), restriction);
  SegmentationResult out{Partition(breaks, T), current, SearchMethod::CoordinateRefine, 0, false, {current}};
  for (int sweep = 0; sweep < config.max_iters; ++sweep) {
    bool moved = false;
    for (int b = 0; b < m; ++b) {
      const int lo = (b == 0 ? 0 : breaks[b - 1]) + h;
      const int hi = (b == m - 1 ? T : breaks[b + 1]) - h;
      const int keep = breaks[b];
      int best_at = keep;
      double best = current;
      for (int c = lo; c <= hi; ++c) {
        if (c == keep) continue;
        breaks[b] = c;
        const double s = restricted_objective(cache, Partition(breaks, T), restriction);
        if (s < best) {
          best = s;
          best_at = c;
        }
      }
      breaks[b] = best_at;
      if (best_at != keep) {
        current = best;
        moved = true;
      }
    }
    out.iterations = sweep + 1;
    out.ssr_trace.push_back(current);
    if (!moved) break;
  }
  if (!(current < kInf)) throw Error(ErrorCode::SegmentRankDeficient, "refinement found no full-rank partition");
  out.partition = Partition(breaks, T);
  out.ssr = current;
  return out;
}

}  // namespace cpshrink
