#pragma once

#include <cstdint>
#include <vector>

#include "cpshrink/exec.hpp"
#include "cpshrink/model_core.hpp"

namespace cpshrink {

enum class SearchMethod { DynamicProgramming, Exhaustive, CoordinateRefine };

const char* to_string(SearchMethod method);

struct SearchConfig {
  int m = 1;
  double min_seg_frac = 0.15;
  SearchMethod method = SearchMethod::DynamicProgramming;
  int max_iters = 50;
  // Exhaustive refuses to run above this many candidate partitions.
  std::uint64_t exhaustive_budget = 5'000'000;
};

struct SegmentationResult {
  Partition partition;
  double ssr = 0.0;
  SearchMethod method_used = SearchMethod::DynamicProgramming;
  int iterations = 0;
  bool is_global = true;
  // CoordinateRefine only: SSR at the start and after every sweep.
  std::vector<double> ssr_trace;
};

/// max(floor(tau T), q).
int min_segment_length(const SearchConfig& config, int T, int q);

/// Number of partitions of 1..T into m+1 segments of length >= h.
std::uint64_t count_partitions(int T, int m, int h);

double ssr_unrestricted(const RegressionData& data, const Partition& partition);
double ssr_restricted(const RegressionData& data, const Partition& partition, const Restriction& restriction);

/// SSR of every segment [i, j) with j - i >= min_length; +inf where the
/// segment's regressors are rank deficient. Built once per data set by
/// Givens row updates from each start index.
class SegmentCostTable {
 public:
  SegmentCostTable(const RegressionData& data, int min_length, Exec exec = Exec::Parallel);

  /// Naive version refitting every segment from scratch; kept for tests.
  static SegmentCostTable reference(const RegressionData& data, int min_length);

  int T() const { return T_; }
  int min_length() const { return min_length_; }
  /// Cost of 0-based rows [begin, end).
  double operator()(int begin, int end) const { return cost_[static_cast<std::size_t>(begin) * T_ + (end - 1)]; }

 private:
  SegmentCostTable(int T, int min_length);

  int T_;
  int min_length_;
  std::vector<double> cost_;
};

/// Global SSR minimizer over partitions with m breaks. Ties go to the
/// lexicographically smallest break vector.
SegmentationResult find_breaks_unrestricted(const RegressionData& data, const SearchConfig& config);
SegmentationResult find_breaks_unrestricted(const SegmentCostTable& table, const SearchConfig& config);

/// Restricted SSR minimizer. Exhaustive is global; CoordinateRefine starts at
/// `start` (the unrestricted breaks when not given) and is a local search.
SegmentationResult find_breaks_restricted(const RegressionData& data, const Restriction& restriction,
                                          const SearchConfig& config, const Partition* start = nullptr);

}  // namespace cpshrink
