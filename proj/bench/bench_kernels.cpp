// Wall-clock comparison of the OpenMP kernels against their serial paths.
// Usage: cpshrink_bench [threads]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>

#include "cpshrink/segmentation.hpp"
#include "cpshrink/simulation.hpp"
#include "cpshrink/stein_oracle.hpp"

using namespace cpshrink;

namespace {

double seconds(const std::function<void()>& f, int repeats = 3) {
  double best = 1e300;
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void row(const char* name, double serial, double parallel) {
  std::printf("%-28s serial %9.4fs  parallel %9.4fs  speedup %5.2fx\n", name, serial, parallel, serial / parallel);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) set_thread_count(std::atoi(argv[1]));
  std::printf("threads: %d\n", thread_count());

  {
    VectorXd d0(8);
    d0 << 10, 0.02, 0, 0, 9, 0.035, 0, 0;
    const auto data = trend_series(600, {250}, d0, 0.01, 1);
    double sink = 0.0;
    const double s = seconds([&] { sink += SegmentCostTable(data, 20, Exec::Serial)(0, 600); });
    const double p = seconds([&] { sink += SegmentCostTable(data, 20, Exec::Parallel)(0, 600); });
    row("segment cost table T=600", s, p);
    if (sink < 0) std::printf("%g\n", sink);
  }
  {
    const auto sc = random_scaffold(8, 4, 3.0, 5);
    const auto g = GaussianSetup::from_scaffold(sc, random_psd(8, 6));
    const auto h = make_custom("inv", [](double x) { return 1.0 / x; });
    const double s = seconds([&] { mc_cross_identity(g, h, 2'000'000, 1, Exec::Serial); });
    const double p = seconds([&] { mc_cross_identity(g, h, 2'000'000, 1, Exec::Parallel); });
    row("cross identity n=2e6", s, p);
  }
  {
    auto d = build_case1(100);
    d.n_reps = 100;
    d.sigma2_grid = {1.0};
    const double s = seconds([&] { run_monte_carlo(d, Exec::Serial); }, 1);
    const double p = seconds([&] { run_monte_carlo(d, Exec::Parallel); }, 1);
    row("case 1 Monte Carlo 100 reps", s, p);
  }
  return 0;
}
