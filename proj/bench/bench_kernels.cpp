// Times the OpenMP kernels against the serial reference implementations and
// verifies bitwise agreement on the benchmarked shapes.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "afx/kernels.hpp"
#include "afx/rng.hpp"

using afx::Rng;
using Clock = std::chrono::steady_clock;

namespace {

std::vector<float> random_vec(std::size_t n, Rng& rng) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

template <typename F>
double time_best_of(int reps, F&& fn) {
  double best = 1e100;
  for (int r = 0; r < reps; ++r) {
    auto t0 = Clock::now();
    fn();
    auto t1 = Clock::now();
    double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    if (ms < best) best = ms;
  }
  return best;
}

void report(const char* name, double serial_ms, double parallel_ms, bool bitwise_equal) {
  std::printf("%-28s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx   %s\n", name, serial_ms,
              parallel_ms, serial_ms / parallel_ms, bitwise_equal ? "bitwise-equal" : "MISMATCH");
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
  std::printf("openmp: not enabled\n");
#endif
  Rng rng(1234);
  const int reps = 5;

  {
    const int m = 256, k = 256, n = 256;
    auto a = random_vec(static_cast<std::size_t>(m) * k, rng);
    auto b = random_vec(static_cast<std::size_t>(k) * n, rng);
    std::vector<float> cs(static_cast<std::size_t>(m) * n), cp(cs.size());
    double ts = time_best_of(reps, [&] { afx::kernels::serial::matmul_nn(a.data(), b.data(), cs.data(), m, k, n, false); });
    double tp = time_best_of(reps, [&] { afx::kernels::matmul_nn(a.data(), b.data(), cp.data(), m, k, n, false); });
    report("matmul_nn 256^3", ts, tp, std::memcmp(cs.data(), cp.data(), cs.size() * 4) == 0);
  }
  {
    const int m = 256, k = 256, n = 256;
    auto a = random_vec(static_cast<std::size_t>(m) * k, rng);
    auto b = random_vec(static_cast<std::size_t>(n) * k, rng);
    std::vector<float> cs(static_cast<std::size_t>(m) * n), cp(cs.size());
    double ts = time_best_of(reps, [&] { afx::kernels::serial::matmul_nt(a.data(), b.data(), cs.data(), m, k, n, false); });
    double tp = time_best_of(reps, [&] { afx::kernels::matmul_nt(a.data(), b.data(), cp.data(), m, k, n, false); });
    report("matmul_nt 256^3", ts, tp, std::memcmp(cs.data(), cp.data(), cs.size() * 4) == 0);
  }
  {
    const std::size_t n = 1u << 22;
    auto x = random_vec(n, rng);
    std::vector<float> ys(n), yp(n);
    double ts = time_best_of(reps, [&] { afx::kernels::serial::gelu(x.data(), ys.data(), n); });
    double tp = time_best_of(reps, [&] { afx::kernels::gelu(x.data(), yp.data(), n); });
    report("gelu 4M", ts, tp, std::memcmp(ys.data(), yp.data(), n * 4) == 0);
  }
  {
    const int rows = 4096, cols = 512;
    auto x = random_vec(static_cast<std::size_t>(rows) * cols, rng);
    std::vector<float> ys(x.size()), yp(x.size());
    double ts = time_best_of(reps, [&] {
      afx::kernels::serial::softmax_lanes(x.data(), ys.data(), static_cast<std::size_t>(rows), cols, 1);
    });
    double tp = time_best_of(reps, [&] {
      afx::kernels::softmax_lanes(x.data(), yp.data(), static_cast<std::size_t>(rows), cols, 1);
    });
    report("softmax 4096x512", ts, tp, std::memcmp(ys.data(), yp.data(), ys.size() * 4) == 0);
  }
  {
    const int rows = 4096, cols = 512;
    auto x = random_vec(static_cast<std::size_t>(rows) * cols, rng);
    auto gain = random_vec(cols, rng);
    auto bias = random_vec(cols, rng);
    std::vector<float> ys(x.size()), yp(x.size());
    double ts = time_best_of(reps, [&] {
      afx::kernels::serial::layer_norm_rows(x.data(), gain.data(), bias.data(), ys.data(), rows, cols, 1e-5f);
    });
    double tp = time_best_of(reps, [&] {
      afx::kernels::layer_norm_rows(x.data(), gain.data(), bias.data(), yp.data(), rows, cols, 1e-5f);
    });
    report("layer_norm 4096x512", ts, tp, std::memcmp(ys.data(), yp.data(), ys.size() * 4) == 0);
  }
  return 0;
}
