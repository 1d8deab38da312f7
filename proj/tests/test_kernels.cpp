#include <array>
#include <vector>

#include "afx/kernels.hpp"
#include "afx/rng.hpp"
#include "doctest.h"

using namespace afx;

namespace {

struct GrainOverride {
  std::size_t saved;
  explicit GrainOverride(std::size_t g) : saved(kernels::omp_grain) { kernels::omp_grain = g; }
  ~GrainOverride() { kernels::omp_grain = saved; }
};

template <typename T>
std::vector<T> random_vec(std::size_t n, Rng& rng) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.normal());
  return v;
}

}  // namespace

TEST_CASE_TEMPLATE("parallel matmul kernels are bitwise equal to serial", T, float, double) {
  Rng rng(7);
  for (auto [m, k, n] : std::vector<std::array<int, 3>>{{1, 1, 1}, {3, 5, 2}, {17, 33, 9}, {64, 64, 64}}) {
    auto a = random_vec<T>(static_cast<std::size_t>(m) * k, rng);
    auto b = random_vec<T>(static_cast<std::size_t>(k) * n, rng);
    auto bt = random_vec<T>(static_cast<std::size_t>(n) * k, rng);
    auto at = random_vec<T>(static_cast<std::size_t>(k) * m, rng);
    auto init = random_vec<T>(static_cast<std::size_t>(m) * n, rng);
    for (bool acc : {false, true}) {
      GrainOverride force_parallel(0);
      std::vector<T> c_par = init, c_ser = init;
      kernels::matmul_nn(a.data(), b.data(), c_par.data(), m, k, n, acc);
      kernels::serial::matmul_nn(a.data(), b.data(), c_ser.data(), m, k, n, acc);
      CHECK(c_par == c_ser);

      c_par = init, c_ser = init;
      kernels::matmul_nt(a.data(), bt.data(), c_par.data(), m, k, n, acc);
      kernels::serial::matmul_nt(a.data(), bt.data(), c_ser.data(), m, k, n, acc);
      CHECK(c_par == c_ser);

      c_par = init, c_ser = init;
      kernels::matmul_tn(at.data(), b.data(), c_par.data(), m, k, n, acc);
      kernels::serial::matmul_tn(at.data(), b.data(), c_ser.data(), m, k, n, acc);
      CHECK(c_par == c_ser);
    }
  }
}

TEST_CASE_TEMPLATE("parallel pointwise and row kernels are bitwise equal to serial", T, float,
                   double) {
  Rng rng(13);
  GrainOverride force_parallel(0);

  auto x = random_vec<T>(1023, rng);
  std::vector<T> y1(x.size()), y2(x.size());
  kernels::gelu(x.data(), y1.data(), x.size());
  kernels::serial::gelu(x.data(), y2.data(), x.size());
  CHECK(y1 == y2);

  std::vector<T> dx1(x.size(), T(0.5)), dx2(x.size(), T(0.5));
  kernels::gelu_backward(x.data(), y1.data(), dx1.data(), x.size());
  kernels::serial::gelu_backward(x.data(), y2.data(), dx2.data(), x.size());
  CHECK(dx1 == dx2);

  const int rows = 37, cols = 19;
  auto m = random_vec<T>(static_cast<std::size_t>(rows) * cols, rng);
  std::vector<T> s1(m.size()), s2(m.size());
  kernels::softmax_lanes(m.data(), s1.data(), static_cast<std::size_t>(rows), cols, 1);
  kernels::serial::softmax_lanes(m.data(), s2.data(), static_cast<std::size_t>(rows), cols, 1);
  CHECK(s1 == s2);

  auto sq = random_vec<T>(29 * 29, rng);
  std::vector<T> c1(sq.size()), c2(sq.size());
  kernels::softmax_rows_causal(sq.data(), c1.data(), 29, 29, 0);
  kernels::serial::softmax_rows_causal(sq.data(), c2.data(), 29, 29, 0);
  CHECK(c1 == c2);

  auto gain = random_vec<T>(cols, rng);
  auto bias = random_vec<T>(cols, rng);
  std::vector<T> n1(m.size()), n2(m.size());
  kernels::layer_norm_rows(m.data(), gain.data(), bias.data(), n1.data(), rows, cols, T(1e-5));
  kernels::serial::layer_norm_rows(m.data(), gain.data(), bias.data(), n2.data(), rows, cols,
                                   T(1e-5));
  CHECK(n1 == n2);

  auto p1 = random_vec<T>(513, rng);
  auto p2 = p1;
  auto g = random_vec<T>(p1.size(), rng);
  std::vector<T> m1(p1.size(), T(0)), v1(p1.size(), T(0)), mm2(p1.size(), T(0)), vv2(p1.size(), T(0));
  kernels::adamw_update(p1.data(), g.data(), m1.data(), v1.data(), p1.size(), T(0.01), T(0.9),
                        T(0.999), T(1e-8), T(0.01), 1);
  kernels::serial::adamw_update(p2.data(), g.data(), mm2.data(), vv2.data(), p2.size(), T(0.01),
                                T(0.9), T(0.999), T(1e-8), T(0.01), 1);
  CHECK(p1 == p2);
  CHECK(m1 == mm2);
  CHECK(v1 == vv2);
}

TEST_CASE("default grain also yields identical results on large shapes") {
  Rng rng(21);
  const int m = 96, k = 80, n = 72;  // large enough to cross the default grain
  auto a = random_vec<float>(static_cast<std::size_t>(m) * k, rng);
  auto b = random_vec<float>(static_cast<std::size_t>(k) * n, rng);
  std::vector<float> c1(static_cast<std::size_t>(m) * n), c2(c1.size());
  kernels::matmul_nn(a.data(), b.data(), c1.data(), m, k, n, false);
  kernels::serial::matmul_nn(a.data(), b.data(), c2.data(), m, k, n, false);
  CHECK(c1 == c2);
}
