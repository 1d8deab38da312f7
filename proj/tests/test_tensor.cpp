#include <cmath>
#include <vector>

#include "afx/gradcheck.hpp"
#include "afx/kernels.hpp"
#include "afx/ops.hpp"
#include "afx/optim.hpp"
#include "afx/tensor.hpp"
#include "doctest.h"

using namespace afx;

namespace {

// Independent naive references used as oracles.

std::vector<double> matmul_reference(const std::vector<double>& a, const std::vector<double>& b,
                                     int m, int k, int n) {
  std::vector<double> c(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < k; ++l) c[i * n + j] += a[i * k + l] * b[l * n + j];
  return c;
}

std::vector<double> softmax_reference(const std::vector<double>& x) {
  double sum = 0.0;
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) sum += std::exp(x[i]);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::exp(x[i]) / sum;
  return y;
}

double gelu_reference(double x) {
  return 0.5 * x * (1.0 + std::tanh(0.7978845608028654 * (x + 0.044715 * x * x * x)));
}

std::vector<double> attention_reference(const std::vector<double>& q, const std::vector<double>& k,
                                        const std::vector<double>& v, int lq, int lk, int d,
                                        int heads) {
  int dh = d / heads;
  std::vector<double> out(static_cast<std::size_t>(lq) * d, 0.0);
  for (int h = 0; h < heads; ++h) {
    for (int i = 0; i < lq; ++i) {
      std::vector<double> scores(static_cast<std::size_t>(lk));
      for (int j = 0; j < lk; ++j) {
        double s = 0.0;
        for (int c = 0; c < dh; ++c) s += q[i * d + h * dh + c] * k[j * d + h * dh + c];
        scores[static_cast<std::size_t>(j)] = s / std::sqrt(static_cast<double>(dh));
      }
      std::vector<double> w = softmax_reference(scores);
      for (int j = 0; j < lk; ++j)
        for (int c = 0; c < dh; ++c)
          out[i * d + h * dh + c] += w[static_cast<std::size_t>(j)] * v[j * d + h * dh + c];
    }
  }
  return out;
}

Tensor randn64(std::vector<int> shape, Rng& rng, bool rg = false) {
  return Tensor::randn(std::move(shape), rng, 1.0, DType::F64, rg);
}

}  // namespace

TEST_CASE("matmul identity is bitwise exact") {
  Rng rng(11);
  Tensor m = Tensor::randn({3, 3}, rng, 1.0, DType::F32);
  Tensor i3 = Tensor::identity(3, DType::F32);
  Tensor out = ops::matmul(i3, m);
  CHECK(out.same_bits(m));
  Tensor out2 = ops::matmul(m, i3);
  CHECK(out2.same_bits(m));
}

TEST_CASE("matmul hand case") {
  Tensor a = Tensor::from_values({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from_values({2, 1}, {0, 1});
  Tensor c = ops::matmul(a, b);
  CHECK(c.at(0) == doctest::Approx(2.0));
  CHECK(c.at(1) == doctest::Approx(4.0));
}

TEST_CASE("matmul matches triple-loop reference") {
  Rng rng(5);
  Tensor a = randn64({5, 7}, rng);
  Tensor b = randn64({7, 3}, rng);
  Tensor c = ops::matmul(a, b);
  std::vector<double> want = matmul_reference(a.to_doubles(), b.to_doubles(), 5, 7, 3);
  for (std::size_t i = 0; i < c.numel(); ++i) CHECK(std::abs(c.at(i) - want[i]) < 1e-12);
}

TEST_CASE("matmul dimension mismatch names both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  CHECK_THROWS_WITH_AS(ops::matmul(a, b), doctest::Contains("[2, 3]"), ShapeError);
  try {
    ops::matmul(a, b);
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("[4, 2]") != std::string::npos);
  }
}

TEST_CASE("softmax uniform logits") {
  Tensor x = Tensor::from_values({3}, {0, 0, 0});
  Tensor y = ops::softmax(x, 0);
  for (int i = 0; i < 3; ++i) CHECK(y.at(static_cast<std::size_t>(i)) == doctest::Approx(1.0 / 3));
}

TEST_CASE("softmax is stable under large logits") {
  Tensor x = Tensor::from_values({2}, {1000, 0});
  Tensor y = ops::softmax(x, 0);
  CHECK(std::isfinite(y.at(0)));
  CHECK(y.at(0) == doctest::Approx(1.0));
  CHECK(y.at(1) == doctest::Approx(0.0));
}

TEST_CASE("softmax matches exp/sum reference") {
  Rng rng(17);
  Tensor x = randn64({9}, rng);
  Tensor y = ops::softmax(x, 0);
  std::vector<double> want = softmax_reference(x.to_doubles());
  for (std::size_t i = 0; i < 9; ++i) CHECK(std::abs(y.at(i) - want[i]) < 1e-14);
}

TEST_CASE("softmax rows sum to one for magnitudes up to 1e3") {
  Rng rng(23);
  for (double mag : {1.0, 10.0, 1000.0}) {
    Tensor x = Tensor::randn({8, 16}, rng, mag, DType::F32);
    Tensor y = ops::softmax(x, 1);
    for (int r = 0; r < 8; ++r) {
      double s = 0;
      for (int c = 0; c < 16; ++c) s += y.at2(r, c);
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("softmax invalid axis") {
  Tensor x = Tensor::zeros({3, 3});
  CHECK_THROWS_AS(ops::softmax(x, 2), ShapeError);
  CHECK_THROWS_AS(ops::softmax(x, -3), ShapeError);
}

TEST_CASE("gelu fixed points and asymptote") {
  Tensor x = Tensor::from_values({3}, {0.0, 1.0, 20.0}, DType::F64);
  Tensor y = ops::gelu(x);
  CHECK(y.at(0) == 0.0);
  CHECK(y.at(1) == doctest::Approx(gelu_reference(1.0)).epsilon(1e-12));
  CHECK(y.at(2) == doctest::Approx(20.0).epsilon(1e-9));
}

TEST_CASE("attention single key gives weight one") {
  Rng rng(3);
  Tensor q = randn64({4, 8}, rng);
  Tensor k = randn64({1, 8}, rng);
  Tensor v = randn64({1, 8}, rng);
  std::vector<Tensor> weights;
  Tensor out = ops::attention(q, k, v, 2, false, &weights);
  for (const Tensor& w : weights)
    for (std::size_t i = 0; i < w.numel(); ++i) CHECK(w.at(i) == 1.0);
  // output rows are the value row, per head
  for (int i = 0; i < 4; ++i)
    for (int c = 0; c < 8; ++c) CHECK(out.at2(i, c) == doctest::Approx(v.at2(0, c)));
}

TEST_CASE("attention orthogonal queries give uniform weights") {
  // q rows orthogonal to every k row -> all scores zero -> weights 1/Lk
  Tensor q = Tensor::from_values({2, 4}, {1, 0, 0, 0, 0, 1, 0, 0}, DType::F64);
  Tensor k = Tensor::from_values({3, 4}, {0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 1, 1}, DType::F64);
  Rng rng(9);
  Tensor v = randn64({3, 4}, rng);
  std::vector<Tensor> weights;
  ops::attention(q, k, v, 1, false, &weights);
  for (std::size_t i = 0; i < weights[0].numel(); ++i)
    CHECK(weights[0].at(i) == doctest::Approx(1.0 / 3));
}

TEST_CASE("attention matches loop reference") {
  Rng rng(29);
  Tensor q = randn64({4, 8}, rng);
  Tensor k = randn64({6, 8}, rng);
  Tensor v = randn64({6, 8}, rng);
  for (int heads : {1, 2, 4}) {
    Tensor out = ops::attention(q, k, v, heads);
    std::vector<double> want =
        attention_reference(q.to_doubles(), k.to_doubles(), v.to_doubles(), 4, 6, 8, heads);
    for (std::size_t i = 0; i < out.numel(); ++i) CHECK(std::abs(out.at(i) - want[i]) < 1e-10);
  }
}

TEST_CASE("attention rejects indivisible heads") {
  Tensor q = Tensor::zeros({2, 6});
  CHECK_THROWS_AS(ops::attention(q, q, q, 4), ConfigError);
}

TEST_CASE("backward of sum is ones") {
  Rng rng(31);
  Tensor x = randn64({3, 4}, rng, true);
  backward(ops::sum_all(x));
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(x.grad_at(i) == 1.0);
}

TEST_CASE("backward of sum of squares is 2x") {
  Rng rng(37);
  Tensor x = randn64({5}, rng, true);
  backward(ops::sum_all(ops::mul(x, x)));
  for (std::size_t i = 0; i < x.numel(); ++i)
    CHECK(x.grad_at(i) == doctest::Approx(2.0 * x.at(i)).epsilon(1e-12));
}

TEST_CASE("backward rejects non-scalar loss") {
  Tensor x = Tensor::zeros({2, 2}, DType::F64, true);
  Tensor y = ops::scale(x, 2.0);
  CHECK_THROWS_AS(backward(y), ShapeError);
}

TEST_CASE("composed graph matches finite differences") {
  Rng rng(41);
  Tensor x = randn64({4, 6}, rng, true);
  Tensor w = randn64({6, 5}, rng, true);
  Tensor b = randn64({5}, rng, true);
  Tensor g = Tensor::full({5}, 1.0, DType::F64);
  g.set_requires_grad(true);
  Tensor bb = Tensor::zeros({5}, DType::F64, true);
  Tensor probe = randn64({4, 5}, rng);
  auto loss = [&]() {
    Tensor h = ops::gelu(ops::linear(x, w, b));
    Tensor n = ops::layer_norm(h, g, bb);
    Tensor s = ops::softmax(n, 1);
    return ops::sum_all(ops::mul(s, probe));
  };
  CHECK(finite_diff_max_rel_error(loss, {x, w, b, g, bb}) < 1e-4);
}

TEST_CASE("per-op gradients match finite differences") {
  Rng rng(43);
  // attention composite, all inputs tracked
  Tensor q = Tensor::randn({3, 4}, rng, 0.7, DType::F64, true);
  Tensor k = Tensor::randn({5, 4}, rng, 0.7, DType::F64, true);
  Tensor v = Tensor::randn({5, 4}, rng, 0.7, DType::F64, true);
  Tensor probe = randn64({3, 4}, rng);
  auto attn_loss = [&]() { return ops::sum_all(ops::mul(ops::attention(q, k, v, 2), probe)); };
  CHECK(finite_diff_max_rel_error(attn_loss, {q, k, v}) < 1e-4);

  // row/col surgery ops
  Tensor x = randn64({6, 4}, rng, true);
  Tensor s = randn64({3}, rng, true);
  Tensor probe2 = randn64({3, 2}, rng);
  auto surgery_loss = [&]() {
    Tensor a = ops::slice_rows(x, 1, 3);
    Tensor c = ops::narrow_cols(a, 1, 2);
    Tensor r = ops::scale_rows(c, s);
    return ops::sum_all(ops::mul(r, probe2));
  };
  CHECK(finite_diff_max_rel_error(surgery_loss, {x, s}) < 1e-4);

  // concat + mean + cross entropy
  Tensor l1 = randn64({2, 7}, rng, true);
  Tensor l2 = randn64({3, 7}, rng, true);
  std::vector<int> targets = {1, 6, 0, 3, 3};
  auto ce_loss = [&]() {
    return ops::cross_entropy_mean(ops::concat_rows({l1, l2}), targets);
  };
  CHECK(finite_diff_max_rel_error(ce_loss, {l1, l2}) < 1e-4);

  // embedding gather
  Tensor table = randn64({9, 4}, rng, true);
  std::vector<int> ids = {0, 4, 4, 8};
  Tensor probe3 = randn64({4, 4}, rng);
  auto emb_loss = [&]() {
    return ops::sum_all(ops::mul(ops::embedding_rows(table, ids), probe3));
  };
  CHECK(finite_diff_max_rel_error(emb_loss, {table}) < 1e-4);

  // causal softmax
  Tensor sc = randn64({4, 4}, rng, true);
  Tensor probe4 = randn64({4, 4}, rng);
  auto causal_loss = [&]() { return ops::sum_all(ops::mul(ops::softmax_causal(sc), probe4)); };
  CHECK(finite_diff_max_rel_error(causal_loss, {sc}) < 1e-4);
}

TEST_CASE("cross entropy 3-token toy case matches hand oracle") {
  Tensor logits = Tensor::from_values({3, 3}, {1, 2, 3, 0.5, 0.5, 0.5, -1, 4, 0}, DType::F64);
  std::vector<int> targets = {2, 0, 1};
  Tensor loss = ops::cross_entropy_mean(logits, targets);
  double want = 0.0;
  for (int i = 0; i < 3; ++i) {
    std::vector<double> row = {logits.at2(i, 0), logits.at2(i, 1), logits.at2(i, 2)};
    std::vector<double> p = softmax_reference(row);
    want -= std::log(p[static_cast<std::size_t>(targets[static_cast<std::size_t>(i)])]);
  }
  want /= 3.0;
  CHECK(loss.at(0) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("two passes produce bit-identical gradients") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = Tensor::randn({4, 4}, rng, 1.0, DType::F32, true);
    Tensor w = Tensor::randn({4, 4}, rng, 1.0, DType::F32, true);
    Tensor y = ops::softmax(ops::matmul(ops::gelu(x), w), 1);
    backward(ops::sum_all(ops::mul(y, y)));
    std::pair<std::vector<double>, std::vector<double>> out{x.grad_to_doubles(),
                                                            y.to_doubles()};
    return out;
  };
  auto a = run(99);
  auto b = run(99);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("non-finite op output raises instead of propagating") {
  Tensor a = Tensor::from_values({1, 1}, {1e308}, DType::F64);
  Tensor b = Tensor::from_values({1, 1}, {1e308}, DType::F64);
  CHECK_THROWS_AS(ops::matmul(a, b), NumericError);
}

TEST_CASE("adamw zero gradient leaves parameters unchanged") {
  Tensor p = Tensor::from_values({3}, {1.0, -2.0, 0.5}, DType::F64, true);
  backward(ops::scale(ops::sum_all(p), 0.0));  // gradients present but zero
  Tensor before = p.detach_copy();
  AdamW opt({.lr = 0.1, .weight_decay = 0.0});
  opt.step({{"p", p}});
  CHECK(p.same_bits(before));
}

TEST_CASE("adamw single step matches hand trace") {
  Tensor p = Tensor::from_values({1}, {1.0}, DType::F64, true);
  backward(ops::sum_all(p));  // g = 1
  AdamW opt({.lr = 0.1, .weight_decay = 0.0});
  opt.step({{"p", p}});
  double m = 0.1 * 1.0, v = 0.001 * 1.0;
  double mhat = m / (1 - 0.9), vhat = v / (1 - 0.999);
  double want = 1.0 - 0.1 * (mhat / (std::sqrt(vhat) + 1e-8));
  CHECK(p.at(0) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("adamw decoupled decay shrinks by lr*wd*p") {
  Tensor p = Tensor::from_values({2}, {2.0, -4.0}, DType::F64, true);
  backward(ops::scale(ops::sum_all(p), 0.0));
  AdamW opt({.lr = 0.1, .weight_decay = 0.01});
  opt.step({{"p", p}});
  CHECK(p.at(0) == doctest::Approx(2.0 - 0.1 * 0.01 * 2.0).epsilon(1e-12));
  CHECK(p.at(1) == doctest::Approx(-4.0 - 0.1 * 0.01 * -4.0).epsilon(1e-12));
}

TEST_CASE("adamw reports the parameter with a NaN gradient") {
  Tensor p = Tensor::from_values({1}, {1.0}, DType::F64, true);
  backward(ops::sum_all(p));
  p.node()->grad64[0] = std::nan("");
  AdamW opt({});
  CHECK_THROWS_WITH_AS(opt.step({{"theta", p}}, "adapters"), doctest::Contains("theta"),
                       NumericError);
}
