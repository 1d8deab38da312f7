#include <cmath>
#include <cstdio>

#include "afx/checkpoint.hpp"
#include "afx/encoders.hpp"
#include "afx/gradcheck.hpp"
#include "afx/ops.hpp"
#include "afx/projection.hpp"
#include "doctest.h"
#include "test_helpers.hpp"

using namespace afx;

TEST_CASE("qformer resamples any input length to its query count") {
  Rng rng(1);
  QFormer qf(32, 16, 24, 4, Rng(5));
  for (int len : {1, 3, 32, 100, 256}) {
    Tensor feats = Tensor::randn({len, 24}, rng, 1.0);
    Tensor out = qf.forward(feats);
    CHECK(out.dim(0) == 32);
    CHECK(out.dim(1) == 16);
  }
}

TEST_CASE("qformer single-key cross attention weights are exactly one") {
  Rng rng(2);
  QFormer qf(4, 8, 8, 2, Rng(6));
  Tensor feats = Tensor::randn({1, 8}, rng, 1.0);
  std::vector<Tensor> weights;
  qf.forward(feats, &weights);
  CHECK(weights.size() == 2 * 2);  // heads x layers
  for (const Tensor& w : weights) {
    CHECK(w.dim(1) == 1);
    for (std::size_t i = 0; i < w.numel(); ++i) CHECK(w.at(i) == 1.0);
  }
}

TEST_CASE("qformer forward matches straight-line composition of its sub-ops") {
  QFormer qf(6, 12, 20, 3, Rng(7), DType::F64);
  Rng rng(8);
  Tensor feats = Tensor::randn({9, 20}, rng, 1.0, DType::F64);
  Tensor out = qf.forward(feats);

  ParamList ps;
  qf.register_params("qf", ps);
  auto P = [&](const std::string& n) { return testutil::find_param(ps, "qf." + n); };
  Tensor x = P("queries");
  for (int l = 1; l <= 2; ++l) {
    std::string p = "layer" + std::to_string(l) + ".";
    Tensor h = ops::layer_norm(x, P(p + "ln1_g"), P(p + "ln1_b"));
    Tensor attn = ops::attention(ops::matmul(h, P(p + "self_wq")), ops::matmul(h, P(p + "self_wk")),
                                 ops::matmul(h, P(p + "self_wv")), 3);
    x = ops::add(x, ops::matmul(attn, P(p + "self_wo")));
    h = ops::layer_norm(x, P(p + "ln2_g"), P(p + "ln2_b"));
    Tensor cross = ops::attention(ops::matmul(h, P(p + "cross_wq")),
                                  ops::matmul(feats, P(p + "cross_wk")),
                                  ops::matmul(feats, P(p + "cross_wv")), 3);
    x = ops::add(x, ops::matmul(cross, P(p + "cross_wo")));
    h = ops::layer_norm(x, P(p + "ln3_g"), P(p + "ln3_b"));
    x = ops::add(x, ops::linear(ops::gelu(ops::linear(h, P(p + "ffn_w1"), P(p + "ffn_b1"))),
                                P(p + "ffn_w2"), P(p + "ffn_b2")));
  }
  REQUIRE(out.shape() == x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    CHECK(out.at(i) == doctest::Approx(x.at(i)).epsilon(1e-12));
}

TEST_CASE("temporal modeling emits the configured face token count") {
  TemporalModeling tm(4, 16, 4, Rng(9));
  Rng rng(10);
  Tensor ef = Tensor::randn({11, 16}, rng, 1.0);
  Tensor out = tm.forward(ef);
  CHECK(out.dim(0) == 4);
  CHECK(out.dim(1) == 16);
}

TEST_CASE("temporal modeling with one frame returns its value projection") {
  TemporalModeling tm(4, 8, 2, Rng(11), DType::F64);
  Rng rng(12);
  Tensor ef = Tensor::randn({1, 8}, rng, 1.0, DType::F64);
  Tensor out = tm.forward(ef);
  Tensor vproj = ops::matmul(ef, tm.wv_);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 8; ++j) CHECK(out.at2(i, j) == doctest::Approx(vproj.at2(0, j)).epsilon(1e-12));
}

TEST_CASE("temporal modeling matches loop attention reference") {
  TemporalModeling tm(3, 8, 2, Rng(13), DType::F64);
  Rng rng(14);
  Tensor ef = Tensor::randn({3, 8}, rng, 1.0, DType::F64);
  Tensor out = tm.forward(ef);
  Tensor k = ops::matmul(ef, tm.wk_);
  Tensor v = ops::matmul(ef, tm.wv_);
  auto want = testutil::attention_reference(tm.queries_.to_doubles(), k.to_doubles(),
                                            v.to_doubles(), 3, 3, 8, 2);
  for (std::size_t i = 0; i < out.numel(); ++i)
    CHECK(out.at(i) == doctest::Approx(want[i]).epsilon(1e-10));
}

TEST_CASE("adapter zero weights give zero output") {
  Adapter ad(6, 10, Rng(15));
  testutil::fill_zero(ad.w1_);
  testutil::fill_zero(ad.b1_);
  testutil::fill_zero(ad.w2_);
  testutil::fill_zero(ad.b2_);
  Rng rng(16);
  Tensor x = Tensor::randn({4, 6}, rng, 1.0);
  Tensor out = ad.forward(x);
  for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out.at(i) == 0.0);
}

TEST_CASE("adapter identity composition reduces to gelu") {
  Adapter ad(5, 5, Rng(17), DType::F64);
  testutil::fill_zero(ad.b1_);
  testutil::fill_zero(ad.b2_);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      ad.w1_.set(static_cast<std::size_t>(i) * 5 + j, i == j ? 1.0 : 0.0);
      ad.w2_.set(static_cast<std::size_t>(i) * 5 + j, i == j ? 1.0 : 0.0);
    }
  Rng rng(18);
  Tensor x = Tensor::randn({3, 5}, rng, 1.0, DType::F64);
  Tensor out = ad.forward(x);
  Tensor want = ops::gelu(x);
  for (std::size_t i = 0; i < out.numel(); ++i)
    CHECK(out.at(i) == doctest::Approx(want.at(i)).epsilon(1e-12));
}

TEST_CASE("adapter matches hand-composed reference") {
  Adapter ad(4, 6, Rng(19), DType::F64);
  Rng rng(20);
  Tensor x = Tensor::randn({3, 4}, rng, 1.0, DType::F64);
  Tensor out = ad.forward(x);
  int hidden = ad.w1_.dim(1);
  auto h = testutil::matmul_reference(x.to_doubles(), ad.w1_.to_doubles(), 3, 4, hidden);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < hidden; ++j) {
      double t = h[i * hidden + j] + ad.b1_.at(static_cast<std::size_t>(j));
      h[i * hidden + j] = 0.5 * t * (1.0 + std::tanh(0.7978845608028654 * (t + 0.044715 * t * t * t)));
    }
  auto o = testutil::matmul_reference(h, ad.w2_.to_doubles(), 3, hidden, 6);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 6; ++j)
      CHECK(out.at2(i, j) == doctest::Approx(o[i * 6 + j] + ad.b2_.at(static_cast<std::size_t>(j))).epsilon(1e-10));
}

TEST_CASE("adapter output minus final bias scales linearly with second layer") {
  Adapter ad(4, 4, Rng(21), DType::F64);
  Rng rng(22);
  Tensor x = Tensor::randn({5, 4}, rng, 1.0, DType::F64);
  Tensor base = ad.forward(x);
  const double c = 3.5;
  for (std::size_t i = 0; i < ad.w2_.numel(); ++i) ad.w2_.set(i, ad.w2_.at(i) * c);
  Tensor scaled = ad.forward(x);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) {
      double b2 = ad.b2_.at(static_cast<std::size_t>(j));
      CHECK(scaled.at2(i, j) - b2 == doctest::Approx(c * (base.at2(i, j) - b2)).epsilon(1e-9));
    }
}

namespace {

struct ProjectionFixture {
  EncoderConfig ecfg;
  VisualEncoder visual{3 * 8 * 8, ecfg};
  SpeechEncoder speech{40, ecfg};
  FaceEncoder face{3 * 8 * 8, ecfg, 64};
  ProjectorConfig pcfg;
  Projector projector{pcfg, 64, 64, 64};

  VideoClip clip(int frames, std::uint64_t seed) {
    Rng rng(seed);
    Tensor fr = Tensor::zeros({frames, 3, 8, 8});
    for (std::size_t i = 0; i < fr.numel(); ++i) fr.set(i, rng.uniform());
    return {fr};
  }
  AudioClip audio(int steps, std::uint64_t seed) {
    Rng rng(seed);
    return {Tensor::randn({steps, 40}, rng, 1.0)};
  }
};

}  // namespace

TEST_CASE("project_all default token budget is 32+32+4+1") {
  ProjectionFixture fx;
  FeatureStack vs = fx.visual.encode(fx.clip(8, 1));
  FeatureStack ss = fx.speech.encode(fx.audio(20, 2));
  FeatureStack fs = fx.face.encode(fx.clip(8, 1));
  Rng rng(3);
  Tensor fusion = Tensor::randn({20, 64}, rng, 1.0);
  auto blocks = fx.projector.project_all(&vs, &ss, &fs.final_layer(), &fusion, true);
  REQUIRE(blocks.size() == 4);
  int total = 0;
  for (const TokenBlock& b : blocks) {
    CHECK(b.tokens.dim(1) == 64);
    total += b.tokens.dim(0);
  }
  CHECK(total == 69);
  CHECK(blocks[0].stream == Stream::Visual);
  CHECK(blocks[0].tokens.dim(0) == 32);
  CHECK(blocks[1].stream == Stream::Speech);
  CHECK(blocks[1].tokens.dim(0) == 32);
  CHECK(blocks[2].stream == Stream::Face);
  CHECK(blocks[2].tokens.dim(0) == 4);
  CHECK(blocks[3].stream == Stream::Fusion);
  CHECK(blocks[3].tokens.dim(0) == 1);
}

TEST_CASE("token counts are invariant to input lengths") {
  ProjectionFixture fx;
  for (auto [frames, steps] : std::vector<std::pair<int, int>>{{1, 1}, {2, 50}, {16, 7}}) {
    FeatureStack vs = fx.visual.encode(fx.clip(frames, 10));
    FeatureStack ss = fx.speech.encode(fx.audio(steps, 11));
    FeatureStack fs = fx.face.encode(fx.clip(frames, 10));
    Rng rng(12);
    Tensor fusion = Tensor::randn({steps, 64}, rng, 1.0);
    auto blocks = fx.projector.project_all(&vs, &ss, &fs.final_layer(), &fusion, true);
    CHECK(blocks[0].tokens.dim(0) == 32);
    CHECK(blocks[1].tokens.dim(0) == 32);
    CHECK(blocks[2].tokens.dim(0) == 4);
    CHECK(blocks[3].tokens.dim(0) == 1);
  }
}

TEST_CASE("missing streams are reported by tag") {
  ProjectionFixture fx;
  FeatureStack vs = fx.visual.encode(fx.clip(2, 20));
  CHECK_THROWS_WITH_AS(fx.projector.project_all(&vs, nullptr, nullptr, nullptr, false),
                       doctest::Contains("speech"), ShapeError);
  try {
    fx.projector.project_all(nullptr, nullptr, nullptr, nullptr, true);
  } catch (const ShapeError& e) {
    std::string m = e.what();
    CHECK(m.find("visual") != std::string::npos);
    CHECK(m.find("face") != std::string::npos);
    CHECK(m.find("fusion") != std::string::npos);
  }
}

TEST_CASE("stream tags round-trip through checkpoint serialization") {
  ProjectionFixture fx;
  FeatureStack vs = fx.visual.encode(fx.clip(3, 30));
  FeatureStack ss = fx.speech.encode(fx.audio(9, 31));
  FeatureStack fs = fx.face.encode(fx.clip(3, 30));
  Rng rng(32);
  Tensor fusion = Tensor::randn({9, 64}, rng, 1.0);
  auto blocks = fx.projector.project_all(&vs, &ss, &fs.final_layer(), &fusion, true);

  ParamList named;
  for (const TokenBlock& b : blocks)
    named.push_back({std::string("tokens.") + stream_name(b.stream), b.tokens.detach_copy()});
  std::string path = "/tmp/afx_test_blocks.ckpt";
  save_checkpoint(path, named);
  ParamList loaded = load_checkpoint(path);
  std::remove(path.c_str());
  REQUIRE(loaded.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(loaded[i].name == std::string("tokens.") + stream_name(blocks[i].stream));
    CHECK(loaded[i].tensor.same_bits(blocks[i].tokens));
  }
}

TEST_CASE("projection gradients match finite differences") {
  Rng rng(40);
  SUBCASE("qformer") {
    QFormer qf(3, 6, 8, 2, Rng(41), DType::F64);
    Tensor feats = Tensor::randn({4, 8}, rng, 1.0, DType::F64, true);
    ParamList ps;
    qf.register_params("qf", ps);
    std::vector<Tensor> wrt = {feats};
    for (const NamedParam& p : ps) wrt.push_back(p.tensor);
    Tensor probe = Tensor::randn({3, 6}, rng, 1.0, DType::F64);
    auto loss = [&]() { return ops::sum_all(ops::mul(qf.forward(feats), probe)); };
    CHECK(finite_diff_max_rel_error(loss, wrt) < 1e-4);
  }
  SUBCASE("temporal modeling") {
    TemporalModeling tm(3, 8, 2, Rng(42), DType::F64);
    Tensor ef = Tensor::randn({5, 8}, rng, 1.0, DType::F64, true);
    Tensor probe = Tensor::randn({3, 8}, rng, 1.0, DType::F64);
    auto loss = [&]() { return ops::sum_all(ops::mul(tm.forward(ef), probe)); };
    CHECK(finite_diff_max_rel_error(loss, {ef, tm.queries_, tm.wk_, tm.wv_}) < 1e-4);
  }
  SUBCASE("adapter") {
    Adapter ad(5, 7, Rng(43), DType::F64);
    Tensor x = Tensor::randn({4, 5}, rng, 1.0, DType::F64, true);
    Tensor probe = Tensor::randn({4, 7}, rng, 1.0, DType::F64);
    auto loss = [&]() { return ops::sum_all(ops::mul(ad.forward(x), probe)); };
    CHECK(finite_diff_max_rel_error(loss, {x, ad.w1_, ad.b1_, ad.w2_, ad.b2_}) < 1e-4);
  }
}
