#include <algorithm>
#include <cmath>

#include "afx/encoders.hpp"
#include "afx/ops.hpp"
#include "doctest.h"
#include "test_helpers.hpp"

using namespace afx;

namespace {

VideoClip make_clip(int frames, int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Tensor fr = Tensor::zeros({frames, 3, h, w});
  for (std::size_t i = 0; i < fr.numel(); ++i) fr.set(i, rng.uniform());
  return {fr};
}

AudioClip make_audio(int steps, int dim, std::uint64_t seed) {
  Rng rng(seed);
  return {Tensor::randn({steps, dim}, rng, 1.0)};
}

}  // namespace

TEST_CASE("visual encoder emits one layer per block with uniform shapes") {
  EncoderConfig cfg;
  VisualEncoder enc(3 * 8 * 8, cfg);
  FeatureStack stack = enc.encode(make_clip(8, 8, 8, 1));
  CHECK(stack.layer_count() == 24);
  CHECK(stack.stream == Stream::Visual);
  for (const Tensor& l : stack.layers) {
    CHECK(l.dim(0) == 8);
    CHECK(l.dim(1) == cfg.dim);
  }
}

TEST_CASE("same clip and seed give bit-identical stacks") {
  EncoderConfig cfg;
  cfg.seed = 99;
  VisualEncoder a(3 * 8 * 8, cfg), b(3 * 8 * 8, cfg);
  VideoClip clip = make_clip(4, 8, 8, 7);
  FeatureStack sa = a.encode(clip), sb = b.encode(clip);
  for (int i = 1; i <= 24; ++i) CHECK(sa.layer(i).same_bits(sb.layer(i)));
}

TEST_CASE("tapped layers are distinct views of one forward pass") {
  EncoderConfig cfg;
  VisualEncoder enc(3 * 8 * 8, cfg);
  FeatureStack stack = enc.encode(make_clip(6, 8, 8, 3));
  const Tensor& l12 = stack.layer(12);
  const Tensor& l16 = stack.layer(16);
  const Tensor& l22 = stack.layer(22);
  CHECK_FALSE(l12.same_bits(l16));
  CHECK_FALSE(l16.same_bits(l22));
  CHECK(l12.node() == stack.layers[11].node());
  CHECK(l22.node() == stack.layers[21].node());
}

TEST_CASE("tap index beyond depth is a config error") {
  EncoderConfig cfg;
  VisualEncoder enc(3 * 8 * 8, cfg);
  FeatureStack stack = enc.encode(make_clip(2, 8, 8, 5));
  CHECK_THROWS_AS(stack.layer(25), ConfigError);
  CHECK_THROWS_AS(stack.layer(0), ConfigError);
}

TEST_CASE("speech encoder shape contract and zero-input finiteness") {
  EncoderConfig cfg;
  SpeechEncoder enc(40, cfg);
  FeatureStack stack = enc.encode(make_audio(20, 40, 11));
  CHECK(stack.layer_count() == 24);
  for (const Tensor& l : stack.layers) {
    CHECK(l.dim(0) == 20);
    CHECK(l.dim(1) == 64);
  }
  AudioClip silent{Tensor::zeros({5, 40})};
  FeatureStack zs = enc.encode(silent);
  for (std::size_t i = 0; i < zs.final_layer().numel(); ++i)
    CHECK(std::isfinite(zs.final_layer().at(i)));
}

TEST_CASE("pixel range is validated") {
  Tensor bad = Tensor::full({1, 3, 4, 4}, 1.5);
  EncoderConfig cfg;
  VisualEncoder enc(3 * 4 * 4, cfg);
  CHECK_THROWS_AS(enc.encode({bad}), ShapeError);
}

TEST_CASE("face encoder single frame and projection contract") {
  EncoderConfig cfg;
  FaceEncoder enc(3 * 8 * 8, cfg, 48);
  FeatureStack stack = enc.encode(make_clip(1, 8, 8, 13));
  CHECK(stack.layer_count() == 5);  // four aligned taps plus fused output
  CHECK(stack.final_layer().dim(0) == 1);
  CHECK(stack.final_layer().dim(1) == 48);
  for (const Tensor& l : stack.layers) CHECK(l.dim(1) == 48);
  CHECK(enc.tap_indices() == std::vector<int>{6, 12, 18, 24});
}

TEST_CASE("face fusion equals hand-composed mlp over concatenated aligned blocks") {
  EncoderConfig cfg;
  cfg.dim = 16;
  cfg.depth = 8;
  FaceEncoder enc(3 * 4 * 4, cfg, 12);
  VideoClip clip = make_clip(3, 4, 4, 17);
  FeatureStack stack = enc.encode(clip);
  const Tensor& fused = stack.final_layer();

  ParamList params;
  enc.register_params("face", params);
  Tensor w1 = testutil::find_param(params, "face.fuse.w1");
  Tensor b1 = testutil::find_param(params, "face.fuse.b1");
  Tensor w2 = testutil::find_param(params, "face.fuse.w2");
  Tensor b2 = testutil::find_param(params, "face.fuse.b2");

  // hand composition: concat aligned taps, affine, gelu, affine
  const int f = 3, fd = 12;
  std::vector<double> cat(static_cast<std::size_t>(f) * 4 * fd);
  for (int s = 0; s < 4; ++s) {
    const Tensor& tap = stack.layers[static_cast<std::size_t>(s)];
    for (int i = 0; i < f; ++i)
      for (int j = 0; j < fd; ++j) cat[i * 4 * fd + s * fd + j] = tap.at2(i, j);
  }
  std::vector<double> h = testutil::matmul_reference(cat, w1.to_doubles(), f, 4 * fd, w1.dim(1));
  for (int i = 0; i < f; ++i)
    for (int j = 0; j < w1.dim(1); ++j) {
      double x = h[i * w1.dim(1) + j] + b1.at(static_cast<std::size_t>(j));
      h[i * w1.dim(1) + j] = 0.5 * x * (1.0 + std::tanh(0.7978845608028654 * (x + 0.044715 * x * x * x)));
    }
  std::vector<double> o = testutil::matmul_reference(h, w2.to_doubles(), f, w1.dim(1), fd);
  for (int i = 0; i < f; ++i)
    for (int j = 0; j < fd; ++j)
      CHECK(fused.at2(i, j) == doctest::Approx(o[i * fd + j] + b2.at(static_cast<std::size_t>(j))).epsilon(1e-4));
}

TEST_CASE("encoder parameters never require grad") {
  EncoderConfig cfg;
  VisualEncoder v(3 * 4 * 4, cfg);
  SpeechEncoder s(40, cfg);
  FaceEncoder f(3 * 4 * 4, cfg, 64);
  ParamList params;
  v.register_params("v", params);
  s.register_params("s", params);
  f.register_params("f", params);
  CHECK(params.size() > 0);
  for (const NamedParam& p : params) CHECK_FALSE(p.tensor.requires_grad());
}
