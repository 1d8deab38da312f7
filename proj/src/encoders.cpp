#include "afx/encoders.hpp"

#include <cmath>

#include "afx/ops.hpp"

namespace afx {

const char* stream_name(Stream s) {
  switch (s) {
    case Stream::Visual: return "visual";
    case Stream::Speech: return "speech";
    case Stream::Face: return "face";
    case Stream::Fusion: return "fusion";
  }
  return "?";
}

Tensor VideoClip::flat_rows() const {
  int f = frames.dim(0);
  int per_frame = static_cast<int>(frames.numel()) / f;
  return frames.reshaped({f, per_frame});
}

void VideoClip::validate() const {
  if (frames.rank() != 4) throw ShapeError("video clip: expected [F, C, H, W], got " + shape_string(frames.shape()));
  if (frames.dim(0) < 1) throw ShapeError("video clip: needs at least one frame");
  for (std::size_t i = 0; i < frames.numel(); ++i) {
    double v = frames.at(i);
    if (v < 0.0 || v > 1.0)
      throw ShapeError("video clip: pixel value " + std::to_string(v) + " outside [0, 1]");
  }
}

void AudioClip::validate() const {
  if (features.rank() != 2) throw ShapeError("audio clip: expected [T, D], got " + shape_string(features.shape()));
  if (features.dim(0) < 1) throw ShapeError("audio clip: needs at least one frame");
}

const Tensor& FeatureStack::layer(int index) const {
  if (index < 1 || index > layer_count())
    throw ConfigError(std::string("feature stack (") + stream_name(stream) + "): layer " +
                      std::to_string(index) + " outside depth " + std::to_string(layer_count()));
  return layers[static_cast<std::size_t>(index - 1)];
}

namespace {

Tensor init_weight(int in, int out, Rng& rng, DType dt) {
  return Tensor::randn({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in)), dt);
}

}  // namespace

ToyEncoder::ToyEncoder(Stream stream, int input_dim, const EncoderConfig& cfg, DType dt)
    : stream_(stream), cfg_(cfg) {
  if (cfg.depth < 1) throw ConfigError("encoder depth must be >= 1");
  Rng rng = Rng(cfg.seed).fork(static_cast<std::uint64_t>(stream));
  in_w_ = init_weight(input_dim, cfg.dim, rng, dt);
  in_b_ = Tensor::zeros({cfg.dim}, dt);
  in_ln_gain_ = Tensor::full({cfg.dim}, 1.0, dt);
  in_ln_bias_ = Tensor::zeros({cfg.dim}, dt);
  blocks_.reserve(static_cast<std::size_t>(cfg.depth));
  for (int i = 0; i < cfg.depth; ++i) {
    Block blk;
    blk.w = init_weight(cfg.dim, cfg.dim, rng, dt);
    blk.b = Tensor::zeros({cfg.dim}, dt);
    blk.ln_gain = Tensor::full({cfg.dim}, 1.0, dt);
    blk.ln_bias = Tensor::zeros({cfg.dim}, dt);
    blocks_.push_back(blk);
  }
}

FeatureStack ToyEncoder::encode_rows(const Tensor& rows) const {
  if (rows.rank() != 2 || rows.dim(1) != in_w_.dim(0))
    throw ShapeError("encoder input " + shape_string(rows.shape()) + " does not match projection " +
                     shape_string(in_w_.shape()));
  NoGradGuard frozen;
  FeatureStack stack;
  stack.stream = stream_;
  Tensor x = ops::layer_norm(ops::linear(rows, in_w_, in_b_), in_ln_gain_, in_ln_bias_);
  for (const Block& blk : blocks_) {
    Tensor h = ops::gelu(ops::linear(x, blk.w, blk.b));
    x = ops::layer_norm(ops::add(x, h), blk.ln_gain, blk.ln_bias);
    stack.layers.push_back(x);
  }
  return stack;
}

void ToyEncoder::register_params(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".in.w", in_w_});
  out.push_back({prefix + ".in.b", in_b_});
  out.push_back({prefix + ".in.ln_g", in_ln_gain_});
  out.push_back({prefix + ".in.ln_b", in_ln_bias_});
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    std::string p = prefix + ".block" + std::to_string(i + 1);
    out.push_back({p + ".w", blocks_[i].w});
    out.push_back({p + ".b", blocks_[i].b});
    out.push_back({p + ".ln_g", blocks_[i].ln_gain});
    out.push_back({p + ".ln_b", blocks_[i].ln_bias});
  }
}

VisualEncoder::VisualEncoder(int pixels_per_frame, const EncoderConfig& cfg, DType dt)
    : core_(Stream::Visual, pixels_per_frame, cfg, dt) {}

FeatureStack VisualEncoder::encode(const VideoClip& clip) const {
  clip.validate();
  return core_.encode_rows(clip.flat_rows());
}

void VisualEncoder::register_params(const std::string& prefix, ParamList& out) const {
  core_.register_params(prefix, out);
}

SpeechEncoder::SpeechEncoder(int feature_dim, const EncoderConfig& cfg, DType dt)
    : core_(Stream::Speech, feature_dim, cfg, dt) {}

FeatureStack SpeechEncoder::encode(const AudioClip& clip) const {
  clip.validate();
  return core_.encode_rows(clip.features);
}

void SpeechEncoder::register_params(const std::string& prefix, ParamList& out) const {
  core_.register_params(prefix, out);
}

FaceEncoder::FaceEncoder(int pixels_per_frame, const EncoderConfig& cfg, int face_dim, DType dt)
    : core_(Stream::Face, pixels_per_frame, cfg, dt), face_dim_(face_dim) {
  // Four multiscale blocks at quarter depths of the backbone.
  for (int i = 1; i <= 4; ++i) taps_.push_back(std::max(1, cfg.depth * i / 4));
  Rng rng = Rng(cfg.seed).fork(917);
  for (int i = 0; i < 4; ++i) {
    align_w_.push_back(init_weight(cfg.dim, face_dim, rng, dt));
    align_b_.push_back(Tensor::zeros({face_dim}, dt));
  }
  int hidden = 2 * face_dim;
  mlp_w1_ = init_weight(4 * face_dim, hidden, rng, dt);
  mlp_b1_ = Tensor::zeros({hidden}, dt);
  mlp_w2_ = init_weight(hidden, face_dim, rng, dt);
  mlp_b2_ = Tensor::zeros({face_dim}, dt);
}

Tensor FaceEncoder::align_tap(int tap_slot, const Tensor& block_out) const {
  NoGradGuard frozen;
  return ops::linear(block_out, align_w_[static_cast<std::size_t>(tap_slot)],
                     align_b_[static_cast<std::size_t>(tap_slot)]);
}

Tensor FaceEncoder::fuse_aligned(const std::vector<Tensor>& aligned) const {
  NoGradGuard frozen;
  Tensor cat = ops::concat_cols(aligned);
  return ops::linear(ops::gelu(ops::linear(cat, mlp_w1_, mlp_b1_)), mlp_w2_, mlp_b2_);
}

FeatureStack FaceEncoder::encode(const VideoClip& clip) const {
  clip.validate();
  FeatureStack backbone = core_.encode_rows(clip.flat_rows());
  FeatureStack stack;
  stack.stream = Stream::Face;
  std::vector<Tensor> aligned;
  for (int i = 0; i < 4; ++i) {
    aligned.push_back(align_tap(i, backbone.layer(taps_[static_cast<std::size_t>(i)])));
    stack.layers.push_back(aligned.back());
  }
  stack.layers.push_back(fuse_aligned(aligned));
  return stack;
}

void FaceEncoder::register_params(const std::string& prefix, ParamList& out) const {
  core_.register_params(prefix + ".backbone", out);
  for (int i = 0; i < 4; ++i) {
    out.push_back({prefix + ".align" + std::to_string(i + 1) + ".w", align_w_[static_cast<std::size_t>(i)]});
    out.push_back({prefix + ".align" + std::to_string(i + 1) + ".b", align_b_[static_cast<std::size_t>(i)]});
  }
  out.push_back({prefix + ".fuse.w1", mlp_w1_});
  out.push_back({prefix + ".fuse.b1", mlp_b1_});
  out.push_back({prefix + ".fuse.w2", mlp_w2_});
  out.push_back({prefix + ".fuse.b2", mlp_b2_});
}

}  // namespace afx
