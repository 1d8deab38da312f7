#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "afx/params.hpp"
#include "afx/tensor.hpp"

namespace afx {

// Synthetic video clip; frames hold pixel values in [0, 1].
struct VideoClip {
  Tensor frames;  // [F, C, H, W]
  int frame_count() const { return frames.dim(0); }
  Tensor flat_rows() const;  // [F, C*H*W]
  void validate() const;
};

// Synthetic mel-like audio frames.
struct AudioClip {
  Tensor features;  // [T, D]
  void validate() const;
};

enum class Stream { Visual, Speech, Face, Fusion };
const char* stream_name(Stream s);

// Ordered per-layer hidden states from one encoder forward pass.
struct FeatureStack {
  Stream stream = Stream::Visual;
  std::vector<Tensor> layers;
  // 1-based, matching the layer indices used for taps.
  const Tensor& layer(int index) const;
  int layer_count() const { return static_cast<int>(layers.size()); }
  const Tensor& final_layer() const { return layers.back(); }
};

struct EncoderConfig {
  int depth = 24;
  int dim = 64;
  std::uint64_t seed = 7;
};

// Frozen randomly initialized encoder backbone: input projection followed by
// `depth` blocks of linear -> GeLU -> residual -> layer norm.
class ToyEncoder {
 public:
  ToyEncoder(Stream stream, int input_dim, const EncoderConfig& cfg, DType dt = DType::F32);

  FeatureStack encode_rows(const Tensor& rows) const;  // rows: [L, input_dim]
  int depth() const { return cfg_.depth; }
  int dim() const { return cfg_.dim; }
  void register_params(const std::string& prefix, ParamList& out) const;

 private:
  struct Block {
    Tensor w, b, ln_gain, ln_bias;
  };
  Stream stream_;
  EncoderConfig cfg_;
  Tensor in_w_, in_b_, in_ln_gain_, in_ln_bias_;
  std::vector<Block> blocks_;
};

class VisualEncoder {
 public:
  VisualEncoder(int pixels_per_frame, const EncoderConfig& cfg, DType dt = DType::F32);
  FeatureStack encode(const VideoClip& clip) const;
  void register_params(const std::string& prefix, ParamList& out) const;
  int dim() const { return core_.dim(); }
  int depth() const { return core_.depth(); }

 private:
  ToyEncoder core_;
};

class SpeechEncoder {
 public:
  SpeechEncoder(int feature_dim, const EncoderConfig& cfg, DType dt = DType::F32);
  FeatureStack encode(const AudioClip& clip) const;
  void register_params(const std::string& prefix, ParamList& out) const;
  int dim() const { return core_.dim(); }
  int depth() const { return core_.depth(); }

 private:
  ToyEncoder core_;
};

// Face branch: a frozen backbone tapped at four depths; the tapped multiscale
// features are aligned per scale and fused by an MLP into one per-frame
// embedding sequence, returned as the stack's final layer.
class FaceEncoder {
 public:
  FaceEncoder(int pixels_per_frame, const EncoderConfig& cfg, int face_dim, DType dt = DType::F32);
  FeatureStack encode(const VideoClip& clip) const;
  const std::vector<int>& tap_indices() const { return taps_; }
  int face_dim() const { return face_dim_; }
  void register_params(const std::string& prefix, ParamList& out) const;

  // Exposed for composition checks: aligned tap projection and MLP fusion.
  Tensor align_tap(int tap_slot, const Tensor& block_out) const;
  Tensor fuse_aligned(const std::vector<Tensor>& aligned) const;

 private:
  ToyEncoder core_;
  std::vector<int> taps_;
  int face_dim_;
  std::vector<Tensor> align_w_, align_b_;
  Tensor mlp_w1_, mlp_b1_, mlp_w2_, mlp_b2_;
};

}  // namespace afx
