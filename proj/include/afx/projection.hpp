#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "afx/encoders.hpp"
#include "afx/params.hpp"
#include "afx/tensor.hpp"

namespace afx {

// Two affine maps with GeLU between, aligning a stream to the LM dimension.
class Adapter {
 public:
  Adapter(int in_dim, int out_dim, Rng rng, DType dt = DType::F32);
  Tensor forward(const Tensor& x) const;
  int in_dim() const { return w1_.dim(0); }
  int out_dim() const { return w2_.dim(1); }
  void register_params(const std::string& prefix, ParamList& out) const;

  Tensor w1_, b1_, w2_, b2_;
};

// Fixed-count learnable queries resampling variable-length features through
// two blocks of query self-attention, cross-attention and FFN, pre-norm
// residuals throughout.
class QFormer {
 public:
  QFormer(int num_queries, int dim, int feature_dim, int heads, Rng rng, DType dt = DType::F32);
  // cross_weights, when given, receives the per-head cross-attention maps of
  // every layer.
  Tensor forward(const Tensor& features, std::vector<Tensor>* cross_weights = nullptr) const;
  int num_queries() const { return queries_.dim(0); }
  void register_params(const std::string& prefix, ParamList& out) const;

 private:
  struct Layer {
    Tensor ln1_g, ln1_b, self_wq, self_wk, self_wv, self_wo;
    Tensor ln2_g, ln2_b, cross_wq, cross_wk, cross_wv, cross_wo;
    Tensor ln3_g, ln3_b, ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  };
  Tensor queries_;
  int heads_;
  std::vector<Layer> layers_;
};

// Learnable temporal queries cross-attending over key/value projections of
// per-frame face features.
class TemporalModeling {
 public:
  TemporalModeling(int num_queries, int dim, int heads, Rng rng, DType dt = DType::F32);
  Tensor forward(const Tensor& face_features, std::vector<Tensor>* weights = nullptr) const;
  int num_queries() const { return queries_.dim(0); }
  void register_params(const std::string& prefix, ParamList& out) const;

  Tensor queries_, wk_, wv_;
  int heads_;
};

struct TokenBlock {
  Stream stream = Stream::Visual;
  Tensor tokens;  // [T, D_lm]
};

struct ProjectorConfig {
  int tokens_visual = 32;
  int tokens_speech = 32;
  int tokens_face = 4;
  int tokens_fusion = 1;
  int lm_dim = 64;
  int qformer_heads = 4;
  std::uint64_t seed = 11;
};

// The resampling and alignment stage for all four streams.
class Projector {
 public:
  Projector(const ProjectorConfig& cfg, int enc_dim, int face_dim, int fusion_dim,
            DType dt = DType::F32);

  // Any required stream passed as null raises an error naming the tag.
  // The fusion stream is adapted first, then mean-pooled to one token.
  std::vector<TokenBlock> project_all(const FeatureStack* visual, const FeatureStack* speech,
                                      const Tensor* face_fused, const Tensor* fusion_fused,
                                      bool include_fusion) const;

  const ProjectorConfig& config() const { return cfg_; }
  void register_params(const std::string& prefix, ParamList& out) const;

  QFormer visual_qformer_, speech_qformer_;
  TemporalModeling temporal_;
  Adapter visual_adapter_, speech_adapter_, face_adapter_, fusion_adapter_;

 private:
  ProjectorConfig cfg_;
};

}  // namespace afx
