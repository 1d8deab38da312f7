#include "afx/projection.hpp"

#include <cmath>

#include "afx/ops.hpp"

namespace afx {

namespace {

Tensor init_weight(int in, int out, Rng& rng, DType dt) {
  return Tensor::randn({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in)), dt, true);
}

Tensor init_queries(int n, int dim, Rng& rng, DType dt) {
  return Tensor::randn({n, dim}, rng, 0.02, dt, true);
}

}  // namespace

Adapter::Adapter(int in_dim, int out_dim, Rng rng, DType dt) {
  int hidden = 2 * std::max(in_dim, out_dim);
  w1_ = init_weight(in_dim, hidden, rng, dt);
  b1_ = Tensor::zeros({hidden}, dt, true);
  w2_ = init_weight(hidden, out_dim, rng, dt);
  b2_ = Tensor::zeros({out_dim}, dt, true);
}

Tensor Adapter::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != w1_.dim(0))
    throw ShapeError("adapter: input " + shape_string(x.shape()) + " does not match " +
                     shape_string(w1_.shape()));
  return ops::linear(ops::gelu(ops::linear(x, w1_, b1_)), w2_, b2_);
}

void Adapter::register_params(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".w1", w1_});
  out.push_back({prefix + ".b1", b1_});
  out.push_back({prefix + ".w2", w2_});
  out.push_back({prefix + ".b2", b2_});
}

QFormer::QFormer(int num_queries, int dim, int feature_dim, int heads, Rng rng, DType dt)
    : heads_(heads) {
  queries_ = init_queries(num_queries, dim, rng, dt);
  for (int l = 0; l < 2; ++l) {
    Layer layer;
    layer.ln1_g = Tensor::full({dim}, 1.0, dt);
    layer.ln1_g.set_requires_grad(true);
    layer.ln1_b = Tensor::zeros({dim}, dt, true);
    layer.self_wq = init_weight(dim, dim, rng, dt);
    layer.self_wk = init_weight(dim, dim, rng, dt);
    layer.self_wv = init_weight(dim, dim, rng, dt);
    layer.self_wo = init_weight(dim, dim, rng, dt);
    layer.ln2_g = Tensor::full({dim}, 1.0, dt);
    layer.ln2_g.set_requires_grad(true);
    layer.ln2_b = Tensor::zeros({dim}, dt, true);
    layer.cross_wq = init_weight(dim, dim, rng, dt);
    layer.cross_wk = init_weight(feature_dim, dim, rng, dt);
    layer.cross_wv = init_weight(feature_dim, dim, rng, dt);
    layer.cross_wo = init_weight(dim, dim, rng, dt);
    layer.ln3_g = Tensor::full({dim}, 1.0, dt);
    layer.ln3_g.set_requires_grad(true);
    layer.ln3_b = Tensor::zeros({dim}, dt, true);
    int ffn_hidden = 2 * dim;
    layer.ffn_w1 = init_weight(dim, ffn_hidden, rng, dt);
    layer.ffn_b1 = Tensor::zeros({ffn_hidden}, dt, true);
    layer.ffn_w2 = init_weight(ffn_hidden, dim, rng, dt);
    layer.ffn_b2 = Tensor::zeros({dim}, dt, true);
    layers_.push_back(layer);
  }
}

Tensor QFormer::forward(const Tensor& features, std::vector<Tensor>* cross_weights) const {
  if (features.rank() != 2 || features.dim(0) < 1)
    throw ShapeError("qformer: features must be [L >= 1, D], got " + shape_string(features.shape()));
  Tensor x = queries_;
  for (const Layer& l : layers_) {
    Tensor h = ops::layer_norm(x, l.ln1_g, l.ln1_b);
    Tensor attn = ops::attention(ops::matmul(h, l.self_wq), ops::matmul(h, l.self_wk),
                                 ops::matmul(h, l.self_wv), heads_);
    x = ops::add(x, ops::matmul(attn, l.self_wo));

    h = ops::layer_norm(x, l.ln2_g, l.ln2_b);
    Tensor cross = ops::attention(ops::matmul(h, l.cross_wq), ops::matmul(features, l.cross_wk),
                                  ops::matmul(features, l.cross_wv), heads_, false, cross_weights);
    x = ops::add(x, ops::matmul(cross, l.cross_wo));

    h = ops::layer_norm(x, l.ln3_g, l.ln3_b);
    Tensor ffn = ops::linear(ops::gelu(ops::linear(h, l.ffn_w1, l.ffn_b1)), l.ffn_w2, l.ffn_b2);
    x = ops::add(x, ffn);
  }
  return x;
}

void QFormer::register_params(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".queries", queries_});
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    std::string p = prefix + ".layer" + std::to_string(i + 1);
    out.push_back({p + ".ln1_g", l.ln1_g});
    out.push_back({p + ".ln1_b", l.ln1_b});
    out.push_back({p + ".self_wq", l.self_wq});
    out.push_back({p + ".self_wk", l.self_wk});
    out.push_back({p + ".self_wv", l.self_wv});
    out.push_back({p + ".self_wo", l.self_wo});
    out.push_back({p + ".ln2_g", l.ln2_g});
    out.push_back({p + ".ln2_b", l.ln2_b});
    out.push_back({p + ".cross_wq", l.cross_wq});
    out.push_back({p + ".cross_wk", l.cross_wk});
    out.push_back({p + ".cross_wv", l.cross_wv});
    out.push_back({p + ".cross_wo", l.cross_wo});
    out.push_back({p + ".ln3_g", l.ln3_g});
    out.push_back({p + ".ln3_b", l.ln3_b});
    out.push_back({p + ".ffn_w1", l.ffn_w1});
    out.push_back({p + ".ffn_b1", l.ffn_b1});
    out.push_back({p + ".ffn_w2", l.ffn_w2});
    out.push_back({p + ".ffn_b2", l.ffn_b2});
  }
}

TemporalModeling::TemporalModeling(int num_queries, int dim, int heads, Rng rng, DType dt)
    : heads_(heads) {
  queries_ = init_queries(num_queries, dim, rng, dt);
  wk_ = init_weight(dim, dim, rng, dt);
  wv_ = init_weight(dim, dim, rng, dt);
}

Tensor TemporalModeling::forward(const Tensor& face_features, std::vector<Tensor>* weights) const {
  if (face_features.rank() != 2 || face_features.dim(0) < 1)
    throw ShapeError("temporal modeling: face features must be [F >= 1, D], got " +
                     shape_string(face_features.shape()));
  Tensor k = ops::matmul(face_features, wk_);
  Tensor v = ops::matmul(face_features, wv_);
  return ops::attention(queries_, k, v, heads_, false, weights);
}

void TemporalModeling::register_params(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".queries", queries_});
  out.push_back({prefix + ".wk", wk_});
  out.push_back({prefix + ".wv", wv_});
}

Projector::Projector(const ProjectorConfig& cfg, int enc_dim, int face_dim, int fusion_dim, DType dt)
    : visual_qformer_(cfg.tokens_visual, enc_dim, enc_dim, cfg.qformer_heads,
                      Rng(cfg.seed).fork(1), dt),
      speech_qformer_(cfg.tokens_speech, enc_dim, enc_dim, cfg.qformer_heads,
                      Rng(cfg.seed).fork(2), dt),
      temporal_(cfg.tokens_face, face_dim, cfg.qformer_heads,
                Rng(cfg.seed).fork(3), dt),
      visual_adapter_(enc_dim, cfg.lm_dim, Rng(cfg.seed).fork(4), dt),
      speech_adapter_(enc_dim, cfg.lm_dim, Rng(cfg.seed).fork(5), dt),
      face_adapter_(face_dim, cfg.lm_dim, Rng(cfg.seed).fork(6), dt),
      fusion_adapter_(fusion_dim, cfg.lm_dim, Rng(cfg.seed).fork(7), dt),
      cfg_(cfg) {}

std::vector<TokenBlock> Projector::project_all(const FeatureStack* visual,
                                               const FeatureStack* speech, const Tensor* face_fused,
                                               const Tensor* fusion_fused,
                                               bool include_fusion) const {
  std::string missing;
  if (!visual) missing += " visual";
  if (!speech) missing += " speech";
  if (!face_fused) missing += " face";
  if (include_fusion && !fusion_fused) missing += " fusion";
  if (!missing.empty()) throw ShapeError("project_all: missing stream(s):" + missing);

  std::vector<TokenBlock> blocks;
  blocks.push_back({Stream::Visual, visual_adapter_.forward(visual_qformer_.forward(visual->final_layer()))});
  blocks.push_back({Stream::Speech, speech_adapter_.forward(speech_qformer_.forward(speech->final_layer()))});
  blocks.push_back({Stream::Face, face_adapter_.forward(temporal_.forward(*face_fused))});
  if (include_fusion)
    blocks.push_back({Stream::Fusion, ops::mean_rows(fusion_adapter_.forward(*fusion_fused))});
  return blocks;
}

void Projector::register_params(const std::string& prefix, ParamList& out) const {
  visual_qformer_.register_params(prefix + ".visual_qformer", out);
  speech_qformer_.register_params(prefix + ".speech_qformer", out);
  temporal_.register_params(prefix + ".temporal", out);
  visual_adapter_.register_params(prefix + ".visual_adapter", out);
  speech_adapter_.register_params(prefix + ".speech_adapter", out);
  face_adapter_.register_params(prefix + ".face_adapter", out);
  fusion_adapter_.register_params(prefix + ".fusion_adapter", out);
}

}  // namespace afx
