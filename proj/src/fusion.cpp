#include "afx/fusion.hpp"

#include <cmath>

#include "afx/ops.hpp"

namespace afx {

FusionMode fusion_mode_from_name(const std::string& name) {
  if (name == "experts_gated") return FusionMode::ExpertsGated;
  if (name == "none") return FusionMode::None;
  if (name == "attention_fusion") return FusionMode::AttentionFusion;
  if (name == "average_weighting") return FusionMode::AverageWeighting;
  throw ConfigError("unknown fusion mode '" + name + "'");
}

const char* fusion_mode_name(FusionMode m) {
  switch (m) {
    case FusionMode::ExpertsGated: return "experts_gated";
    case FusionMode::None: return "none";
    case FusionMode::AttentionFusion: return "attention_fusion";
    case FusionMode::AverageWeighting: return "average_weighting";
  }
  return "?";
}

PairingMode pairing_mode_from_name(const std::string& name) {
  if (name == "sequential") return PairingMode::Sequential;
  if (name == "cross_layer") return PairingMode::CrossLayer;
  throw ConfigError("unknown pairing mode '" + name + "'");
}

LayerPairing LayerPairing::build(const std::vector<int>& speech_taps,
                                 const std::vector<int>& visual_taps, PairingMode mode,
                                 int expert_count, int speech_depth, int visual_depth) {
  if (static_cast<int>(speech_taps.size()) != expert_count ||
      static_cast<int>(visual_taps.size()) != expert_count)
    throw ConfigError("layer pairing: " + std::to_string(speech_taps.size()) + " speech and " +
                      std::to_string(visual_taps.size()) + " visual taps for " +
                      std::to_string(expert_count) + " experts");
  LayerPairing p;
  p.mode = mode;
  for (int i = 0; i < expert_count; ++i) {
    int s = speech_taps[static_cast<std::size_t>(i)];
    int v = mode == PairingMode::Sequential
                ? visual_taps[static_cast<std::size_t>(i)]
                : visual_taps[static_cast<std::size_t>(expert_count - 1 - i)];
    if (s < 1 || s > speech_depth)
      throw ConfigError("layer pairing: speech tap " + std::to_string(s) + " outside depth " +
                        std::to_string(speech_depth));
    if (v < 1 || v > visual_depth)
      throw ConfigError("layer pairing: visual tap " + std::to_string(v) + " outside depth " +
                        std::to_string(visual_depth));
    p.pairs.emplace_back(s, v);
  }
  return p;
}

namespace {

Tensor init_weight(int in, int out, Rng& rng, DType dt) {
  return Tensor::randn({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in)), dt, true);
}

}  // namespace

FusionExpert::FusionExpert(int expert_index, int speech_dim, int visual_dim, int dim, int heads,
                           Rng rng, DType dt)
    : index_(expert_index), heads_(heads) {
  wq_ = init_weight(speech_dim, dim, rng, dt);
  wk_ = init_weight(visual_dim, dim, rng, dt);
  wv_ = init_weight(visual_dim, dim, rng, dt);
  wo_ = init_weight(dim, dim, rng, dt);
  int hidden = 2 * dim;
  ffn_w1_ = init_weight(dim, hidden, rng, dt);
  ffn_b1_ = Tensor::zeros({hidden}, dt, true);
  ffn_w2_ = init_weight(hidden, dim, rng, dt);
  ffn_b2_ = Tensor::zeros({dim}, dt, true);
}

Tensor FusionExpert::forward(const Tensor& speech_feat, const Tensor& visual_feat,
                             std::vector<Tensor>* attn_weights) const {
  if (speech_feat.rank() != 2 || speech_feat.dim(0) < 1)
    throw ShapeError("fusion expert: speech features must be [Ls >= 1, D], got " +
                     shape_string(speech_feat.shape()));
  if (visual_feat.rank() != 2 || visual_feat.dim(0) < 1)
    throw ShapeError("fusion expert: visual features must be [Lv >= 1, D], got " +
                     shape_string(visual_feat.shape()));
  if (speech_feat.dim(1) != wq_.dim(0) || visual_feat.dim(1) != wk_.dim(0))
    throw ShapeError("fusion expert: stream dims " + shape_string(speech_feat.shape()) + "/" +
                     shape_string(visual_feat.shape()) + " do not match projections " +
                     shape_string(wq_.shape()) + "/" + shape_string(wk_.shape()));
  Tensor q = ops::matmul(speech_feat, wq_);
  Tensor k = ops::matmul(visual_feat, wk_);
  Tensor v = ops::matmul(visual_feat, wv_);
  Tensor attn = ops::attention(q, k, v, heads_, false, attn_weights);
  Tensor mixed = ops::add(ops::matmul(attn, wo_), q);
  Tensor ffn = ops::linear(ops::gelu(ops::linear(mixed, ffn_w1_, ffn_b1_)), ffn_w2_, ffn_b2_);
  return ops::add(ffn, mixed);
}

void FusionExpert::register_params(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".wq", wq_});
  out.push_back({prefix + ".wk", wk_});
  out.push_back({prefix + ".wv", wv_});
  out.push_back({prefix + ".wo", wo_});
  out.push_back({prefix + ".ffn_w1", ffn_w1_});
  out.push_back({prefix + ".ffn_b1", ffn_b1_});
  out.push_back({prefix + ".ffn_w2", ffn_w2_});
  out.push_back({prefix + ".ffn_b2", ffn_b2_});
}

GatingNetwork::GatingNetwork(int expert_count, int dim, Rng rng, DType dt) : experts_(expert_count) {
  int in = expert_count * dim;
  w1_ = init_weight(in, dim, rng, dt);
  b1_ = Tensor::zeros({dim}, dt, true);
  w2_ = init_weight(dim, expert_count, rng, dt);
  b2_ = Tensor::zeros({expert_count}, dt, true);
}

Tensor GatingNetwork::weights(const std::vector<Tensor>& expert_outputs) const {
  if (static_cast<int>(expert_outputs.size()) != experts_)
    throw ShapeError("gating: got " + std::to_string(expert_outputs.size()) + " outputs for " +
                     std::to_string(experts_) + " experts");
  for (const Tensor& e : expert_outputs)
    if (e.shape() != expert_outputs[0].shape())
      throw ShapeError("gating: expert output shapes disagree, " + shape_string(e.shape()) +
                       " vs " + shape_string(expert_outputs[0].shape()));
  Tensor cat = ops::concat_cols(expert_outputs);
  Tensor logits = ops::linear(ops::gelu(ops::linear(cat, w1_, b1_)), w2_, b2_);
  return ops::softmax(logits, 1);
}

void GatingNetwork::register_params(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".w1", w1_});
  out.push_back({prefix + ".b1", b1_});
  out.push_back({prefix + ".w2", w2_});
  out.push_back({prefix + ".b2", b2_});
}

FusionEncoder::FusionEncoder(const FusionConfig& cfg, const std::vector<int>& speech_taps,
                             const std::vector<int>& visual_taps, int speech_depth,
                             int visual_depth, int speech_dim, int visual_dim, DType dt)
    : cfg_(cfg),
      pairing_(cfg.mode == FusionMode::AttentionFusion || cfg.mode == FusionMode::None
                   ? LayerPairing{}
                   : LayerPairing::build(speech_taps, visual_taps, cfg.pairing, cfg.experts,
                                         speech_depth, visual_depth)),
      gate_(cfg.experts, cfg.dim, Rng(cfg.seed).fork(99), dt) {
  Rng rng(cfg.seed);
  int count = cfg.mode == FusionMode::AttentionFusion ? 1 : cfg.experts;
  for (int i = 1; i <= count; ++i)
    experts_.emplace_back(i, speech_dim, visual_dim, cfg.dim, cfg.heads, rng.fork(static_cast<std::uint64_t>(i)), dt);
}

FusionOutput FusionEncoder::gate_and_fuse(const std::vector<Tensor>& expert_outputs) const {
  Tensor w = gate_.weights(expert_outputs);
  Tensor fused;
  for (std::size_t i = 0; i < expert_outputs.size(); ++i) {
    Tensor wi = ops::narrow_cols(w, static_cast<int>(i), 1);
    Tensor term = ops::scale_rows(expert_outputs[i], wi);
    fused = i == 0 ? term : ops::add(fused, term);
  }
  return {fused, w};
}

FusionOutput FusionEncoder::forward(const FeatureStack& speech_stack,
                                    const FeatureStack& visual_stack,
                                    std::vector<Tensor>* attn_weights) const {
  switch (cfg_.mode) {
    case FusionMode::None:
      return {};
    case FusionMode::AttentionFusion:
      return {experts_[0].forward(speech_stack.final_layer(), visual_stack.final_layer(),
                                  attn_weights),
              Tensor()};
    case FusionMode::ExpertsGated:
    case FusionMode::AverageWeighting:
      break;
  }
  std::vector<Tensor> outs;
  outs.reserve(experts_.size());
  for (std::size_t i = 0; i < experts_.size(); ++i) {
    const auto& [s, v] = pairing_.pairs[i];
    outs.push_back(
        experts_[i].forward(speech_stack.layer(s), visual_stack.layer(v), attn_weights));
  }
  if (cfg_.mode == FusionMode::AverageWeighting) {
    int ls = outs[0].dim(0);
    double u = 1.0 / static_cast<double>(outs.size());
    Tensor fused;
    for (std::size_t i = 0; i < outs.size(); ++i) {
      Tensor term = ops::scale(outs[i], u);
      fused = i == 0 ? term : ops::add(fused, term);
    }
    Tensor w = Tensor::full({ls, static_cast<int>(outs.size())}, u, outs[0].dtype());
    return {fused, w};
  }
  return gate_and_fuse(outs);
}

void FusionEncoder::register_params(const std::string& prefix, ParamList& out) const {
  for (std::size_t i = 0; i < experts_.size(); ++i)
    experts_[i].register_params(prefix + ".expert" + std::to_string(i + 1), out);
  gate_.register_params(prefix + ".gate", out);
}

}  // namespace afx
