#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "afx/encoders.hpp"
#include "afx/params.hpp"
#include "afx/tensor.hpp"

namespace afx {

enum class FusionMode { ExpertsGated, None, AttentionFusion, AverageWeighting };
FusionMode fusion_mode_from_name(const std::string& name);
const char* fusion_mode_name(FusionMode m);

enum class PairingMode { Sequential, CrossLayer };
PairingMode pairing_mode_from_name(const std::string& name);

// Ordered (speech_layer, visual_layer) pairs feeding the experts.
struct LayerPairing {
  std::vector<std::pair<int, int>> pairs;
  PairingMode mode = PairingMode::Sequential;

  // Sequential pairs tap lists index by index, lower to higher; cross-layer
  // pairs each speech tap with the visual taps in reversed order.
  static LayerPairing build(const std::vector<int>& speech_taps,
                            const std::vector<int>& visual_taps, PairingMode mode,
                            int expert_count, int speech_depth, int visual_depth);
};

// Speech-query over visual key/value cross-attention with residual, then a
// residual FFN; experts share no parameters.
class FusionExpert {
 public:
  FusionExpert(int expert_index, int speech_dim, int visual_dim, int dim, int heads, Rng rng,
               DType dt = DType::F32);
  Tensor forward(const Tensor& speech_feat, const Tensor& visual_feat,
                 std::vector<Tensor>* attn_weights = nullptr) const;
  int index() const { return index_; }
  void register_params(const std::string& prefix, ParamList& out) const;

  Tensor wq_, wk_, wv_, wo_;
  Tensor ffn_w1_, ffn_b1_, ffn_w2_, ffn_b2_;

 private:
  int index_;
  int heads_;
};

// Two affine maps with GeLU between, producing one logit per expert per
// position, softmax-normalized.
class GatingNetwork {
 public:
  GatingNetwork(int expert_count, int dim, Rng rng, DType dt = DType::F32);
  // expert_outputs: n tensors of identical shape [Ls, D] -> weights [Ls, n].
  Tensor weights(const std::vector<Tensor>& expert_outputs) const;
  int expert_count() const { return experts_; }
  void register_params(const std::string& prefix, ParamList& out) const;

  Tensor w1_, b1_, w2_, b2_;

 private:
  int experts_;
};

struct FusionOutput {
  Tensor fused;         // undefined when mode is None
  Tensor gate_weights;  // [Ls, n]; undefined for AttentionFusion and None
};

struct FusionConfig {
  FusionMode mode = FusionMode::ExpertsGated;
  int experts = 3;
  int heads = 4;
  int dim = 64;
  PairingMode pairing = PairingMode::Sequential;
  std::uint64_t seed = 13;
};

class FusionEncoder {
 public:
  FusionEncoder(const FusionConfig& cfg, const std::vector<int>& speech_taps,
                const std::vector<int>& visual_taps, int speech_depth, int visual_depth,
                int speech_dim, int visual_dim, DType dt = DType::F32);

  FusionOutput forward(const FeatureStack& speech_stack, const FeatureStack& visual_stack,
                       std::vector<Tensor>* attn_weights = nullptr) const;

  // Convex combination of expert outputs under the gating network.
  FusionOutput gate_and_fuse(const std::vector<Tensor>& expert_outputs) const;

  const LayerPairing& pairing() const { return pairing_; }
  FusionMode mode() const { return cfg_.mode; }
  int dim() const { return cfg_.dim; }
  const std::vector<FusionExpert>& experts() const { return experts_; }
  const GatingNetwork& gate() const { return gate_; }
  void register_params(const std::string& prefix, ParamList& out) const;

 private:
  FusionConfig cfg_;
  LayerPairing pairing_;
  std::vector<FusionExpert> experts_;
  GatingNetwork gate_;
};

}  // namespace afx
