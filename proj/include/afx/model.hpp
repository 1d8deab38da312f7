#pragma once

#include <memory>
#include <string>
#include <vector>

#include "afx/config.hpp"
#include "afx/encoders.hpp"
#include "afx/fusion.hpp"
#include "afx/lm.hpp"
#include "afx/projection.hpp"
#include "afx/tasks.hpp"

namespace afx {

enum class ParamGroup {
  VisualAdapter,
  SpeechAdapter,
  FaceAdapterTm,
  QFormers,
  FusionEncoder,
  FusionAdapter,
  Lora,
};
const char* group_name(ParamGroup g);
ParamGroup group_from_name(const std::string& name);
const std::vector<ParamGroup>& all_groups();

// The assembled model: three frozen encoders, resampling/alignment stage,
// fusion experts with gating, and the LoRA-augmented language model.
class MultimodalLm {
 public:
  explicit MultimodalLm(const RunConfig& cfg);

  const Tokenizer& tokenizer() const { return tokenizer_; }
  const GenConfig& gen_config() const { return gen_; }
  const RunConfig& config() const { return cfg_; }
  FusionMode fusion_mode() const { return fusion_->mode(); }

  // Mean NLL of the sample's target text given its modality payloads.
  Tensor sample_loss(const TaskSample& sample) const;

  // Per-target-token NLL, in target order; diagnostic surface.
  std::vector<double> per_token_nll(const TaskSample& sample) const;

  // Greedy continuation of the sample's prompt.
  std::vector<int> generate_reply(const TaskSample& sample, int max_new_tokens) const;

  // Gate weights for one sample, [Ls, experts]; undefined without a gate.
  Tensor gate_weights_for(const TaskSample& sample) const;

  std::vector<std::pair<ParamGroup, ParamList>> param_groups() const;
  ParamList group_params(ParamGroup g) const;
  ParamList frozen_params() const;     // encoders and LM base
  ParamList all_params() const;        // everything, checkpoint order
  ParamList trainable_params() const;  // union of all groups

  void save(const std::string& path) const;
  void load(const std::string& path);

 private:
  struct Forwarded {
    std::vector<TokenBlock> blocks;
  };
  Forwarded forward_streams(const TaskSample& sample) const;

  RunConfig cfg_;
  GenConfig gen_;
  Tokenizer tokenizer_;
  std::unique_ptr<VisualEncoder> visual_;
  std::unique_ptr<SpeechEncoder> speech_;
  std::unique_ptr<FaceEncoder> face_;
  std::unique_ptr<Projector> projector_;
  std::unique_ptr<FusionEncoder> fusion_;
  std::unique_ptr<TinyLM> lm_;
  bool qformers_with_adapters_ = true;
  bool supervise_think_ = true;
};

}  // namespace afx
