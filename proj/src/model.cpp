#include "afx/model.hpp"

#include <algorithm>

#include "afx/checkpoint.hpp"
#include "afx/ops.hpp"

namespace afx {

const char* group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::VisualAdapter: return "visual_adapter";
    case ParamGroup::SpeechAdapter: return "speech_adapter";
    case ParamGroup::FaceAdapterTm: return "face_adapter_tm";
    case ParamGroup::QFormers: return "qformers";
    case ParamGroup::FusionEncoder: return "fusion_encoder";
    case ParamGroup::FusionAdapter: return "fusion_adapter";
    case ParamGroup::Lora: return "lora";
  }
  return "?";
}

ParamGroup group_from_name(const std::string& name) {
  for (ParamGroup g : all_groups())
    if (name == group_name(g)) return g;
  throw ConfigError("unknown parameter group '" + name + "'");
}

const std::vector<ParamGroup>& all_groups() {
  static const std::vector<ParamGroup> v = {
      ParamGroup::VisualAdapter,  ParamGroup::SpeechAdapter, ParamGroup::FaceAdapterTm,
      ParamGroup::QFormers,       ParamGroup::FusionEncoder, ParamGroup::FusionAdapter,
      ParamGroup::Lora};
  return v;
}

MultimodalLm::MultimodalLm(const RunConfig& cfg) : cfg_(cfg), tokenizer_(vocabulary_inventory()) {
  DType dt = cfg.gets("run.precision") == "f64" ? DType::F64 : DType::F32;
  if (cfg.gets("run.precision") != "f32" && cfg.gets("run.precision") != "f64")
    throw ConfigError("run.precision must be f32 or f64");

  gen_.frames = cfg.geti("video.frames");
  gen_.frame_size = cfg.geti("video.size");
  gen_.audio_steps = cfg.geti("audio.steps");
  gen_.audio_dim = cfg.geti("audio.dim");
  gen_.max_turns = cfg.geti("erg.max_turns");
  supervise_think_ = cfg.getb("train.supervise_think");
  qformers_with_adapters_ = cfg.getb("train.qformers_with_adapters");

  EncoderConfig ecfg;
  ecfg.depth = cfg.geti("encoder.depth");
  ecfg.dim = cfg.geti("encoder.dim");
  ecfg.seed = cfg.getu("encoder.seed");
  const int pixels = 3 * gen_.frame_size * gen_.frame_size;
  const int face_dim = cfg.geti("face.dim");
  visual_ = std::make_unique<VisualEncoder>(pixels, ecfg, dt);
  speech_ = std::make_unique<SpeechEncoder>(gen_.audio_dim, ecfg, dt);
  face_ = std::make_unique<FaceEncoder>(pixels, ecfg, face_dim, dt);

  FusionConfig fcfg;
  fcfg.mode = fusion_mode_from_name(cfg.gets("fusion.mode"));
  fcfg.experts = cfg.geti("fusion.experts");
  fcfg.heads = cfg.geti("fusion.heads");
  fcfg.dim = ecfg.dim;
  fcfg.pairing = pairing_mode_from_name(cfg.gets("fusion.pairing"));
  fcfg.seed = cfg.getu("fusion.seed");
  fusion_ = std::make_unique<FusionEncoder>(fcfg, cfg.get_ints("encoder.speech_taps"),
                                            cfg.get_ints("encoder.visual_taps"), ecfg.depth,
                                            ecfg.depth, ecfg.dim, ecfg.dim, dt);

  ProjectorConfig pcfg;
  pcfg.tokens_visual = cfg.geti("tokens.visual");
  pcfg.tokens_speech = cfg.geti("tokens.speech");
  pcfg.tokens_face = cfg.geti("tokens.face");
  pcfg.tokens_fusion = cfg.geti("tokens.fusion");
  pcfg.lm_dim = cfg.geti("lm.dim");
  pcfg.qformer_heads = cfg.geti("qformer.heads");
  pcfg.seed = cfg.getu("projector.seed");
  projector_ = std::make_unique<Projector>(pcfg, ecfg.dim, face_dim, fcfg.dim, dt);

  LmConfig lcfg;
  lcfg.dim = pcfg.lm_dim;
  lcfg.blocks = cfg.geti("lm.blocks");
  lcfg.heads = cfg.geti("lm.heads");
  lcfg.ffn_mult = cfg.geti("lm.ffn_mult");
  lcfg.max_seq = cfg.geti("lm.max_seq");
  lcfg.seed = cfg.getu("lm.seed");
  lm_ = std::make_unique<TinyLM>(tokenizer_.vocab_size(), lcfg, dt);
  lm_->attach_lora({.rank = cfg.geti("lora.rank"),
                    .alpha = cfg.getd("lora.alpha"),
                    .seed = cfg.getu("lora.seed")});
}

MultimodalLm::Forwarded MultimodalLm::forward_streams(const TaskSample& sample) const {
  FeatureStack vs = visual_->encode(sample.video);
  FeatureStack ss = speech_->encode(sample.audio);
  FeatureStack fs = face_->encode(sample.video);

  bool include_fusion = fusion_->mode() != FusionMode::None;
  FusionOutput fo;
  if (include_fusion) fo = fusion_->forward(ss, vs);
  return {projector_->project_all(&vs, &ss, &fs.final_layer(),
                                  include_fusion ? &fo.fused : nullptr, include_fusion)};
}

Tensor MultimodalLm::sample_loss(const TaskSample& sample) const {
  Forwarded fwd = forward_streams(sample);
  std::vector<int> prompt = tokenizer_.encode(sample.prompt);
  std::vector<int> target = tokenizer_.encode(sample.target, true);
  AssembledSequence seq = assemble(*lm_, fwd.blocks, prompt, target);
  if (!supervise_think_ && sample.task == TaskKind::Erg) {
    // mask out everything through the closing think tag
    int close_id = tokenizer_.word_id("</think>");
    std::size_t base = seq.loss_mask.size() - target.size();
    for (std::size_t i = 0; i < target.size(); ++i) {
      seq.loss_mask[base + i] = 0;
      if (target[i] == close_id) break;
    }
  }
  return mle_loss(*lm_, seq);
}

std::vector<double> MultimodalLm::per_token_nll(const TaskSample& sample) const {
  NoGradGuard ng;
  Forwarded fwd = forward_streams(sample);
  std::vector<int> prompt = tokenizer_.encode(sample.prompt);
  std::vector<int> target = tokenizer_.encode(sample.target, true);
  AssembledSequence seq = assemble(*lm_, fwd.blocks, prompt, target);
  Tensor logits = lm_->forward_embeddings(seq.embeddings);
  std::vector<double> out;
  for (int t = 0; t + 1 < seq.length(); ++t) {
    if (!seq.loss_mask[static_cast<std::size_t>(t + 1)]) continue;
    int y = seq.token_ids[static_cast<std::size_t>(t + 1)];
    Tensor row = ops::gather_rows(logits, {t});
    out.push_back(ops::cross_entropy_mean(row, {y}).at(0));
  }
  return out;
}

std::vector<int> MultimodalLm::generate_reply(const TaskSample& sample, int max_new_tokens) const {
  NoGradGuard ng;
  Forwarded fwd = forward_streams(sample);
  return generate(*lm_, fwd.blocks, tokenizer_.encode(sample.prompt), max_new_tokens);
}

Tensor MultimodalLm::gate_weights_for(const TaskSample& sample) const {
  NoGradGuard ng;
  FeatureStack vs = visual_->encode(sample.video);
  FeatureStack ss = speech_->encode(sample.audio);
  return fusion_->forward(ss, vs).gate_weights;
}

std::vector<std::pair<ParamGroup, ParamList>> MultimodalLm::param_groups() const {
  std::vector<std::pair<ParamGroup, ParamList>> groups;
  for (ParamGroup g : all_groups()) groups.emplace_back(g, group_params(g));
  return groups;
}

ParamList MultimodalLm::group_params(ParamGroup g) const {
  ParamList out;
  switch (g) {
    case ParamGroup::VisualAdapter:
      projector_->visual_adapter_.register_params("projector.visual_adapter", out);
      if (qformers_with_adapters_)
        projector_->visual_qformer_.register_params("projector.visual_qformer", out);
      break;
    case ParamGroup::SpeechAdapter:
      projector_->speech_adapter_.register_params("projector.speech_adapter", out);
      if (qformers_with_adapters_)
        projector_->speech_qformer_.register_params("projector.speech_qformer", out);
      break;
    case ParamGroup::FaceAdapterTm:
      projector_->face_adapter_.register_params("projector.face_adapter", out);
      projector_->temporal_.register_params("projector.temporal", out);
      break;
    case ParamGroup::QFormers:
      if (!qformers_with_adapters_) {
        projector_->visual_qformer_.register_params("projector.visual_qformer", out);
        projector_->speech_qformer_.register_params("projector.speech_qformer", out);
      }
      break;
    case ParamGroup::FusionEncoder:
      fusion_->register_params("fusion", out);
      break;
    case ParamGroup::FusionAdapter:
      projector_->fusion_adapter_.register_params("projector.fusion_adapter", out);
      break;
    case ParamGroup::Lora:
      lm_->register_lora_params("lora", out);
      break;
  }
  return out;
}

ParamList MultimodalLm::frozen_params() const {
  ParamList out;
  visual_->register_params("encoder.visual", out);
  speech_->register_params("encoder.speech", out);
  face_->register_params("encoder.face", out);
  lm_->register_base_params("lm", out);
  return out;
}

ParamList MultimodalLm::trainable_params() const {
  ParamList out;
  for (ParamGroup g : all_groups()) {
    ParamList gp = group_params(g);
    out.insert(out.end(), gp.begin(), gp.end());
  }
  return out;
}

ParamList MultimodalLm::all_params() const {
  ParamList out = frozen_params();
  ParamList t = trainable_params();
  out.insert(out.end(), t.begin(), t.end());
  return out;
}

void MultimodalLm::save(const std::string& path) const { save_checkpoint(path, all_params()); }

void MultimodalLm::load(const std::string& path) { load_checkpoint_into(path, all_params()); }

}  // namespace afx
