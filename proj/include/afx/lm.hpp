#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "afx/params.hpp"
#include "afx/projection.hpp"
#include "afx/tensor.hpp"

namespace afx {

// Whitespace-split tokenizer with UTF-8 byte fallback.
// Id layout: 0 <pad>, 1 <eos>, 2..257 raw bytes, 258.. vocabulary words.
class Tokenizer {
 public:
  explicit Tokenizer(const std::vector<std::string>& words);

  std::vector<int> encode(const std::string& text, bool add_eos = false) const;
  std::string decode(const std::vector<int>& ids) const;
  std::vector<std::string> decode_words(const std::vector<int>& ids) const;

  int vocab_size() const { return 258 + static_cast<int>(words_.size()); }
  static constexpr int pad_id() { return 0; }
  static constexpr int eos_id() { return 1; }
  int word_id(const std::string& word) const;  // -1 when absent

 private:
  std::vector<std::string> words_;
  std::vector<std::pair<std::string, int>> index_;  // sorted word -> id
};

struct LmConfig {
  int dim = 64;
  int blocks = 2;
  int heads = 4;
  int ffn_mult = 4;
  int max_seq = 512;
  std::uint64_t seed = 17;
};

struct LoraConfig {
  int rank = 32;
  double alpha = 16.0;
  std::uint64_t seed = 23;
  double scaling() const { return alpha / static_cast<double>(rank); }
};

// Modality token blocks, then prompt, then supervised target text.
struct AssembledSequence {
  Tensor embeddings;                     // [L, D]
  std::vector<int> token_ids;            // -1 on modality positions
  std::vector<unsigned char> loss_mask;  // 1 on target positions
  int prefix_len = 0;
  int length() const { return static_cast<int>(token_ids.size()); }
};

// Decoder-only toy LM with causal self-attention and optional LoRA deltas on
// the attention query and value projections of every block.
class TinyLM {
 public:
  TinyLM(int vocab_size, const LmConfig& cfg, DType dt = DType::F32);

  const LmConfig& config() const { return cfg_; }
  int vocab_size() const { return head_w_.dim(1); }

  Tensor forward_embeddings(const Tensor& seq) const;  // [L, D] -> logits [L, V]
  Tensor token_embeddings(const std::vector<int>& ids) const;

  void attach_lora(const LoraConfig& cfg);
  void detach_lora();
  bool lora_attached() const { return lora_attached_; }
  double lora_scaling() const { return lora_scaling_; }
  // Effective additive delta scaling * B * A for one block's q or v target.
  Tensor lora_delta(int block, char which) const;

  void register_base_params(const std::string& prefix, ParamList& out) const;
  void register_lora_params(const std::string& prefix, ParamList& out) const;

  Tensor head_w_;  // exposed for forced-logit tests

 private:
  struct LoraPair {
    Tensor a;  // [r, d]
    Tensor b;  // [d, r]
  };
  struct Block {
    Tensor ln1_g, ln1_b, wq, wk, wv, wo;
    Tensor ln2_g, ln2_b, ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    LoraPair lora_q, lora_v;
  };
  Tensor project_maybe_lora(const Tensor& h, const Tensor& w, const LoraPair& lp) const;

  LmConfig cfg_;
  DType dt_;
  Tensor tok_emb_, pos_emb_, final_ln_g_, final_ln_b_;
  std::vector<Block> blocks_;
  bool lora_attached_ = false;
  double lora_scaling_ = 0.0;
};

AssembledSequence assemble(const TinyLM& lm, const std::vector<TokenBlock>& blocks,
                           const std::vector<int>& prompt_ids, const std::vector<int>& target_ids);

// Mean negative log-likelihood over unmasked next-token predictions, nats.
Tensor mle_loss(const TinyLM& lm, const AssembledSequence& seq);

// Greedy decoding; ties resolve to the lowest token id. Stops at eos,
// max_tokens, or the model's sequence limit.
std::vector<int> generate(const TinyLM& lm, const std::vector<TokenBlock>& blocks,
                          const std::vector<int>& prompt_ids, int max_tokens);

}  // namespace afx
