#include "afx/lm.hpp"

#include <algorithm>
#include <cmath>

#include "afx/ops.hpp"

namespace afx {

Tokenizer::Tokenizer(const std::vector<std::string>& words) : words_(words) {
  if (vocab_size() > 512)
    throw ConfigError("tokenizer: vocabulary of " + std::to_string(vocab_size()) +
                      " exceeds the 512 budget");
  for (std::size_t i = 0; i < words_.size(); ++i) {
    const std::string& w = words_[i];
    if (w.empty() || w.find_first_of(" \t\n\r") != std::string::npos)
      throw ConfigError("tokenizer: invalid vocabulary word '" + w + "'");
    index_.emplace_back(w, 258 + static_cast<int>(i));
  }
  std::sort(index_.begin(), index_.end());
  for (std::size_t i = 1; i < index_.size(); ++i)
    if (index_[i].first == index_[i - 1].first)
      throw ConfigError("tokenizer: duplicate vocabulary word '" + index_[i].first + "'");
}

int Tokenizer::word_id(const std::string& word) const {
  auto it = std::lower_bound(index_.begin(), index_.end(), std::make_pair(word, 0));
  if (it != index_.end() && it->first == word) return it->second;
  return -1;
}

std::vector<int> Tokenizer::encode(const std::string& text, bool add_eos) const {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      if (!cur.empty()) parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) parts.push_back(cur);

  std::vector<int> ids;
  std::vector<bool> as_bytes(parts.size(), false);
  for (std::size_t i = 0; i < parts.size(); ++i) as_bytes[i] = word_id(parts[i]) < 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0 && (as_bytes[i] || as_bytes[i - 1]))
      ids.push_back(2 + ' ');  // explicit separator around byte runs
    if (as_bytes[i])
      for (unsigned char c : parts[i]) ids.push_back(2 + static_cast<int>(c));
    else
      ids.push_back(word_id(parts[i]));
  }
  if (add_eos) ids.push_back(eos_id());
  return ids;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id == pad_id() || id == eos_id()) continue;
    if (id >= 2 && id < 258) {
      out.push_back(static_cast<char>(id - 2));
    } else if (id >= 258 && id < vocab_size()) {
      if (!out.empty() && out.back() != ' ') out.push_back(' ');
      out += words_[static_cast<std::size_t>(id - 258)];
    } else {
      throw ShapeError("tokenizer: id " + std::to_string(id) + " outside vocabulary");
    }
  }
  return out;
}

std::vector<std::string> Tokenizer::decode_words(const std::vector<int>& ids) const {
  std::vector<std::string> words;
  std::string text = decode(ids);
  std::string cur;
  for (char c : text) {
    if (c == ' ') {
      if (!cur.empty()) words.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

namespace {

Tensor init_weight(int in, int out, Rng& rng, DType dt, double stddev = 0.0) {
  double s = stddev > 0.0 ? stddev : 1.0 / std::sqrt(static_cast<double>(in));
  return Tensor::randn({in, out}, rng, s, dt, true);
}

}  // namespace

TinyLM::TinyLM(int vocab_size, const LmConfig& cfg, DType dt) : cfg_(cfg), dt_(dt) {
  Rng rng(cfg.seed);
  double emb_std = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  tok_emb_ = Tensor::randn({vocab_size, cfg.dim}, rng, emb_std, dt, true);
  pos_emb_ = Tensor::randn({cfg.max_seq, cfg.dim}, rng, 0.1, dt, true);
  for (int i = 0; i < cfg.blocks; ++i) {
    Block blk;
    blk.ln1_g = Tensor::full({cfg.dim}, 1.0, dt);
    blk.ln1_g.set_requires_grad(true);
    blk.ln1_b = Tensor::zeros({cfg.dim}, dt, true);
    blk.wq = init_weight(cfg.dim, cfg.dim, rng, dt);
    blk.wk = init_weight(cfg.dim, cfg.dim, rng, dt);
    blk.wv = init_weight(cfg.dim, cfg.dim, rng, dt);
    blk.wo = init_weight(cfg.dim, cfg.dim, rng, dt);
    blk.ln2_g = Tensor::full({cfg.dim}, 1.0, dt);
    blk.ln2_g.set_requires_grad(true);
    blk.ln2_b = Tensor::zeros({cfg.dim}, dt, true);
    blk.ffn_w1 = init_weight(cfg.dim, cfg.ffn_mult * cfg.dim, rng, dt);
    blk.ffn_b1 = Tensor::zeros({cfg.ffn_mult * cfg.dim}, dt, true);
    blk.ffn_w2 = init_weight(cfg.ffn_mult * cfg.dim, cfg.dim, rng, dt);
    blk.ffn_b2 = Tensor::zeros({cfg.dim}, dt, true);
    blocks_.push_back(blk);
  }
  final_ln_g_ = Tensor::full({cfg.dim}, 1.0, dt);
  final_ln_g_.set_requires_grad(true);
  final_ln_b_ = Tensor::zeros({cfg.dim}, dt, true);
  head_w_ = init_weight(cfg.dim, vocab_size, rng, dt, 2.0 * emb_std);
}

Tensor TinyLM::project_maybe_lora(const Tensor& h, const Tensor& w, const LoraPair& lp) const {
  Tensor base = ops::matmul(h, w);
  if (!lora_attached_) return base;
  Tensor delta = ops::scale(ops::matmul(ops::matmul(h, lp.b), lp.a), lora_scaling_);
  return ops::add(base, delta);
}

Tensor TinyLM::forward_embeddings(const Tensor& seq) const {
  if (seq.rank() != 2 || seq.dim(1) != cfg_.dim)
    throw ShapeError("lm: sequence " + shape_string(seq.shape()) + " does not match model dim " +
                     std::to_string(cfg_.dim));
  const int len = seq.dim(0);
  if (len > cfg_.max_seq)
    throw ConfigError("lm: sequence length " + std::to_string(len) + " exceeds max " +
                      std::to_string(cfg_.max_seq));
  Tensor x = ops::add(seq, ops::slice_rows(pos_emb_, 0, len));
  for (const Block& blk : blocks_) {
    Tensor h = ops::layer_norm(x, blk.ln1_g, blk.ln1_b);
    Tensor q = project_maybe_lora(h, blk.wq, blk.lora_q);
    Tensor k = ops::matmul(h, blk.wk);
    Tensor v = project_maybe_lora(h, blk.wv, blk.lora_v);
    Tensor attn = ops::attention(q, k, v, cfg_.heads, true);
    x = ops::add(x, ops::matmul(attn, blk.wo));
    h = ops::layer_norm(x, blk.ln2_g, blk.ln2_b);
    Tensor ffn = ops::linear(ops::gelu(ops::linear(h, blk.ffn_w1, blk.ffn_b1)), blk.ffn_w2, blk.ffn_b2);
    x = ops::add(x, ffn);
  }
  Tensor hf = ops::layer_norm(x, final_ln_g_, final_ln_b_);
  return ops::matmul(hf, head_w_);
}

Tensor TinyLM::token_embeddings(const std::vector<int>& ids) const {
  return ops::embedding_rows(tok_emb_, ids);
}

void TinyLM::attach_lora(const LoraConfig& cfg) {
  if (cfg.rank < 1 || cfg.rank > cfg_.dim)
    throw ConfigError("lora: rank " + std::to_string(cfg.rank) + " outside [1, " +
                      std::to_string(cfg_.dim) + "]");
  Rng rng(cfg.seed);
  for (Block& blk : blocks_) {
    blk.lora_q.a = Tensor::randn({cfg.rank, cfg_.dim}, rng, 0.2, dt_, true);
    blk.lora_q.b = Tensor::zeros({cfg_.dim, cfg.rank}, dt_, true);
    blk.lora_v.a = Tensor::randn({cfg.rank, cfg_.dim}, rng, 0.2, dt_, true);
    blk.lora_v.b = Tensor::zeros({cfg_.dim, cfg.rank}, dt_, true);
  }
  lora_scaling_ = cfg.scaling();
  lora_attached_ = true;
}

void TinyLM::detach_lora() {
  for (Block& blk : blocks_) {
    blk.lora_q = {};
    blk.lora_v = {};
  }
  lora_attached_ = false;
  lora_scaling_ = 0.0;
}

Tensor TinyLM::lora_delta(int block, char which) const {
  if (!lora_attached_) throw ConfigError("lora_delta: no adapter attached");
  const Block& blk = blocks_[static_cast<std::size_t>(block)];
  const LoraPair& lp = which == 'q' ? blk.lora_q : blk.lora_v;
  NoGradGuard ng;
  return ops::scale(ops::matmul(lp.b, lp.a), lora_scaling_);
}

void TinyLM::register_base_params(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".tok_emb", tok_emb_});
  out.push_back({prefix + ".pos_emb", pos_emb_});
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Block& b = blocks_[i];
    std::string p = prefix + ".block" + std::to_string(i + 1);
    out.push_back({p + ".ln1_g", b.ln1_g});
    out.push_back({p + ".ln1_b", b.ln1_b});
    out.push_back({p + ".wq", b.wq});
    out.push_back({p + ".wk", b.wk});
    out.push_back({p + ".wv", b.wv});
    out.push_back({p + ".wo", b.wo});
    out.push_back({p + ".ln2_g", b.ln2_g});
    out.push_back({p + ".ln2_b", b.ln2_b});
    out.push_back({p + ".ffn_w1", b.ffn_w1});
    out.push_back({p + ".ffn_b1", b.ffn_b1});
    out.push_back({p + ".ffn_w2", b.ffn_w2});
    out.push_back({p + ".ffn_b2", b.ffn_b2});
  }
  out.push_back({prefix + ".final_ln_g", final_ln_g_});
  out.push_back({prefix + ".final_ln_b", final_ln_b_});
  out.push_back({prefix + ".head_w", head_w_});
}

void TinyLM::register_lora_params(const std::string& prefix, ParamList& out) const {
  if (!lora_attached_) return;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Block& b = blocks_[i];
    std::string p = prefix + ".block" + std::to_string(i + 1);
    out.push_back({p + ".q.a", b.lora_q.a});
    out.push_back({p + ".q.b", b.lora_q.b});
    out.push_back({p + ".v.a", b.lora_v.a});
    out.push_back({p + ".v.b", b.lora_v.b});
  }
}

AssembledSequence assemble(const TinyLM& lm, const std::vector<TokenBlock>& blocks,
                           const std::vector<int>& prompt_ids, const std::vector<int>& target_ids) {
  if (target_ids.empty()) throw ShapeError("assemble: empty target, nothing to supervise");
  static const Stream kOrder[] = {Stream::Visual, Stream::Speech, Stream::Face, Stream::Fusion};
  if (blocks.empty() || blocks.size() > 4)
    throw ShapeError("assemble: expected 1..4 modality blocks, got " + std::to_string(blocks.size()));
  std::size_t oi = 0;
  for (const TokenBlock& b : blocks) {
    while (oi < 4 && kOrder[oi] != b.stream) ++oi;
    if (oi >= 4)
      throw ShapeError(std::string("assemble: block order must be visual, speech, face, fusion; "
                                   "found out-of-order ") +
                       stream_name(b.stream));
    if (b.tokens.dim(1) != lm.config().dim)
      throw ShapeError("assemble: block " + std::string(stream_name(b.stream)) + " dim " +
                       shape_string(b.tokens.shape()) + " does not match lm dim " +
                       std::to_string(lm.config().dim));
  }

  std::vector<Tensor> parts;
  int prefix_len = 0;
  for (const TokenBlock& b : blocks) {
    parts.push_back(b.tokens);
    prefix_len += b.tokens.dim(0);
  }
  std::vector<int> text = prompt_ids;
  text.insert(text.end(), target_ids.begin(), target_ids.end());
  if (!text.empty()) parts.push_back(lm.token_embeddings(text));

  AssembledSequence seq;
  seq.embeddings = ops::concat_rows(parts);
  seq.prefix_len = prefix_len;
  seq.token_ids.assign(static_cast<std::size_t>(prefix_len), -1);
  seq.token_ids.insert(seq.token_ids.end(), text.begin(), text.end());
  seq.loss_mask.assign(seq.token_ids.size(), 0);
  for (std::size_t i = static_cast<std::size_t>(prefix_len) + prompt_ids.size();
       i < seq.token_ids.size(); ++i)
    seq.loss_mask[i] = 1;
  return seq;
}

Tensor mle_loss(const TinyLM& lm, const AssembledSequence& seq) {
  std::vector<int> rows;
  std::vector<int> targets;
  for (int t = 0; t + 1 < seq.length(); ++t) {
    if (seq.loss_mask[static_cast<std::size_t>(t + 1)]) {
      rows.push_back(t);
      targets.push_back(seq.token_ids[static_cast<std::size_t>(t + 1)]);
    }
  }
  if (rows.empty()) throw ShapeError("mle_loss: no supervised positions in sequence");
  Tensor logits = lm.forward_embeddings(seq.embeddings);
  return ops::cross_entropy_mean(ops::gather_rows(logits, rows), targets);
}

std::vector<int> generate(const TinyLM& lm, const std::vector<TokenBlock>& blocks,
                          const std::vector<int>& prompt_ids, int max_tokens) {
  if (max_tokens <= 0) throw ConfigError("generate: max_tokens must be positive");
  if (prompt_ids.empty()) throw ShapeError("generate: empty prefix");
  NoGradGuard ng;
  std::vector<Tensor> prefix_parts;
  int prefix_len = 0;
  for (const TokenBlock& b : blocks) {
    prefix_parts.push_back(b.tokens);
    prefix_len += b.tokens.dim(0);
  }
  std::vector<int> text = prompt_ids;
  std::vector<int> out;
  while (static_cast<int>(out.size()) < max_tokens) {
    if (prefix_len + static_cast<int>(text.size()) >= lm.config().max_seq) break;
    std::vector<Tensor> parts = prefix_parts;
    parts.push_back(lm.token_embeddings(text));
    Tensor logits = lm.forward_embeddings(ops::concat_rows(parts));
    int last = logits.dim(0) - 1;
    int best = 0;
    double best_v = logits.at2(last, 0);
    for (int j = 1; j < logits.dim(1); ++j) {
      double v = logits.at2(last, j);
      if (v > best_v) {
        best_v = v;
        best = j;
      }
    }
    if (best == Tokenizer::eos_id()) break;
    out.push_back(best);
    text.push_back(best);
  }
  return out;
}

}  // namespace afx
