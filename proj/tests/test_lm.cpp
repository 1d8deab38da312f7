#include <cmath>
#include <string>
#include <vector>

#include "afx/gradcheck.hpp"
#include "afx/lm.hpp"
#include "afx/ops.hpp"
#include "afx/optim.hpp"
#include "doctest.h"
#include "test_helpers.hpp"

using namespace afx;

namespace {

std::vector<std::string> tiny_words() {
  return {"the",   "person", "feels",  "happy", "sad",    "angry", "calm",
          "scene", "shows",  "a",      "b",     "c",      "d",     "e",
          "[Recognition]",   "reply",  "think", "<think>", "</think>"};
}

std::vector<TokenBlock> prefix_blocks(int lm_dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TokenBlock> blocks;
  blocks.push_back({Stream::Visual, Tensor::randn({32, lm_dim}, rng, 0.3)});
  blocks.push_back({Stream::Speech, Tensor::randn({32, lm_dim}, rng, 0.3)});
  blocks.push_back({Stream::Face, Tensor::randn({4, lm_dim}, rng, 0.3)});
  blocks.push_back({Stream::Fusion, Tensor::randn({1, lm_dim}, rng, 0.3)});
  return blocks;
}

}  // namespace

TEST_CASE("tokenizer round-trips vocabulary words and byte fallback") {
  Tokenizer tok(tiny_words());
  CHECK(tok.vocab_size() <= 512);
  for (const std::string& text :
       {std::string("the person feels happy"), std::string("[Recognition] the scene shows a b"),
        std::string("unknownword mixes with the known"), std::string("zq xr")}) {
    auto ids = tok.encode(text);
    CHECK(tok.decode(ids) == text);
  }
  auto with_eos = tok.encode("happy", true);
  CHECK(with_eos.back() == Tokenizer::eos_id());
}

TEST_CASE("tokenizer rejects oversized vocabularies") {
  std::vector<std::string> too_many;
  for (int i = 0; i < 300; ++i) too_many.push_back("w" + std::to_string(i));
  CHECK_THROWS_AS((Tokenizer{too_many}), ConfigError);
}

TEST_CASE("identifier prefix survives tokenize and detokenize") {
  Tokenizer tok(tiny_words());
  auto ids = tok.encode("[Recognition] the person feels happy");
  auto words = tok.decode_words(ids);
  REQUIRE(!words.empty());
  CHECK(words[0] == "[Recognition]");
}

TEST_CASE("assemble produces the documented lengths and mask") {
  Tokenizer tok(tiny_words());
  LmConfig cfg;
  cfg.dim = 16;
  TinyLM lm(tok.vocab_size(), cfg);
  auto blocks = prefix_blocks(16, 1);
  std::vector<int> prompt(10, 258), target(5, 259);
  AssembledSequence seq = assemble(lm, blocks, prompt, target);
  CHECK(seq.length() == 84);
  CHECK(seq.prefix_len == 69);
  int msum = 0;
  for (auto m : seq.loss_mask) msum += m;
  CHECK(msum == 5);
  CHECK(seq.embeddings.dim(0) == 84);
}

TEST_CASE("assemble without fusion block gives a 68-token prefix") {
  Tokenizer tok(tiny_words());
  LmConfig cfg;
  cfg.dim = 16;
  TinyLM lm(tok.vocab_size(), cfg);
  auto blocks = prefix_blocks(16, 2);
  blocks.pop_back();
  AssembledSequence seq = assemble(lm, blocks, {258}, {259});
  CHECK(seq.prefix_len == 68);
}

TEST_CASE("assemble rejects an empty target") {
  Tokenizer tok(tiny_words());
  LmConfig cfg;
  cfg.dim = 16;
  TinyLM lm(tok.vocab_size(), cfg);
  CHECK_THROWS_AS(assemble(lm, prefix_blocks(16, 3), {258}, {}), ShapeError);
}

TEST_CASE("uniform logits cost ln(vocab) per token") {
  Tokenizer tok(tiny_words());
  LmConfig cfg;
  cfg.dim = 16;
  TinyLM lm(tok.vocab_size(), cfg);
  testutil::fill_zero(lm.head_w_);
  AssembledSequence seq = assemble(lm, prefix_blocks(16, 4), {258, 259}, {260, 261, 262});
  Tensor loss = mle_loss(lm, seq);
  CHECK(loss.at(0) == doctest::Approx(std::log(static_cast<double>(tok.vocab_size()))).epsilon(1e-5));
}

TEST_CASE("near-delta logits give near-zero loss") {
  // the loss path itself: +30 on the target column
  std::vector<int> targets = {2, 0};
  Tensor logits = Tensor::zeros({2, 4}, DType::F64);
  logits.set(2, 30.0);
  logits.set(4, 30.0);
  Tensor loss = ops::cross_entropy_mean(logits, targets);
  CHECK(loss.at(0) < 1e-9);
}

TEST_CASE("logits are causal in the sequence") {
  Tokenizer tok(tiny_words());
  LmConfig cfg;
  cfg.dim = 16;
  cfg.blocks = 2;
  TinyLM lm(tok.vocab_size(), cfg);
  Rng rng(5);
  Tensor seq = Tensor::randn({10, 16}, rng, 0.5);
  Tensor base = lm.forward_embeddings(seq);
  const int t = 6;
  Tensor bumped = seq.detach_copy();
  for (int c = 0; c < 16; ++c) bumped.set(static_cast<std::size_t>(t + 1) * 16 + c, 2.0);
  Tensor after = lm.forward_embeddings(bumped);
  for (int r = 0; r <= t; ++r)
    for (int c = 0; c < after.dim(1); ++c) {
      CHECK(after.at2(r, c) == base.at2(r, c));
    }
  bool changed = false;
  for (int c = 0; c < after.dim(1); ++c)
    if (after.at2(t + 1, c) != base.at2(t + 1, c)) changed = true;
  CHECK(changed);
}

TEST_CASE("mle loss gradient matches finite differences") {
  Tokenizer tok(tiny_words());
  LmConfig cfg;
  cfg.dim = 8;
  cfg.blocks = 1;
  cfg.heads = 2;
  cfg.max_seq = 32;
  TinyLM lm(tok.vocab_size(), cfg, DType::F64);
  lm.attach_lora({.rank = 4, .alpha = 2.0, .seed = 7});
  Rng rng(6);
  Tensor prefix = Tensor::randn({3, 8}, rng, 0.5, DType::F64, true);
  std::vector<TokenBlock> blocks = {{Stream::Visual, prefix}};
  AssembledSequence seq = assemble(lm, blocks, {258, 259}, {260, 261});
  ParamList lora;
  lm.register_lora_params("lora", lora);
  std::vector<Tensor> wrt = {prefix};
  for (const NamedParam& p : lora) wrt.push_back(p.tensor);
  auto loss = [&]() {
    AssembledSequence s = assemble(lm, blocks, {258, 259}, {260, 261});
    return mle_loss(lm, s);
  };
  CHECK(finite_diff_max_rel_error(loss, wrt) < 1e-4);
}

TEST_CASE("lora attach with zero B leaves logits bit-identical") {
  Tokenizer tok(tiny_words());
  LmConfig cfg;
  cfg.dim = 32;
  TinyLM lm(tok.vocab_size(), cfg);
  Rng rng(8);
  Tensor seq = Tensor::randn({12, 32}, rng, 0.5);
  Tensor base = lm.forward_embeddings(seq);
  lm.attach_lora({.rank = 8, .alpha = 4.0});
  Tensor attached = lm.forward_embeddings(seq);
  CHECK(attached.same_bits(base));
  lm.detach_lora();
  Tensor detached = lm.forward_embeddings(seq);
  CHECK(detached.same_bits(base));
}

TEST_CASE("lora scaling for the configured rank and alpha is one half") {
  LoraConfig cfg{.rank = 32, .alpha = 16.0};
  CHECK(cfg.scaling() == doctest::Approx(0.5));
}

TEST_CASE("lora rank beyond the matrix dimension is a config error") {
  Tokenizer tok(tiny_words());
  LmConfig cfg;
  cfg.dim = 16;
  TinyLM lm(tok.vocab_size(), cfg);
  CHECK_THROWS_AS(lm.attach_lora({.rank = 17}), ConfigError);
}

TEST_CASE("training with lora only changes A and B; base stays frozen bitwise") {
  Tokenizer tok(tiny_words());
  LmConfig cfg;
  cfg.dim = 16;
  TinyLM lm(tok.vocab_size(), cfg);
  lm.attach_lora({.rank = 4, .alpha = 2.0});
  ParamList base, lora;
  lm.register_base_params("lm", base);
  lm.register_lora_params("lora", lora);
  ParamList base_before = snapshot(base);
  ParamList lora_before = snapshot(lora);

  auto blocks = prefix_blocks(16, 9);
  AdamW opt({.lr = 0.01});
  for (int step = 0; step < 2; ++step) {
    zero_grads(base);
    zero_grads(lora);
    AssembledSequence seq = assemble(lm, blocks, {258, 259}, {260, 261, 262});
    backward(mle_loss(lm, seq));
    opt.step(lora, "lora");
  }
  CHECK(changed_params(base_before, base).empty());
  CHECK_FALSE(changed_params(lora_before, lora).empty());
}

TEST_CASE("lora delta has numerical rank at most r") {
  Tokenizer tok(tiny_words());
  LmConfig cfg;
  cfg.dim = 24;
  TinyLM lm(tok.vocab_size(), cfg, DType::F64);
  lm.attach_lora({.rank = 5, .alpha = 2.5});
  // push some training signal into A and B so the delta is non-trivial
  ParamList lora;
  lm.register_lora_params("lora", lora);
  AdamW opt({.lr = 0.05});
  Rng brng(10);
  auto blocks = std::vector<TokenBlock>{{Stream::Visual, Tensor::randn({4, 24}, brng, 0.5, DType::F64)}};
  for (int step = 0; step < 5; ++step) {
    zero_grads(lora);
    AssembledSequence seq = assemble(lm, blocks, {258}, {260, 261});
    backward(mle_loss(lm, seq));
    opt.step(lora, "lora");
  }
  Tensor delta = lm.lora_delta(0, 'q');
  auto sv = testutil::singular_values(delta.to_doubles(), 24, 24);
  REQUIRE(sv.size() == 24);
  CHECK(sv[0] > 0.0);
  for (std::size_t i = 5; i < sv.size(); ++i) CHECK(sv[i] <= 1e-10 * sv[0]);
}

TEST_CASE("generate emits exactly one token when capped") {
  Tokenizer tok(tiny_words());
  LmConfig cfg;
  cfg.dim = 16;
  TinyLM lm(tok.vocab_size(), cfg);
  auto out = generate(lm, prefix_blocks(16, 11), {258, 259}, 1);
  CHECK(out.size() <= 1);
  CHECK_THROWS_AS(generate(lm, prefix_blocks(16, 11), {258}, 0), ConfigError);
}

TEST_CASE("greedy generation is deterministic") {
  Tokenizer tok(tiny_words());
  LmConfig cfg;
  cfg.dim = 16;
  TinyLM a(tok.vocab_size(), cfg), b(tok.vocab_size(), cfg);
  auto blocks = prefix_blocks(16, 12);
  auto ga = generate(a, blocks, {258, 260}, 8);
  auto gb = generate(b, blocks, {258, 260}, 8);
  CHECK(ga == gb);
}

TEST_CASE("a model overfit to one target reproduces it exactly") {
  Tokenizer tok(tiny_words());
  LmConfig cfg;
  cfg.dim = 32;
  cfg.blocks = 2;
  cfg.max_seq = 96;
  TinyLM lm(tok.vocab_size(), cfg);
  auto blocks = prefix_blocks(32, 13);
  std::vector<int> prompt = tok.encode("the scene shows");
  std::vector<int> target = tok.encode("the person feels happy", true);

  ParamList params;
  lm.register_base_params("lm", params);
  AdamW opt({.lr = 3e-3, .weight_decay = 0.0});
  double nll = 1e9;
  for (int step = 0; step < 400 && nll > 1e-3; ++step) {
    zero_grads(params);
    AssembledSequence seq = assemble(lm, blocks, prompt, target);
    Tensor loss = mle_loss(lm, seq);
    nll = loss.at(0);
    backward(loss);
    opt.step(params, "lm");
  }
  CHECK(nll < 1e-2);
  auto out = generate(lm, blocks, prompt, 16);
  std::vector<int> want(target.begin(), target.end() - 1);  // eos terminates decoding
  CHECK(out == want);
}

TEST_CASE("32-sample corpus overfits below 0.1 nats within 2000 steps") {
  Tokenizer tok(tiny_words());
  LmConfig cfg;
  cfg.dim = 32;
  cfg.blocks = 2;
  cfg.max_seq = 48;
  TinyLM lm(tok.vocab_size(), cfg);

  Rng rng(14);
  std::vector<std::pair<std::vector<int>, std::vector<int>>> corpus;
  std::vector<std::string> lexicon = tiny_words();
  for (int i = 0; i < 32; ++i) {
    std::string prompt, target;
    for (int w = 0; w < 3; ++w)
      prompt += (w ? " " : "") + lexicon[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(lexicon.size())))];
    for (int w = 0; w < 4; ++w)
      target += (w ? " " : "") + lexicon[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(lexicon.size())))];
    corpus.emplace_back(tok.encode(prompt), tok.encode(target, true));
  }
  std::vector<TokenBlock> dummy_prefix = {{Stream::Visual, Tensor::zeros({1, 32})}};
  ParamList params;
  lm.register_base_params("lm", params);
  AdamW opt({.lr = 3e-3, .weight_decay = 0.0});

  double mean_nll = 1e9;
  int steps = 0;
  while (steps < 2000 && mean_nll > 0.09) {
    double total = 0.0;
    zero_grads(params);
    for (const auto& [p, t] : corpus) {
      AssembledSequence seq = assemble(lm, dummy_prefix, p, t);
      Tensor loss = mle_loss(lm, seq);
      total += loss.at(0);
      backward(ops::scale(loss, 1.0 / 32.0));
    }
    opt.step(params, "lm");
    mean_nll = total / 32.0;
    ++steps;
  }
  INFO("steps used: ", steps, " final nll: ", mean_nll);
  CHECK(mean_nll < 0.1);
}
