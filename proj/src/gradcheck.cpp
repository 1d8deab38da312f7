#include "afx/gradcheck.hpp"

#include <cmath>

#include "afx/fusion.hpp"
#include "afx/lm.hpp"
#include "afx/ops.hpp"
#include "afx/projection.hpp"

namespace afx {

double finite_diff_max_rel_error(const std::function<Tensor()>& loss_fn,
                                 const std::vector<Tensor>& wrt, double step) {
  for (const Tensor& t : wrt) const_cast<Tensor&>(t).zero_grad();
  Tensor loss = loss_fn();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(wrt.size());
  for (const Tensor& t : wrt) analytic.push_back(t.grad_to_doubles());

  double worst = 0.0;
  for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
    Tensor t = wrt[ti];
    for (std::size_t i = 0; i < t.numel(); ++i) {
      double orig = t.at(i);
      t.set(i, orig + step);
      double fp = loss_fn().at(0);
      t.set(i, orig - step);
      double fm = loss_fn().at(0);
      t.set(i, orig);
      double num = (fp - fm) / (2.0 * step);
      double ana = analytic[ti][i];
      double denom = std::max(std::abs(num), std::abs(ana));
      double err = denom < 1e-6 ? std::abs(num - ana) : std::abs(num - ana) / denom;
      if (err > worst) worst = err;
    }
  }
  return worst;
}

namespace {

std::vector<Tensor> with_params(std::vector<Tensor> inputs, const ParamList& params) {
  for (const NamedParam& p : params) inputs.push_back(p.tensor);
  return inputs;
}

Tensor fixed_probe(std::vector<int> shape, Rng& rng) {
  return Tensor::randn(std::move(shape), rng, 1.0, DType::F64);
}

Tensor probe_sum(const Tensor& out, const Tensor& probe) {
  return ops::sum_all(ops::mul(out, probe));
}

}  // namespace

std::vector<GradCheckReport> run_standard_gradchecks(std::uint64_t seed, double tolerance) {
  std::vector<GradCheckReport> reports;
  Rng rng(seed);
  auto add = [&](const std::string& name, const std::function<Tensor()>& loss_fn,
                 const std::vector<Tensor>& wrt) {
    GradCheckReport r;
    r.name = name;
    r.max_rel_err = finite_diff_max_rel_error(loss_fn, wrt);
    r.pass = r.max_rel_err < tolerance;
    reports.push_back(r);
  };

  {
    Tensor a = Tensor::randn({4, 5}, rng, 1.0, DType::F64, true);
    Tensor b = Tensor::randn({5, 3}, rng, 1.0, DType::F64, true);
    Tensor probe = fixed_probe({4, 3}, rng);
    add("matmul", [&]() { return probe_sum(ops::matmul(a, b), probe); }, {a, b});
  }
  {
    Tensor x = Tensor::randn({3, 6}, rng, 1.5, DType::F64, true);
    Tensor probe = fixed_probe({3, 6}, rng);
    add("softmax", [&]() { return probe_sum(ops::softmax(x, 1), probe); }, {x});
  }
  {
    Tensor x = Tensor::randn({2, 7}, rng, 1.0, DType::F64, true);
    Tensor probe = fixed_probe({2, 7}, rng);
    add("gelu", [&]() { return probe_sum(ops::gelu(x), probe); }, {x});
  }
  {
    Tensor x = Tensor::randn({4, 6}, rng, 1.0, DType::F64, true);
    Tensor g = Tensor::randn({6}, rng, 0.3, DType::F64, true);
    Tensor b = Tensor::randn({6}, rng, 0.3, DType::F64, true);
    Tensor probe = fixed_probe({4, 6}, rng);
    add("layer_norm", [&]() { return probe_sum(ops::layer_norm(x, g, b), probe); }, {x, g, b});
  }
  {
    Tensor q = Tensor::randn({4, 8}, rng, 0.8, DType::F64, true);
    Tensor k = Tensor::randn({6, 8}, rng, 0.8, DType::F64, true);
    Tensor v = Tensor::randn({6, 8}, rng, 0.8, DType::F64, true);
    Tensor probe = fixed_probe({4, 8}, rng);
    add("scaled_dot_attention", [&]() { return probe_sum(ops::attention(q, k, v, 2), probe); },
        {q, k, v});
  }
  {
    Tensor logits = Tensor::randn({5, 9}, rng, 1.0, DType::F64, true);
    std::vector<int> targets = {0, 3, 8, 3, 1};
    add("cross_entropy", [&]() { return ops::cross_entropy_mean(logits, targets); }, {logits});
  }
  {
    QFormer qf(3, 8, 10, 2, Rng(seed).fork(10), DType::F64);
    ParamList ps;
    qf.register_params("qf", ps);
    Tensor feats = Tensor::randn({5, 10}, rng, 1.0, DType::F64, true);
    Tensor probe = fixed_probe({3, 8}, rng);
    add("qformer_resample", [&]() { return probe_sum(qf.forward(feats), probe); },
        with_params({feats}, ps));
  }
  {
    TemporalModeling tm(4, 8, 2, Rng(seed).fork(11), DType::F64);
    ParamList ps;
    tm.register_params("tm", ps);
    Tensor ef = Tensor::randn({6, 8}, rng, 1.0, DType::F64, true);
    Tensor probe = fixed_probe({4, 8}, rng);
    add("temporal_modeling", [&]() { return probe_sum(tm.forward(ef), probe); },
        with_params({ef}, ps));
  }
  {
    Adapter ad(6, 8, Rng(seed).fork(12), DType::F64);
    ParamList ps;
    ad.register_params("ad", ps);
    Tensor x = Tensor::randn({4, 6}, rng, 1.0, DType::F64, true);
    Tensor probe = fixed_probe({4, 8}, rng);
    add("adapter", [&]() { return probe_sum(ad.forward(x), probe); }, with_params({x}, ps));
  }
  {
    FusionExpert ex(1, 8, 8, 8, 2, Rng(seed).fork(13), DType::F64);
    ParamList ps;
    ex.register_params("ex", ps);
    Tensor sp = Tensor::randn({4, 8}, rng, 1.0, DType::F64, true);
    Tensor vi = Tensor::randn({6, 8}, rng, 1.0, DType::F64, true);
    Tensor probe = fixed_probe({4, 8}, rng);
    add("fusion_expert", [&]() { return probe_sum(ex.forward(sp, vi), probe); },
        with_params({sp, vi}, ps));
  }
  {
    FusionConfig fcfg;
    fcfg.dim = 6;
    fcfg.heads = 2;
    fcfg.seed = seed + 14;
    FusionEncoder enc(fcfg, {1, 2, 3}, {1, 2, 3}, 4, 4, 6, 6, DType::F64);
    ParamList gate_ps;
    enc.gate().register_params("gate", gate_ps);
    std::vector<Tensor> outs;
    for (int i = 0; i < 3; ++i) outs.push_back(Tensor::randn({3, 6}, rng, 1.0, DType::F64, true));
    Tensor probe = fixed_probe({3, 6}, rng);
    add("gate_and_fuse", [&]() { return probe_sum(enc.gate_and_fuse(outs).fused, probe); },
        with_params({outs[0], outs[1], outs[2]}, gate_ps));
  }
  {
    FusionConfig fcfg;
    fcfg.dim = 6;
    fcfg.heads = 2;
    fcfg.seed = seed + 15;
    FusionEncoder enc(fcfg, {2, 3, 4}, {2, 3, 4}, 4, 4, 6, 6, DType::F64);
    ParamList ps;
    enc.register_params("fusion", ps);
    FeatureStack ss, vs;
    ss.stream = Stream::Speech;
    vs.stream = Stream::Visual;
    for (int i = 0; i < 4; ++i) {
      ss.layers.push_back(Tensor::randn({3, 6}, rng, 1.0, DType::F64));
      vs.layers.push_back(Tensor::randn({4, 6}, rng, 1.0, DType::F64));
    }
    Tensor probe = fixed_probe({3, 6}, rng);
    add("fusion_forward", [&]() { return probe_sum(enc.forward(ss, vs).fused, probe); },
        with_params({}, ps));
  }
  {
    LmConfig lcfg;
    lcfg.dim = 8;
    lcfg.blocks = 2;
    lcfg.heads = 2;
    lcfg.ffn_mult = 2;
    lcfg.max_seq = 24;
    lcfg.seed = seed + 16;
    TinyLM lm(32, lcfg, DType::F64);
    lm.attach_lora({.rank = 4, .alpha = 2.0, .seed = seed + 17});
    ParamList lora;
    lm.register_lora_params("lora", lora);
    Tensor prefix = Tensor::randn({3, 8}, rng, 0.5, DType::F64, true);
    std::vector<TokenBlock> blocks = {{Stream::Visual, prefix}};
    std::vector<int> prompt = {5, 9};
    std::vector<int> target = {11, 3, 1};
    add("lora_lm_mle",
        [&]() {
          AssembledSequence seq = assemble(lm, blocks, prompt, target);
          return mle_loss(lm, seq);
        },
        with_params({prefix}, lora));
  }
  return reports;
}

}  // namespace afx
