#include "afx/curriculum.hpp"

#include <algorithm>
#include <set>

#include "afx/ops.hpp"

namespace afx {

CurriculumMode curriculum_mode_from_name(const std::string& name) {
  if (name == "standard") return CurriculumMode::Standard;
  if (name == "reverse_p2e") return CurriculumMode::ReverseP2e;
  if (name == "joint_training") return CurriculumMode::JointTraining;
  throw ConfigError("unknown curriculum mode '" + name + "'");
}

const char* curriculum_mode_name(CurriculumMode m) {
  switch (m) {
    case CurriculumMode::Standard: return "standard";
    case CurriculumMode::ReverseP2e: return "reverse_p2e";
    case CurriculumMode::JointTraining: return "joint_training";
  }
  return "?";
}

namespace {

long ceil_div(long a, long b) { return (a + b - 1) / b; }

std::vector<ParamGroup> phase2_groups() {
  return {ParamGroup::FusionEncoder, ParamGroup::VisualAdapter, ParamGroup::SpeechAdapter,
          ParamGroup::FaceAdapterTm, ParamGroup::FusionAdapter};
}

std::vector<ParamGroup> phase3_groups() {
  auto g = phase2_groups();
  g.push_back(ParamGroup::Lora);
  return g;
}

PhaseSpec make_phase(std::string id, std::vector<ParamGroup> groups, double lr, long raw_steps,
                     long scale, Mixture mixture, std::string source) {
  if (scale < 1) throw ConfigError("curriculum: scale must be >= 1");
  PhaseSpec p;
  p.id = std::move(id);
  p.trainable = std::move(groups);
  p.lr = lr;
  p.steps = ceil_div(raw_steps, scale);
  p.mixture = mixture;
  p.source_tag = std::move(source);
  if (p.lr <= 0) throw ConfigError("curriculum: phase " + p.id + " learning rate must be positive");
  if (p.steps < 1) throw ConfigError("curriculum: phase " + p.id + " has no steps");
  return p;
}

std::vector<PhaseSpec> standard_phases(long scale, const double lrs[4], const long steps[4],
                                       const Mixture& phase3_mixture) {
  return {
      make_phase("1a", {ParamGroup::VisualAdapter, ParamGroup::FaceAdapterTm}, lrs[0], steps[0],
                 scale, Mixture::single(TaskKind::Mer), "ferv39k_caer"),
      make_phase("1b", {ParamGroup::SpeechAdapter}, lrs[1], steps[1], scale,
                 Mixture::single(TaskKind::Mer), "crema_m3ed"),
      make_phase("2", phase2_groups(), lrs[2], steps[2], scale, Mixture::single(TaskKind::Mir),
                 "mintrec"),
      make_phase("3", phase3_groups(), lrs[3], steps[3], scale, phase3_mixture, "phase3_mix"),
  };
}

}  // namespace

std::vector<PhaseSpec> build_default_schedule(long scale) {
  const double lrs[4] = {3e-4, 3e-4, 1e-5, 8e-6};
  const long steps[4] = {25000, 15000, 5000, 300000};
  return standard_phases(scale, lrs, steps, Mixture::defaults());
}

std::vector<PhaseSpec> build_schedule(const RunConfig& cfg) {
  CurriculumMode mode = curriculum_mode_from_name(cfg.gets("curriculum.mode"));
  long scale = cfg.getl("curriculum.scale");
  Mixture mixture = Mixture::from_weights(cfg.get_ints("curriculum.mixture"));
  const double lrs[4] = {cfg.getd("curriculum.phase1a.lr"), cfg.getd("curriculum.phase1b.lr"),
                         cfg.getd("curriculum.phase2.lr"), cfg.getd("curriculum.phase3.lr")};
  const long steps[4] = {cfg.getl("curriculum.phase1a.steps"), cfg.getl("curriculum.phase1b.steps"),
                         cfg.getl("curriculum.phase2.steps"), cfg.getl("curriculum.phase3.steps")};
  switch (mode) {
    case CurriculumMode::Standard:
      return standard_phases(scale, lrs, steps, mixture);
    case CurriculumMode::ReverseP2e: {
      auto phases = standard_phases(scale, lrs, steps, mixture);
      std::reverse(phases.begin(), phases.end());
      return phases;
    }
    case CurriculumMode::JointTraining: {
      std::vector<ParamGroup> groups = all_groups();
      return {make_phase("joint", groups, cfg.getd("curriculum.joint.lr"),
                         cfg.getl("curriculum.joint.steps"), scale, mixture, "joint_mix")};
    }
  }
  throw ConfigError("unreachable curriculum mode");
}

CurriculumState::CurriculumState(std::vector<PhaseSpec> schedule, std::uint64_t seed)
    : schedule_(std::move(schedule)), rng_(seed), seed_(seed) {
  if (schedule_.empty()) throw ConfigError("curriculum: empty schedule");
}

bool CurriculumState::done() const { return phase_idx_ >= static_cast<int>(schedule_.size()); }

long CurriculumState::total_steps() const {
  long t = 0;
  for (const PhaseSpec& p : schedule_) t += p.steps;
  return t;
}

StepInfo CurriculumState::advance() {
  if (done()) throw ConfigError("curriculum: advancing a completed curriculum");
  const PhaseSpec& phase = schedule_[static_cast<std::size_t>(phase_idx_)];
  StepInfo info;
  info.phase_index = phase_idx_;
  info.phase_start = step_in_phase_ == 0;
  if (info.phase_start) {
    std::set<ParamGroup> prev;
    if (phase_idx_ > 0)
      for (ParamGroup g : schedule_[static_cast<std::size_t>(phase_idx_ - 1)].trainable)
        prev.insert(g);
    for (ParamGroup g : phase.trainable)
      if (!prev.count(g)) info.newly_activated.push_back(g);
  }
  Rng step_rng = Rng(seed_).fork(0x7A5C + static_cast<std::uint64_t>(global_step_));
  info.record.global_step = global_step_;
  info.record.phase = phase.id;
  info.record.lr = phase.lr;
  for (ParamGroup g : phase.trainable) info.record.groups.push_back(group_name(g));
  info.record.task = sample_task(phase.mixture, step_rng);
  info.record.source = phase.source_tag;

  ++global_step_;
  ++step_in_phase_;
  if (step_in_phase_ >= phase.steps) {
    info.final_step_of_phase = true;
    ++phase_idx_;
    step_in_phase_ = 0;
  }
  return info;
}

double accumulated_step(AdamW& opt, const ParamList& step_params, const ParamList& zero_params,
                        int accum, int batch_size,
                        const std::function<Tensor(int micro, int index)>& sample_loss,
                        const std::string& label) {
  if (accum < 1) throw ConfigError("accumulated_step: accum must be >= 1");
  if (batch_size < 1) throw ConfigError("accumulated_step: batch_size must be >= 1");
  zero_grads(zero_params);
  double total = 0.0;
  const double inv = 1.0 / static_cast<double>(accum * batch_size);
  for (int micro = 0; micro < accum; ++micro) {
    for (int b = 0; b < batch_size; ++b) {
      Tensor loss = sample_loss(micro, b);
      total += loss.at(0);
      backward(ops::scale(loss, inv));
    }
  }
  opt.step(step_params, label);
  return total * inv;
}

Trainer::Trainer(MultimodalLm& model, const RunConfig& cfg)
    : model_(model),
      cfg_(cfg),
      schedule_(build_schedule(cfg)),
      state_(schedule_, cfg.getu("run.seed")),
      opt_({.lr = 1e-3,
            .beta1 = cfg.getd("adam.beta1"),
            .beta2 = cfg.getd("adam.beta2"),
            .eps = cfg.getd("adam.eps"),
            .weight_decay = cfg.getd("adam.weight_decay")}),
      gen_(model.gen_config()),
      seed_(cfg.getu("run.seed")),
      batch_size_(cfg.geti("train.batch_size")),
      accum_(cfg.geti("train.accum")) {}

ParamList Trainer::phase_params(const PhaseSpec& phase) const {
  ParamList out;
  for (ParamGroup g : phase.trainable) {
    ParamList gp = model_.group_params(g);
    out.insert(out.end(), gp.begin(), gp.end());
  }
  return out;
}

void Trainer::run() {
  ParamList zero_list = model_.all_params();
  const PhaseSpec* current = nullptr;
  while (!state_.done()) {
    StepInfo info = state_.advance();
    const PhaseSpec& phase = schedule_[static_cast<std::size_t>(info.phase_index)];
    if (info.phase_start) {
      current = &phase;
      for (ParamGroup g : info.newly_activated) opt_.forget(model_.group_params(g));
      opt_.set_lr(phase.lr);
      if (hooks_.on_phase_start) hooks_.on_phase_start(phase);
    }
    ParamList step_params = phase_params(phase);
    long step = info.record.global_step;
    TaskKind task = info.record.task;
    auto sample_loss = [&](int micro, int index) {
      std::uint64_t stream = (static_cast<std::uint64_t>(step) << 16) |
                             (static_cast<std::uint64_t>(micro) << 8) |
                             static_cast<std::uint64_t>(index);
      Rng srng = Rng(seed_).fork(0xDA7A ^ stream);
      TaskSample s = generate_sample(task, srng, gen_, phase.source_tag);
      return model_.sample_loss(s);
    };
    double mean_loss = accumulated_step(opt_, step_params, zero_list, accum_, batch_size_,
                                        sample_loss, phase.id);
    trace_.push_back(info.record);
    losses_.push_back({step, phase.id, task, mean_loss, phase.lr});
    if (info.final_step_of_phase && hooks_.on_phase_end) hooks_.on_phase_end(phase);
    (void)current;
  }
}

double Trainer::mean_phase_loss(const std::string& phase_id, int window) const {
  std::vector<double> vals;
  for (const LossRecord& r : losses_)
    if (r.phase == phase_id) vals.push_back(r.loss);
  if (vals.empty()) throw ConfigError("no loss records for phase " + phase_id);
  std::size_t take = std::min<std::size_t>(vals.size(), static_cast<std::size_t>(window));
  double sum = 0.0;
  for (std::size_t i = vals.size() - take; i < vals.size(); ++i) sum += vals[i];
  return sum / static_cast<double>(take);
}

double Trainer::overfit(const std::vector<TaskSample>& corpus, int max_steps, double lr,
                        double target_nll) {
  if (corpus.empty()) throw ConfigError("overfit: empty corpus");
  AdamW opt({.lr = lr,
             .beta1 = cfg_.getd("adam.beta1"),
             .beta2 = cfg_.getd("adam.beta2"),
             .eps = cfg_.getd("adam.eps"),
             .weight_decay = 0.0});
  ParamList step_params = phase_params(schedule_.back());
  ParamList zero_list = model_.all_params();
  auto corpus_nll = [&]() {
    NoGradGuard ng;
    double sum = 0.0;
    for (const TaskSample& s : corpus) sum += model_.sample_loss(s).at(0);
    return sum / static_cast<double>(corpus.size());
  };
  std::size_t cursor = 0;
  for (int step = 0; step < max_steps; ++step) {
    auto sample_loss = [&](int, int) {
      const TaskSample& s = corpus[cursor];
      cursor = (cursor + 1) % corpus.size();
      return model_.sample_loss(s);
    };
    accumulated_step(opt, step_params, zero_list, 1, batch_size_, sample_loss, "overfit");
    if ((step + 1) % 25 == 0 && corpus_nll() < target_nll) break;
  }
  return corpus_nll();
}

}  // namespace afx
