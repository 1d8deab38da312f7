#pragma once

#include <functional>
#include <string>
#include <vector>

#include "afx/config.hpp"
#include "afx/model.hpp"
#include "afx/optim.hpp"
#include "afx/tasks.hpp"

namespace afx {

enum class CurriculumMode { Standard, ReverseP2e, JointTraining };
CurriculumMode curriculum_mode_from_name(const std::string& name);
const char* curriculum_mode_name(CurriculumMode m);

struct PhaseSpec {
  std::string id;  // "1a", "1b", "2", "3", "joint"
  std::vector<ParamGroup> trainable;
  double lr = 0.0;
  long steps = 0;
  Mixture mixture;
  std::string source_tag;
};

// Paper-default standard schedule with budgets divided by `scale`
// (ceiling division, so every phase keeps at least one step).
std::vector<PhaseSpec> build_default_schedule(long scale);

// Schedule for the configured mode with per-phase lr/step overrides applied.
std::vector<PhaseSpec> build_schedule(const RunConfig& cfg);

struct TraceRecord {
  long global_step = 0;
  std::string phase;
  double lr = 0.0;
  std::vector<std::string> groups;
  TaskKind task = TaskKind::Mer;
  std::string source;
};

struct StepInfo {
  TraceRecord record;
  bool phase_start = false;
  bool final_step_of_phase = false;
  int phase_index = 0;
  std::vector<ParamGroup> newly_activated;  // only when phase_start
};

// Walks the schedule one optimizer step at a time. Replaying with the same
// schedule and seed yields an identical trace.
class CurriculumState {
 public:
  CurriculumState(std::vector<PhaseSpec> schedule, std::uint64_t seed);
  bool done() const;
  StepInfo advance();
  const std::vector<PhaseSpec>& schedule() const { return schedule_; }
  long total_steps() const;

 private:
  std::vector<PhaseSpec> schedule_;
  Rng rng_;
  std::uint64_t seed_;
  int phase_idx_ = 0;
  long step_in_phase_ = 0;
  long global_step_ = 0;
};

// One optimizer step over `accum` micro-batches of `batch_size` losses with
// mean reduction; equivalent to a single step on the concatenated batch.
// Returns the mean sample loss.
double accumulated_step(AdamW& opt, const ParamList& step_params, const ParamList& zero_params,
                        int accum, int batch_size,
                        const std::function<Tensor(int micro, int index)>& sample_loss,
                        const std::string& label);

struct LossRecord {
  long step = 0;
  std::string phase;
  TaskKind task = TaskKind::Mer;
  double loss = 0.0;
  double lr = 0.0;
};

struct TrainHooks {
  std::function<void(const PhaseSpec&)> on_phase_start;
  std::function<void(const PhaseSpec&)> on_phase_end;
};

class Trainer {
 public:
  Trainer(MultimodalLm& model, const RunConfig& cfg);

  void set_hooks(TrainHooks hooks) { hooks_ = std::move(hooks); }
  void run();

  const std::vector<TraceRecord>& trace() const { return trace_; }
  const std::vector<LossRecord>& losses() const { return losses_; }
  const std::vector<PhaseSpec>& schedule() const { return schedule_; }

  // Mean NLL over the last `window` optimizer steps of the given phase.
  double mean_phase_loss(const std::string& phase_id, int window) const;

  // Extra steps on a fixed corpus with the final phase's trainable groups.
  // Stops early once the running corpus NLL falls below target_nll; returns
  // the final mean NLL over the corpus.
  double overfit(const std::vector<TaskSample>& corpus, int max_steps, double lr,
                 double target_nll);

 private:
  ParamList phase_params(const PhaseSpec& phase) const;

  MultimodalLm& model_;
  RunConfig cfg_;
  std::vector<PhaseSpec> schedule_;
  CurriculumState state_;
  AdamW opt_;
  TrainHooks hooks_;
  std::vector<TraceRecord> trace_;
  std::vector<LossRecord> losses_;
  GenConfig gen_;
  std::uint64_t seed_;
  int batch_size_;
  int accum_;
};

}  // namespace afx
