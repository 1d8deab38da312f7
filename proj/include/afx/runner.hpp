#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "afx/config.hpp"
#include "afx/curriculum.hpp"
#include "afx/metrics.hpp"
#include "afx/model.hpp"

namespace afx {

struct TrainResult {
  std::string out_dir;
  std::string checkpoint_path;
  std::string trace_path;
  std::string losses_path;
  std::string config_path;
};

// Runs the configured curriculum end to end and writes checkpoint, trace
// JSONL, per-step loss JSONL and the resolved config echo into run.out_dir.
// A caller-provided model is trained in place (and still checkpointed);
// hooks observe phase boundaries; trace/loss copies are returned on request.
TrainResult cmd_train(const RunConfig& cfg, MultimodalLm* model = nullptr,
                      const TrainHooks* hooks = nullptr,
                      std::vector<TraceRecord>* trace_out = nullptr,
                      std::vector<LossRecord>* losses_out = nullptr);

// Mean loss over the final `window` records of one phase.
double mean_phase_loss(const std::vector<LossRecord>& losses, const std::string& phase_id,
                       int window);

std::string trace_to_jsonl(const std::vector<TraceRecord>& trace);
std::string losses_to_jsonl(const std::vector<LossRecord>& losses);

// Golden schedule trace without running the model.
void cmd_trace_schedule(const RunConfig& cfg, std::ostream& out);

struct EvalRow {
  std::string task;
  std::string metric;
  double value = 0.0;
  int n_records = 0;
};

// Seeded evaluation corpus per task, greedy inference, metric report.
std::vector<EvalRow> evaluate_model(const MultimodalLm& model, const std::vector<TaskKind>& tasks,
                                    int samples_per_task, std::uint64_t seed, int max_new_tokens);
std::vector<EvalRow> cmd_eval(const RunConfig& cfg, const std::string& checkpoint,
                              const std::vector<TaskKind>& tasks, std::ostream& report_out);
std::string eval_rows_to_jsonl(const std::vector<EvalRow>& rows);

// Known label words found in decoded output, in order, deduplicated.
std::vector<std::string> extract_labels(const std::vector<std::string>& words,
                                        const std::vector<std::string>& space, int max_count);

// Finite-difference verification across every differentiable module;
// prints one row per check, returns the number of failures.
int cmd_gradcheck(std::uint64_t seed, std::ostream& out);

// Per-sample gate weights as JSONL {sample_id, task, position, g1..}.
void cmd_inspect_gates(const RunConfig& cfg, const std::string& checkpoint, int samples,
                       std::ostream& out);

// Synthetic corpus dump as JSONL.
void cmd_sample(const RunConfig& cfg, TaskKind task, int n, std::uint64_t seed, std::ostream& out);

}  // namespace afx
