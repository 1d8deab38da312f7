#include "afx/runner.hpp"

#include "afx/gradcheck.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>

#include "json.hpp"

namespace afx {

using nlohmann::json;

namespace {

json trace_record_json(const TraceRecord& r) {
  return json{{"global_step", r.global_step}, {"phase", r.phase},   {"lr", r.lr},
              {"groups", r.groups},           {"task", task_name(r.task)}, {"source", r.source}};
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + path + "' for writing");
  f << content;
}

}  // namespace

std::string trace_to_jsonl(const std::vector<TraceRecord>& trace) {
  std::string out;
  for (const TraceRecord& r : trace) out += trace_record_json(r).dump() + "\n";
  return out;
}

std::string losses_to_jsonl(const std::vector<LossRecord>& losses) {
  std::string out;
  for (const LossRecord& r : losses)
    out += json{{"step", r.step},
                {"phase", r.phase},
                {"task", task_name(r.task)},
                {"loss", r.loss},
                {"lr", r.lr}}
               .dump() +
           "\n";
  return out;
}

TrainResult cmd_train(const RunConfig& cfg, MultimodalLm* model, const TrainHooks* hooks,
                      std::vector<TraceRecord>* trace_out, std::vector<LossRecord>* losses_out) {
  TrainResult result;
  result.out_dir = cfg.gets("run.out_dir");
  std::filesystem::create_directories(result.out_dir);
  result.config_path = result.out_dir + "/config.resolved.cfg";
  write_file(result.config_path, cfg.echo_string());

  std::unique_ptr<MultimodalLm> owned;
  if (!model) {
    owned = std::make_unique<MultimodalLm>(cfg);
    model = owned.get();
  }
  Trainer trainer(*model, cfg);
  if (hooks) trainer.set_hooks(*hooks);
  trainer.run();

  result.checkpoint_path = result.out_dir + "/checkpoint.afx";
  model->save(result.checkpoint_path);
  result.trace_path = result.out_dir + "/trace.jsonl";
  write_file(result.trace_path, trace_to_jsonl(trainer.trace()));
  result.losses_path = result.out_dir + "/losses.jsonl";
  write_file(result.losses_path, losses_to_jsonl(trainer.losses()));
  if (trace_out) *trace_out = trainer.trace();
  if (losses_out) *losses_out = trainer.losses();
  return result;
}

double mean_phase_loss(const std::vector<LossRecord>& losses, const std::string& phase_id,
                       int window) {
  std::vector<double> vals;
  for (const LossRecord& r : losses)
    if (r.phase == phase_id) vals.push_back(r.loss);
  if (vals.empty()) throw ConfigError("no loss records for phase " + phase_id);
  std::size_t take = std::min<std::size_t>(vals.size(), static_cast<std::size_t>(window));
  double sum = 0.0;
  for (std::size_t i = vals.size() - take; i < vals.size(); ++i) sum += vals[i];
  return sum / static_cast<double>(take);
}

void cmd_trace_schedule(const RunConfig& cfg, std::ostream& out) {
  CurriculumState state(build_schedule(cfg), cfg.getu("run.seed"));
  while (!state.done()) out << trace_record_json(state.advance().record).dump() << "\n";
}

std::vector<std::string> extract_labels(const std::vector<std::string>& words,
                                        const std::vector<std::string>& space, int max_count) {
  std::vector<std::string> found;
  std::set<std::string> seen;
  for (const std::string& w : words) {
    for (const std::string& label : space) {
      if (w == label && !seen.count(w)) {
        found.push_back(w);
        seen.insert(w);
        break;
      }
    }
    if (static_cast<int>(found.size()) >= max_count) break;
  }
  return found;
}

namespace {

struct TaskEval {
  std::vector<PredictionRecord> records;
  std::vector<std::string> replies;  // generated text per sample
};

TaskEval eval_task(const MultimodalLm& model, TaskKind task, int samples, std::uint64_t seed,
                   int max_new_tokens) {
  TaskEval ev;
  const std::vector<std::string>* space = nullptr;
  switch (task) {
    case TaskKind::Mer: space = &mer_labels(); break;
    case TaskKind::Msa: space = &msa_labels(); break;
    case TaskKind::Mir: space = &mir_labels(); break;
    case TaskKind::OvMer: space = &ov_labels(); break;
    case TaskKind::Eri:
    case TaskKind::Erg: space = &mer_labels(); break;
  }
  for (int i = 0; i < samples; ++i) {
    Rng rng = Rng(seed).fork(0xE7A1 + static_cast<std::uint64_t>(i) * 7919 +
                             static_cast<std::uint64_t>(task));
    TaskSample s = generate_sample(task, rng, model.gen_config(), "eval");
    std::vector<int> out_ids = model.generate_reply(s, max_new_tokens);
    std::vector<std::string> words = model.tokenizer().decode_words(out_ids);
    int max_labels = task == TaskKind::OvMer ? 3 : 1;
    PredictionRecord rec;
    rec.sample_id = task_name(task) + std::to_string(i);
    rec.predicted = extract_labels(words, *space, max_labels);
    rec.gold = task == TaskKind::Eri || task == TaskKind::Erg
                   ? std::vector<std::string>{s.gold_labels[0]}  // the emotion, not the scenario
                   : s.gold_labels;
    rec.generated_text = model.tokenizer().decode(out_ids);
    ev.records.push_back(rec);
    ev.replies.push_back(rec.generated_text);
  }
  return ev;
}

}  // namespace

std::vector<EvalRow> evaluate_model(const MultimodalLm& model, const std::vector<TaskKind>& tasks,
                                    int samples_per_task, std::uint64_t seed, int max_new_tokens) {
  std::vector<EvalRow> rows;
  EmotionWheel wheel = EmotionWheel::toy();
  for (TaskKind task : tasks) {
    TaskEval ev = eval_task(model, task, samples_per_task, seed, max_new_tokens);
    int n = static_cast<int>(ev.records.size());
    auto add = [&](const std::string& metric, double value) {
      rows.push_back({task_name(task), metric, value, n});
    };
    switch (task) {
      case TaskKind::Mer:
        add("hit_rate", hit_rate(ev.records, wheel));
        add("waf", waf(ev.records, mer_labels()));
        break;
      case TaskKind::Msa: {
        ClassificationScores s = classification_suite(ev.records, msa_labels());
        add("waf", s.wf1);
        add("acc", s.acc);
        break;
      }
      case TaskKind::OvMer:
        add("hit_rate", hit_rate(ev.records, wheel));
        break;
      case TaskKind::Mir: {
        ClassificationScores s = classification_suite(ev.records, mir_labels());
        add("acc", s.acc);
        add("wf1", s.wf1);
        add("wp", s.wp);
        break;
      }
      case TaskKind::Eri:
        add("hit_rate", hit_rate(ev.records, wheel));
        break;
      case TaskKind::Erg: {
        add("hit_rate", hit_rate(ev.records, wheel));
        add("dist1", dist_n(ev.replies, 1));
        add("dist2", dist_n(ev.replies, 2));
        break;
      }
    }
  }
  return rows;
}

std::string eval_rows_to_jsonl(const std::vector<EvalRow>& rows) {
  std::string out;
  for (const EvalRow& r : rows)
    out += json{{"metric", r.metric}, {"task", r.task}, {"value", r.value}, {"n_records", r.n_records}}
               .dump() +
           "\n";
  return out;
}

std::vector<EvalRow> cmd_eval(const RunConfig& cfg, const std::string& checkpoint,
                              const std::vector<TaskKind>& tasks, std::ostream& report_out) {
  MultimodalLm model(cfg);
  model.load(checkpoint);
  std::vector<EvalRow> rows = evaluate_model(model, tasks, cfg.geti("eval.samples"),
                                             cfg.getu("run.seed") + 0x5EED,
                                             cfg.geti("eval.max_new_tokens"));
  report_out << eval_rows_to_jsonl(rows);
  return rows;
}

int cmd_gradcheck(std::uint64_t seed, std::ostream& out) {
  std::vector<GradCheckReport> reports = run_standard_gradchecks(seed);
  int failures = 0;
  for (const GradCheckReport& r : reports) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-24s max_rel_err %.3e  %s", r.name.c_str(), r.max_rel_err,
                  r.pass ? "pass" : "FAIL");
    out << line << "\n";
    if (!r.pass) ++failures;
  }
  out << (failures == 0 ? "gradcheck: all checks passed" : "gradcheck: FAILURES present") << "\n";
  return failures;
}

void cmd_inspect_gates(const RunConfig& cfg, const std::string& checkpoint, int samples,
                       std::ostream& out) {
  MultimodalLm model(cfg);
  if (!checkpoint.empty()) model.load(checkpoint);
  if (model.fusion_mode() == FusionMode::None || model.fusion_mode() == FusionMode::AttentionFusion)
    throw ConfigError("inspect-gates: fusion mode '" +
                      std::string(fusion_mode_name(model.fusion_mode())) + "' has no gate");
  static const TaskKind kProbe[5] = {TaskKind::Mer, TaskKind::OvMer, TaskKind::Mir, TaskKind::Eri,
                                     TaskKind::Erg};
  for (int i = 0; i < samples; ++i) {
    TaskKind task = kProbe[i % 5];
    Rng rng = Rng(cfg.getu("run.seed")).fork(0x6A7E + static_cast<std::uint64_t>(i));
    TaskSample s = generate_sample(task, rng, model.gen_config(), "gate_probe");
    Tensor w = model.gate_weights_for(s);
    for (int pos = 0; pos < w.dim(0); ++pos) {
      json row{{"sample_id", static_cast<long>(i)}, {"task", task_name(task)}, {"position", pos}};
      for (int e = 0; e < w.dim(1); ++e)
        row["g" + std::to_string(e + 1)] = w.at2(pos, e);
      out << row.dump() << "\n";
    }
  }
}

void cmd_sample(const RunConfig& cfg, TaskKind task, int n, std::uint64_t seed, std::ostream& out) {
  GenConfig gen;
  gen.frames = cfg.geti("video.frames");
  gen.frame_size = cfg.geti("video.size");
  gen.audio_steps = cfg.geti("audio.steps");
  gen.audio_dim = cfg.geti("audio.dim");
  gen.max_turns = cfg.geti("erg.max_turns");
  for (int i = 0; i < n; ++i) {
    TaskSample s = generate_sample(task, Rng(seed).fork(static_cast<std::uint64_t>(i)), gen, "dump");
    out << json{{"task", task_name(s.task)},
                {"identifier", s.identifier},
                {"prompt", s.prompt},
                {"target", s.target},
                {"gold_labels", s.gold_labels},
                {"video_frames", s.video.frames.dim(0)},
                {"audio_steps", s.audio.features.dim(0)},
                {"sample_id", s.sample_id}}
               .dump()
        << "\n";
  }
}

}  // namespace afx
