#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "afx/runner.hpp"

using namespace afx;

namespace {

RunConfig load_config(const std::string& path, long seed, long scale, const std::string& out_dir) {
  RunConfig cfg;
  if (!path.empty()) cfg.apply_file(path);
  if (seed >= 0) cfg.set("run.seed", std::to_string(seed));
  if (scale >= 1) cfg.set("curriculum.scale", std::to_string(scale));
  if (!out_dir.empty()) cfg.set("run.out_dir", out_dir);
  return cfg;
}

std::vector<TaskKind> parse_tasks(const std::string& csv) {
  std::vector<TaskKind> tasks;
  std::string cur;
  auto flush = [&]() {
    if (!cur.empty()) tasks.push_back(task_from_name(cur));
    cur.clear();
  };
  for (char c : csv) {
    if (c == ',')
      flush();
    else
      cur.push_back(c);
  }
  flush();
  if (tasks.empty()) throw ConfigError("no tasks given");
  return tasks;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale multimodal affective LM: training, evaluation and verification"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint, tasks_csv = "mer,ov_mer,mir,eri,erg";
  std::string task_name_arg = "mer", report_path;
  long seed = -1, scale = 0;
  int count = 10, gate_samples = 10;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "config file (key = value lines)");
    sub->add_option("--seed", seed, "override run.seed");
    sub->add_option("--scale", scale, "override curriculum.scale");
  };

  CLI::App* train = app.add_subcommand("train", "run the configured curriculum end to end");
  add_common(train);
  train->add_option("--out", out_dir, "override run.out_dir");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on seeded synthetic tasks");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "checkpoint to load")->required();
  eval->add_option("--tasks", tasks_csv, "comma-separated task list");
  eval->add_option("--report", report_path, "write the JSONL report here as well");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  add_common(gradcheck);

  CLI::App* trace = app.add_subcommand("trace-schedule", "print the golden schedule trace");
  add_common(trace);

  CLI::App* gates = app.add_subcommand("inspect-gates", "dump per-sample fusion gate weights");
  add_common(gates);
  gates->add_option("--checkpoint", checkpoint, "checkpoint to load (optional)");
  gates->add_option("--samples", gate_samples, "number of probe samples");

  CLI::App* sample = app.add_subcommand("sample", "dump a synthetic task corpus as JSONL");
  add_common(sample);
  sample->add_option("--task", task_name_arg, "task name");
  sample->add_option("-n,--count", count, "number of samples");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = load_config(config_path, seed, scale, out_dir);
    if (train->parsed()) {
      TrainResult res = cmd_train(cfg);
      std::cout << "checkpoint: " << res.checkpoint_path << "\n"
                << "trace:      " << res.trace_path << "\n"
                << "losses:     " << res.losses_path << "\n"
                << "config:     " << res.config_path << "\n";
    } else if (eval->parsed()) {
      std::vector<EvalRow> rows = cmd_eval(cfg, checkpoint, parse_tasks(tasks_csv), std::cout);
      if (!report_path.empty()) {
        std::ofstream f(report_path);
        f << eval_rows_to_jsonl(rows);
      }
    } else if (gradcheck->parsed()) {
      int failures = cmd_gradcheck(cfg.getu("run.seed"), std::cout);
      if (failures > 0) return 3;
    } else if (trace->parsed()) {
      cmd_trace_schedule(cfg, std::cout);
    } else if (gates->parsed()) {
      cmd_inspect_gates(cfg, checkpoint, gate_samples, std::cout);
    } else if (sample->parsed()) {
      cmd_sample(cfg, task_from_name(task_name_arg), count, cfg.getu("run.seed"), std::cout);
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
