#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "afx/encoders.hpp"
#include "afx/rng.hpp"

namespace afx {

enum class TaskKind { Mer, OvMer, Mir, Eri, Erg, Msa };
const char* task_name(TaskKind t);
TaskKind task_from_name(const std::string& name);

// Bracketed instruction prefix routing task behavior.
std::string task_identifier(TaskKind t);

const std::vector<std::string>& mer_labels();   // 7 basic emotions
const std::vector<std::string>& ov_labels();    // 20-word open vocabulary
const std::vector<std::string>& mir_labels();   // 10 intents
const std::vector<std::string>& msa_labels();   // 3 sentiment polarities
const std::vector<std::string>& eri_scenarios();

// Every word the generators can emit; feeds the tokenizer vocabulary.
std::vector<std::string> vocabulary_inventory();

struct GenConfig {
  int frames = 8;
  int frame_size = 8;  // square frames, 3 channels
  int audio_steps = 20;
  int audio_dim = 40;
  int max_turns = 3;
  bool supervise_think = true;
};

struct TaskSample {
  TaskKind task = TaskKind::Mer;
  std::string identifier;
  VideoClip video;
  AudioClip audio;
  std::string prompt;
  std::string target;
  std::vector<std::string> gold_labels;
  std::string source_tag;
  std::uint64_t sample_id = 0;
};

// Deterministic label-conditioned sample; the same (task, rng seed, config)
// always produces identical bytes.
TaskSample generate_sample(TaskKind task, Rng rng, const GenConfig& cfg,
                           const std::string& source_tag = "");

// The instruction template for a sample's task with candidates substituted.
std::string format_instruction(const TaskSample& sample);

struct DialogueTurn {
  std::string user;
  std::string reply;
};

struct Dialogue {
  std::string scenario;
  std::string emotion;
  std::vector<DialogueTurn> turns;
};

struct DialogueItem {
  std::vector<DialogueTurn> history;  // strictly precedes the current turn
  std::string current_query;
  std::string target_reply;
};

// One training item per turn; modality payloads attach only to the current
// query, which is the final user utterance of each item.
std::vector<DialogueItem> restructure_dialogue(const Dialogue& dialogue);

// Label-conditioned modality payloads shared by all generators.
VideoClip conditioned_video(const std::vector<std::string>& labels, Rng& rng, const GenConfig& cfg);
AudioClip conditioned_audio(const std::vector<std::string>& labels, Rng& rng, const GenConfig& cfg);

// Weighted mixture over the five trainable tasks, integer weights.
struct Mixture {
  std::array<long, 5> weights{};  // MER, OV-MER, MIR, ERI, ERG
  static Mixture defaults() { return {{18, 28, 5, 31, 18}}; }
  static Mixture single(TaskKind t);
  static Mixture from_weights(const std::vector<int>& w);
  std::array<double, 5> probs() const;
  long total() const;
};

TaskKind sample_task(const Mixture& mixture, Rng& rng);

}  // namespace afx
