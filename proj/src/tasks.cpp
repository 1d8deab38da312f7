#include "afx/tasks.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "afx/error.hpp"

namespace afx {

const char* task_name(TaskKind t) {
  switch (t) {
    case TaskKind::Mer: return "mer";
    case TaskKind::OvMer: return "ov_mer";
    case TaskKind::Mir: return "mir";
    case TaskKind::Eri: return "eri";
    case TaskKind::Erg: return "erg";
    case TaskKind::Msa: return "msa";
  }
  return "?";
}

TaskKind task_from_name(const std::string& name) {
  for (TaskKind t : {TaskKind::Mer, TaskKind::OvMer, TaskKind::Mir, TaskKind::Eri, TaskKind::Erg,
                     TaskKind::Msa})
    if (name == task_name(t)) return t;
  throw ConfigError("unknown task '" + name + "'");
}

std::string task_identifier(TaskKind t) {
  switch (t) {
    case TaskKind::Mer: return "[Recognition]";
    case TaskKind::OvMer: return "[Recog_OV]";
    case TaskKind::Mir: return "[Intent]";
    case TaskKind::Eri: return "[Inference]";
    case TaskKind::Erg: return "[Interaction]";
    case TaskKind::Msa: return "[Recognition]";  // evaluation-only sentiment variant
  }
  return "";
}

const std::vector<std::string>& mer_labels() {
  static const std::vector<std::string> v = {"happiness", "sadness", "anger",   "fear",
                                             "disgust",   "surprise", "neutral"};
  return v;
}

const std::vector<std::string>& ov_labels() {
  // seven base emotions plus thirteen nuanced words, all wheel-resolvable
  static const std::vector<std::string> v = {
      "happiness", "sadness", "anger",      "fear",      "disgust", "surprise", "neutral",
      "delight",   "grief",   "sorrow",     "rage",      "resentment", "anxiety", "dread",
      "panic",     "revulsion", "contempt", "amazement", "shock",   "calm"};
  return v;
}

const std::vector<std::string>& mir_labels() {
  static const std::vector<std::string> v = {"gratitude", "apology",   "complaint", "suggestion",
                                             "greeting",  "farewell",  "agreement", "refusal",
                                             "encouragement", "inquiry"};
  return v;
}

const std::vector<std::string>& msa_labels() {
  static const std::vector<std::string> v = {"positive", "negative", "neutral"};
  return v;
}

const std::vector<std::string>& eri_scenarios() {
  static const std::vector<std::string> v = {"exam",    "breakup", "promotion", "accident",
                                             "reunion", "loss",    "argument",  "gift",
                                             "delay",   "victory"};
  return v;
}

namespace {

const std::vector<std::string>& reply_pool(const std::string& emotion) {
  static const std::vector<std::string> upbeat = {
      "that is wonderful news and i am glad for you",
      "you deserve this moment so enjoy it"};
  static const std::vector<std::string> consoling = {
      "i am sorry this happened and i am here for you",
      "that sounds really hard and i am listening"};
  static const std::vector<std::string> steady = {
      "thank you for sharing that with me",
      "i hear you and i am here"};
  if (emotion == "happiness" || emotion == "surprise") return upbeat;
  if (emotion == "neutral") return steady;
  return consoling;
}

std::string response_goal(const std::string& emotion) {
  if (emotion == "fear") return "alleviating anxiety";
  if (emotion == "sadness") return "offering reassurance";
  if (emotion == "happiness" || emotion == "surprise") return "celebrating together";
  if (emotion == "anger" || emotion == "disgust") return "expressing understanding";
  return "offering support";
}

const std::vector<std::string>& user_openers() {
  static const std::vector<std::string> v = {
      "i need to talk about the", "something happened with the", "i keep thinking about the",
      "can we talk about the", "today was all about the"};
  return v;
}

// 64-bit FNV-1a over a label plus a modality tag; directions are fixed world
// facts, independent of run seeds.
std::uint64_t direction_seed(const std::string& label, const char* modality) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : label) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
  for (const char* p = modality; *p; ++p) h = (h ^ static_cast<unsigned char>(*p)) * 1099511628211ULL;
  return h;
}

std::vector<double> sign_direction(const std::string& label, const char* modality, int dim) {
  Rng rng(direction_seed(label, modality));
  std::vector<double> d(static_cast<std::size_t>(dim));
  for (auto& x : d) x = rng.next_u64() & 1 ? 1.0 : -1.0;
  return d;
}

// one direction per label; payload rows cycle through them so every label
// owns its own temporal segment of the clip
std::vector<std::vector<double>> label_directions(const std::vector<std::string>& labels,
                                                  const char* modality, int dim) {
  std::vector<std::vector<double>> dirs;
  dirs.reserve(labels.size());
  for (const std::string& l : labels) dirs.push_back(sign_direction(l, modality, dim));
  return dirs;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

const std::string& pick(const std::vector<std::string>& pool, Rng& rng) {
  return pool[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(pool.size())))];
}

int index_of(const std::vector<std::string>& pool, const std::string& value) {
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (pool[i] == value) return static_cast<int>(i);
  return 0;
}

// Reply and opener variants are deterministic functions of observable context
// so dialogue continuations stay predictable.
const std::string& variant(const std::vector<std::string>& pool, int key) {
  return pool[static_cast<std::size_t>(key % static_cast<int>(pool.size()))];
}

}  // namespace

VideoClip conditioned_video(const std::vector<std::string>& labels, Rng& rng, const GenConfig& cfg) {
  const int pixels = 3 * cfg.frame_size * cfg.frame_size;
  auto dirs = label_directions(labels, "video", pixels);
  Tensor frames = Tensor::zeros({cfg.frames, 3, cfg.frame_size, cfg.frame_size});
  std::size_t idx = 0;
  for (int f = 0; f < cfg.frames; ++f) {
    const auto& dir = dirs[static_cast<std::size_t>(f) % dirs.size()];
    for (int p = 0; p < pixels; ++p) {
      double v = 0.5 + 0.2 * dir[static_cast<std::size_t>(p)] + 0.1 * rng.normal();
      frames.set(idx++, std::clamp(v, 0.0, 1.0));
    }
  }
  return {frames};
}

AudioClip conditioned_audio(const std::vector<std::string>& labels, Rng& rng, const GenConfig& cfg) {
  auto dirs = label_directions(labels, "audio", cfg.audio_dim);
  Tensor feats = Tensor::zeros({cfg.audio_steps, cfg.audio_dim});
  std::size_t idx = 0;
  for (int t = 0; t < cfg.audio_steps; ++t) {
    const auto& dir = dirs[static_cast<std::size_t>(t) % dirs.size()];
    for (int d = 0; d < cfg.audio_dim; ++d)
      feats.set(idx++, 2.0 * dir[static_cast<std::size_t>(d)] + rng.normal());
  }
  return {feats};
}

std::vector<DialogueItem> restructure_dialogue(const Dialogue& dialogue) {
  if (dialogue.turns.empty()) throw ConfigError("restructure_dialogue: empty dialogue");
  std::vector<DialogueItem> items;
  for (std::size_t n = 0; n < dialogue.turns.size(); ++n) {
    DialogueItem item;
    item.history.assign(dialogue.turns.begin(), dialogue.turns.begin() + static_cast<long>(n));
    item.current_query = dialogue.turns[n].user;
    item.target_reply = dialogue.turns[n].reply;
    items.push_back(std::move(item));
  }
  return items;
}

std::string format_instruction(const TaskSample& sample) {
  std::ostringstream os;
  switch (sample.task) {
    case TaskKind::Mer:
      os << "[Recognition] Please select the label that can best describe the person's emotional "
            "state from the provided candidate labels: "
         << join(mer_labels(), " ");
      break;
    case TaskKind::Msa:
      os << "[Recognition] Please select the label that can best describe the person's emotional "
            "state from the provided candidate labels: "
         << join(msa_labels(), " ");
      break;
    case TaskKind::Mir:
      os << "[Intent] Recognize speaker's intention from the provided candidate labels: "
         << join(mir_labels(), " ");
      break;
    case TaskKind::OvMer:
      os << "[Recog_OV] Recognize all the possible emotional states the character might be "
            "feeling in this context .";
      break;
    case TaskKind::Eri:
      os << "[Inference] From the combined evidence of speech, tone, and visual expression, "
            "construct a detailed summary of the subject's emotional journey and final inferred "
            "state .";
      break;
    case TaskKind::Erg:
      os << "[Interaction] You are an empathetic listener, your goal is to understand the user's "
            "emotions and intentions, and respond or comfort them with appropriate language that "
            "helps them feel understood and cared for . Please analyze using Chain of Empathy : "
            "First, Reflect on the event scenarios that arise from the ongoing dialogue . "
            "Secondly, Analyze both the implicit and explicit emotions conveyed by the user . "
            "Thirdly, Infer the underlying reasons for the user's emotions . Fourthly, Determine "
            "the goal of your response in this particular instance, such as alleviating anxiety, "
            "offering reassurance, or expressing understanding .";
      break;
  }
  return os.str();
}

TaskSample generate_sample(TaskKind task, Rng rng, const GenConfig& cfg,
                           const std::string& source_tag) {
  TaskSample s;
  s.task = task;
  s.identifier = task_identifier(task);
  s.source_tag = source_tag;
  s.sample_id = rng.next_u64();

  switch (task) {
    case TaskKind::Mer: {
      s.gold_labels = {pick(mer_labels(), rng)};
      s.target = s.gold_labels[0];
      break;
    }
    case TaskKind::Msa: {
      s.gold_labels = {pick(msa_labels(), rng)};
      s.target = s.gold_labels[0];
      break;
    }
    case TaskKind::Mir: {
      s.gold_labels = {pick(mir_labels(), rng)};
      s.target = s.gold_labels[0];
      break;
    }
    case TaskKind::OvMer: {
      int count = 1 + rng.uniform_int(3);
      std::set<std::string> chosen;
      while (static_cast<int>(chosen.size()) < count) chosen.insert(pick(ov_labels(), rng));
      s.gold_labels.assign(chosen.begin(), chosen.end());
      s.target = join(s.gold_labels, " ");
      break;
    }
    case TaskKind::Eri: {
      std::string emotion = pick(mer_labels(), rng);
      std::string scenario = pick(eri_scenarios(), rng);
      s.gold_labels = {emotion, scenario};
      s.target = "the person feels " + emotion + " because of the " + scenario;
      break;
    }
    case TaskKind::Erg: {
      std::string emotion = pick(mer_labels(), rng);
      std::string scenario = pick(eri_scenarios(), rng);
      Dialogue d;
      d.emotion = emotion;
      d.scenario = scenario;
      int turns = 1 + rng.uniform_int(cfg.max_turns);
      int sc = index_of(eri_scenarios(), scenario);
      for (int t = 0; t < turns; ++t)
        d.turns.push_back({variant(user_openers(), sc + 2 * t) + " " + scenario,
                           variant(reply_pool(emotion), t)});
      auto items = restructure_dialogue(d);
      const DialogueItem& item = items[static_cast<std::size_t>(rng.uniform_int(turns))];

      s.gold_labels = {emotion, scenario};
      std::ostringstream ctx;
      for (const DialogueTurn& h : item.history)
        ctx << " user: " << h.user << " assistant: " << h.reply;
      ctx << " user: " << item.current_query;
      s.prompt = format_instruction(s) + ctx.str();
      s.target = "<think> the person feels " + emotion + " because of the " + scenario +
                 " . the goal is " + response_goal(emotion) + " . </think> " + item.target_reply;
      break;
    }
  }
  if (s.prompt.empty()) s.prompt = format_instruction(s);

  // modality payloads carry the gold labels (plus scenario when present)
  s.video = conditioned_video(s.gold_labels, rng, cfg);
  s.audio = conditioned_audio(s.gold_labels, rng, cfg);
  return s;
}

Mixture Mixture::single(TaskKind t) {
  Mixture m;
  m.weights = {0, 0, 0, 0, 0};
  switch (t) {
    case TaskKind::Mer: m.weights[0] = 1; break;
    case TaskKind::OvMer: m.weights[1] = 1; break;
    case TaskKind::Mir: m.weights[2] = 1; break;
    case TaskKind::Eri: m.weights[3] = 1; break;
    case TaskKind::Erg: m.weights[4] = 1; break;
    case TaskKind::Msa: throw ConfigError("msa is evaluation-only and cannot be trained on");
  }
  return m;
}

Mixture Mixture::from_weights(const std::vector<int>& w) {
  if (w.size() != 5) throw ConfigError("mixture: expected 5 weights, got " + std::to_string(w.size()));
  Mixture m;
  for (int i = 0; i < 5; ++i) {
    if (w[static_cast<std::size_t>(i)] < 0) throw ConfigError("mixture: negative weight");
    m.weights[static_cast<std::size_t>(i)] = w[static_cast<std::size_t>(i)];
  }
  if (m.total() == 0) throw ConfigError("mixture: all weights zero");
  return m;
}

long Mixture::total() const {
  long t = 0;
  for (long w : weights) t += w;
  return t;
}

std::array<double, 5> Mixture::probs() const {
  long t = total();
  if (t == 0) throw ConfigError("mixture: all weights zero");
  std::array<double, 5> p{};
  double acc = 0.0;
  for (int i = 0; i < 4; ++i) {
    p[static_cast<std::size_t>(i)] = static_cast<double>(weights[static_cast<std::size_t>(i)]) /
                                     static_cast<double>(t);
    acc += p[static_cast<std::size_t>(i)];
  }
  p[4] = 1.0 - acc;  // exact unit sum
  return p;
}

TaskKind sample_task(const Mixture& mixture, Rng& rng) {
  long t = mixture.total();
  if (t == 0) throw ConfigError("mixture: all weights zero");
  long r = static_cast<long>(rng.next_u64() % static_cast<std::uint64_t>(t));
  static const TaskKind kOrder[5] = {TaskKind::Mer, TaskKind::OvMer, TaskKind::Mir, TaskKind::Eri,
                                     TaskKind::Erg};
  long acc = 0;
  for (int i = 0; i < 5; ++i) {
    acc += mixture.weights[static_cast<std::size_t>(i)];
    if (r < acc) return kOrder[i];
  }
  return TaskKind::Erg;
}

std::vector<std::string> vocabulary_inventory() {
  std::vector<std::string> words;
  auto add_text = [&](const std::string& text) {
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
  };

  // target-side words first so they always stay in vocabulary
  for (const auto& v : {mer_labels(), ov_labels(), mir_labels(), msa_labels(), eri_scenarios()})
    for (const std::string& w : v) add_text(w);
  add_text("<think> </think> the user person feels because of . goal is");
  for (const std::string& e : mer_labels()) {
    add_text(response_goal(e));
    for (const std::string& r : reply_pool(e)) add_text(r);
  }
  for (const std::string& o : user_openers()) add_text(o);
  add_text("user: assistant:");

  // prompt templates
  TaskSample probe;
  for (TaskKind t : {TaskKind::Mer, TaskKind::OvMer, TaskKind::Mir, TaskKind::Eri, TaskKind::Erg,
                     TaskKind::Msa}) {
    probe.task = t;
    add_text(format_instruction(probe));
  }

  // dedupe preserving first appearance
  std::vector<std::string> unique;
  std::set<std::string> seen;
  for (const std::string& w : words)
    if (seen.insert(w).second) unique.push_back(w);
  return unique;
}

}  // namespace afx
