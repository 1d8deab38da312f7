#include "afx/config.hpp"

#include <fstream>
#include <sstream>

#include "afx/error.hpp"

namespace afx {

const std::map<std::string, std::pair<std::string, std::string>>& RunConfig::registry() {
  static const std::map<std::string, std::pair<std::string, std::string>> kRegistry = {
      {"run.seed", {"1", "master seed for training data and ordering"}},
      {"run.out_dir", {"runs/out", "artifact directory (checkpoint, trace, losses)"}},
      {"run.precision", {"f32", "training scalar type: f32 or f64"}},

      {"video.frames", {"8", "synthetic clip frame count"}},
      {"video.size", {"8", "square frame edge in pixels, 3 channels"}},
      {"audio.steps", {"20", "synthetic mel-like frame count"}},
      {"audio.dim", {"40", "synthetic mel-like feature dimension"}},
      {"erg.max_turns", {"3", "maximum dialogue turns per synthetic conversation"}},

      {"encoder.depth", {"24", "toy encoder block count"}},
      {"encoder.dim", {"64", "toy encoder hidden dimension"}},
      {"encoder.seed", {"7", "seed for frozen encoder weights"}},
      {"encoder.visual_taps", {"12,16,22", "visual layers feeding the fusion experts"}},
      {"encoder.speech_taps", {"16,18,22", "speech layers feeding the fusion experts"}},
      {"face.dim", {"64", "fused face embedding dimension"}},

      {"tokens.visual", {"32", "visual stream token budget"}},
      {"tokens.speech", {"32", "speech stream token budget"}},
      {"tokens.face", {"4", "face stream token budget"}},
      {"tokens.fusion", {"1", "fusion stream token budget"}},
      {"qformer.heads", {"4", "attention heads in the resamplers and temporal block"}},
      {"projector.seed", {"11", "seed for resampler and adapter weights"}},

      {"lm.dim", {"64", "language model embedding dimension"}},
      {"lm.blocks", {"2", "decoder block count"}},
      {"lm.heads", {"4", "decoder attention heads"}},
      {"lm.ffn_mult", {"4", "decoder FFN width multiple"}},
      {"lm.max_seq", {"320", "maximum assembled sequence length"}},
      {"lm.seed", {"17", "seed for frozen language model weights"}},

      {"lora.rank", {"32", "low-rank adapter rank r"}},
      {"lora.alpha", {"16", "low-rank adapter alpha"}},
      {"lora.seed", {"23", "seed for adapter A matrices"}},

      {"fusion.mode",
       {"experts_gated", "experts_gated | none | attention_fusion | average_weighting"}},
      {"fusion.experts", {"3", "fusion expert count"}},
      {"fusion.heads", {"4", "fusion expert attention heads"}},
      {"fusion.pairing", {"sequential", "sequential | cross_layer tap pairing"}},
      {"fusion.seed", {"13", "seed for fusion expert and gate weights"}},

      {"train.batch_size", {"3", "samples per micro-batch"}},
      {"train.accum", {"4", "gradient accumulation micro-batches per step"}},
      {"train.supervise_think", {"true", "include the think span in the loss"}},
      {"train.qformers_with_adapters",
       {"true", "train resamplers inside their branch adapter groups"}},

      {"curriculum.mode", {"standard", "standard | reverse_p2e | joint_training"}},
      {"curriculum.scale", {"1", "step budget divisor (ceiling division)"}},
      {"curriculum.mixture", {"18,28,5,31,18", "phase-3 task weights MER,OV-MER,MIR,ERI,ERG"}},
      {"curriculum.phase1a.lr", {"3e-4", "visual+face alignment learning rate"}},
      {"curriculum.phase1a.steps", {"25000", "visual+face alignment steps before scaling"}},
      {"curriculum.phase1b.lr", {"3e-4", "speech alignment learning rate"}},
      {"curriculum.phase1b.steps", {"15000", "speech alignment steps before scaling"}},
      {"curriculum.phase2.lr", {"1e-5", "fusion pre-training learning rate"}},
      {"curriculum.phase2.steps", {"5000", "fusion pre-training steps before scaling"}},
      {"curriculum.phase3.lr", {"8e-6", "multitask tuning learning rate"}},
      {"curriculum.phase3.steps", {"300000", "multitask tuning steps before scaling"}},
      {"curriculum.joint.lr", {"8e-6", "joint-training learning rate"}},
      {"curriculum.joint.steps", {"345000", "joint-training steps before scaling"}},

      {"adam.beta1", {"0.9", "AdamW first-moment decay"}},
      {"adam.beta2", {"0.999", "AdamW second-moment decay"}},
      {"adam.eps", {"1e-8", "AdamW epsilon"}},
      {"adam.weight_decay", {"0.01", "AdamW decoupled weight decay"}},

      {"eval.samples", {"50", "evaluation corpus size per task"}},
      {"eval.max_new_tokens", {"48", "decoding budget per evaluation sample"}},
  };
  return kRegistry;
}

RunConfig::RunConfig() {
  for (const auto& [key, spec] : registry()) values_[key] = spec.first;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!registry().count(key)) throw ConfigError("config: unknown key '" + key + "'");
  values_[key] = value;
}

void RunConfig::apply_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: " + path + ":" + std::to_string(lineno) +
                        " expected 'key = value', got '" + line + "'");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

RunConfig RunConfig::from_file(const std::string& path) {
  RunConfig cfg;
  cfg.apply_file(path);
  return cfg;
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) > 0; }

const std::string& RunConfig::gets(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("config: unknown key '" + key + "'");
  return it->second;
}

int RunConfig::geti(const std::string& key) const {
  try {
    return std::stoi(gets(key));
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' = '" + gets(key) + "' is not an integer");
  }
}

long RunConfig::getl(const std::string& key) const {
  try {
    return std::stol(gets(key));
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' = '" + gets(key) + "' is not an integer");
  }
}

std::uint64_t RunConfig::getu(const std::string& key) const {
  try {
    return std::stoull(gets(key));
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' = '" + gets(key) + "' is not an integer");
  }
}

double RunConfig::getd(const std::string& key) const {
  try {
    return std::stod(gets(key));
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' = '" + gets(key) + "' is not a number");
  }
}

bool RunConfig::getb(const std::string& key) const {
  const std::string& v = gets(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: key '" + key + "' = '" + v + "' is not a boolean");
}

std::vector<int> RunConfig::get_ints(const std::string& key) const {
  std::vector<int> out;
  std::stringstream ss(gets(key));
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      out.push_back(std::stoi(trim(part)));
    } catch (const std::exception&) {
      throw ConfigError("config: key '" + key + "' = '" + gets(key) + "' is not an int list");
    }
  }
  if (out.empty()) throw ConfigError("config: key '" + key + "' holds an empty list");
  return out;
}

void RunConfig::echo(std::ostream& os) const {
  for (const auto& [key, value] : values_) os << key << " = " << value << "\n";
}

std::string RunConfig::echo_string() const {
  std::ostringstream os;
  echo(os);
  return os.str();
}

}  // namespace afx
