#include "afx/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "afx/error.hpp"
#include "afx/tasks.hpp"

namespace afx {

namespace {

std::string normalize(const std::string& word) {
  std::size_t b = word.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = word.find_last_not_of(" \t\r\n");
  std::string out = word.substr(b, e - b + 1);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

EmotionWheel EmotionWheel::from_entries(const std::vector<std::pair<std::string, int>>& entries) {
  EmotionWheel w;
  for (const auto& [word, group] : entries) {
    std::string key = normalize(word);
    auto [it, inserted] = w.groups_.emplace(key, group);
    if (!inserted && it->second != group)
      throw ConfigError("emotion wheel: word '" + key + "' mapped to two groups");
  }
  return w;
}

EmotionWheel EmotionWheel::toy() {
  std::vector<std::pair<std::string, int>> entries;
  const auto& base = mer_labels();
  for (std::size_t i = 0; i < base.size(); ++i) entries.emplace_back(base[i], static_cast<int>(i));
  // nuanced open-vocabulary words fold into the seven base groups
  static const std::vector<std::pair<std::string, int>> ov = {
      {"joy", 0},       {"delight", 0}, {"grief", 1},      {"sorrow", 1},  {"rage", 2},
      {"resentment", 2}, {"anxiety", 3}, {"dread", 3},      {"panic", 3},   {"revulsion", 4},
      {"contempt", 4},  {"amazement", 5}, {"shock", 5},     {"calm", 6},    {"indifference", 6}};
  entries.insert(entries.end(), ov.begin(), ov.end());
  return from_entries(entries);
}

EmotionWheel EmotionWheel::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("emotion wheel: cannot open '" + path + "'");
  std::vector<std::pair<std::string, int>> entries;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw ConfigError("emotion wheel: malformed line '" + line + "' (expected word<TAB>group)");
    entries.emplace_back(line.substr(0, tab), std::stoi(line.substr(tab + 1)));
  }
  return from_entries(entries);
}

int EmotionWheel::group_of(const std::string& word) const {
  auto it = groups_.find(normalize(word));
  if (it == groups_.end())
    throw ConfigError("emotion wheel: unknown word '" + normalize(word) + "'");
  return it->second;
}

bool EmotionWheel::contains(const std::string& word) const {
  return groups_.count(normalize(word)) > 0;
}

int EmotionWheel::group_count() const {
  std::set<int> g;
  for (const auto& [w, id] : groups_) g.insert(id);
  return static_cast<int>(g.size());
}

namespace {

void require_gold(const std::vector<PredictionRecord>& records, const char* op) {
  if (records.empty()) throw ConfigError(std::string(op) + ": empty record list");
  for (const PredictionRecord& r : records)
    if (r.gold.empty())
      throw ConfigError(std::string(op) + ": record '" + r.sample_id + "' has no gold label");
}

int label_index(const std::vector<std::string>& space, const std::string& label, const char* op) {
  for (std::size_t i = 0; i < space.size(); ++i)
    if (space[i] == label) return static_cast<int>(i);
  throw ConfigError(std::string(op) + ": label '" + label + "' outside the label space");
}

}  // namespace

double hit_rate(const std::vector<PredictionRecord>& records, const EmotionWheel& wheel) {
  require_gold(records, "hit_rate");
  // fail fast on unresolvable labels, listing the words
  std::string unknown;
  for (const PredictionRecord& r : records) {
    for (const std::string& w : r.predicted)
      if (!wheel.contains(w)) unknown += " '" + w + "'";
    for (const std::string& w : r.gold)
      if (!wheel.contains(w)) unknown += " '" + w + "'";
  }
  if (!unknown.empty()) throw ConfigError("hit_rate: words missing from the wheel:" + unknown);

  long hits = 0;
  for (const PredictionRecord& r : records) {
    std::set<int> pg, gg;
    for (const std::string& w : r.predicted) pg.insert(wheel.group_of(w));
    for (const std::string& w : r.gold) gg.insert(wheel.group_of(w));
    bool hit = false;
    for (int g : pg)
      if (gg.count(g)) hit = true;
    hits += hit ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

ClassificationScores classification_suite(const std::vector<PredictionRecord>& records,
                                          const std::vector<std::string>& label_space) {
  require_gold(records, "classification_suite");
  const int k = static_cast<int>(label_space.size());
  std::vector<long> tp(static_cast<std::size_t>(k), 0), fp(static_cast<std::size_t>(k), 0),
      fn(static_cast<std::size_t>(k), 0), support(static_cast<std::size_t>(k), 0);
  long correct = 0;
  for (const PredictionRecord& r : records) {
    int g = label_index(label_space, r.gold[0], "classification_suite");
    support[static_cast<std::size_t>(g)]++;
    if (r.predicted.empty()) {
      fn[static_cast<std::size_t>(g)]++;
      continue;
    }
    int p = label_index(label_space, r.predicted[0], "classification_suite");
    if (p == g) {
      tp[static_cast<std::size_t>(p)]++;
      correct++;
    } else {
      fp[static_cast<std::size_t>(p)]++;
      fn[static_cast<std::size_t>(g)]++;
    }
  }
  ClassificationScores out;
  out.acc = static_cast<double>(correct) / static_cast<double>(records.size());
  double total = static_cast<double>(records.size());
  for (int c = 0; c < k; ++c) {
    auto ci = static_cast<std::size_t>(c);
    if (support[ci] == 0) continue;
    double prec = tp[ci] + fp[ci] == 0 ? 0.0
                                       : static_cast<double>(tp[ci]) /
                                             static_cast<double>(tp[ci] + fp[ci]);
    double rec = static_cast<double>(tp[ci]) / static_cast<double>(tp[ci] + fn[ci]);
    double f1 = prec + rec == 0.0 ? 0.0 : 2.0 * prec * rec / (prec + rec);
    double w = static_cast<double>(support[ci]) / total;
    out.wf1 += w * f1;
    out.wp += w * prec;
  }
  return out;
}

double waf(const std::vector<PredictionRecord>& records,
           const std::vector<std::string>& label_space) {
  return classification_suite(records, label_space).wf1;
}

double dist_n(const std::vector<std::string>& responses, int n) {
  if (n < 1) throw ConfigError("dist_n: n must be >= 1");
  std::set<std::string> distinct;
  long total = 0;
  for (const std::string& resp : responses) {
    std::vector<std::string> toks;
    std::stringstream ss(resp);
    std::string w;
    while (ss >> w) toks.push_back(w);
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= toks.size(); ++i) {
      std::string gram;
      for (int j = 0; j < n; ++j) gram += toks[i + static_cast<std::size_t>(j)] + "\x1f";
      distinct.insert(gram);
      ++total;
    }
  }
  if (total == 0)
    throw ConfigError("dist_n: no response holds " + std::to_string(n) + " tokens");
  return static_cast<double>(distinct.size()) / static_cast<double>(total);
}

}  // namespace afx
