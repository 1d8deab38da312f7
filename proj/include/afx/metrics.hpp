#pragma once

#include <map>
#include <string>
#include <vector>

namespace afx {

// Maps emotion words to wheel groups; lookups are case-insensitive after
// trimming. Table format: one `word<TAB>group_id` line per entry, UTF-8.
class EmotionWheel {
 public:
  static EmotionWheel toy();  // covers the synthetic label vocabulary
  static EmotionWheel from_file(const std::string& path);
  static EmotionWheel from_entries(const std::vector<std::pair<std::string, int>>& entries);

  int group_of(const std::string& word) const;  // unknown word is an error
  bool contains(const std::string& word) const;
  std::size_t size() const { return groups_.size(); }
  int group_count() const;

 private:
  std::map<std::string, int> groups_;
};

struct PredictionRecord {
  std::string sample_id;
  std::vector<std::string> predicted;  // may be empty: no usable prediction
  std::vector<std::string> gold;       // at least one label
  std::string generated_text;
};

// Fraction of records whose predicted and gold wheel-group sets intersect.
double hit_rate(const std::vector<PredictionRecord>& records, const EmotionWheel& wheel);

// Per-class F1 weighted by gold support. Single-label semantics: the first
// predicted and gold labels are compared; empty predictions count against
// recall only.
double waf(const std::vector<PredictionRecord>& records, const std::vector<std::string>& label_space);

struct ClassificationScores {
  double acc = 0.0;
  double wf1 = 0.0;
  double wp = 0.0;
};

ClassificationScores classification_suite(const std::vector<PredictionRecord>& records,
                                          const std::vector<std::string>& label_space);

// Corpus-level distinct n-grams over total n-grams across all responses.
double dist_n(const std::vector<std::string>& responses, int n);

}  // namespace afx
