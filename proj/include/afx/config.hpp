#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace afx {

// Flat dotted-key configuration with registered defaults. Unknown keys are
// rejected; the fully resolved tree echoes losslessly for reproducibility.
class RunConfig {
 public:
  RunConfig();

  // Parses `key = value` lines; '#' starts a comment, blank lines ignored.
  static RunConfig from_file(const std::string& path);
  void apply_file(const std::string& path);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  int geti(const std::string& key) const;
  long getl(const std::string& key) const;
  double getd(const std::string& key) const;
  bool getb(const std::string& key) const;
  const std::string& gets(const std::string& key) const;
  std::vector<int> get_ints(const std::string& key) const;
  std::uint64_t getu(const std::string& key) const;

  void echo(std::ostream& os) const;  // sorted `key = value` lines
  std::string echo_string() const;

  const std::map<std::string, std::string>& values() const { return values_; }

  // name -> (default, doc)
  static const std::map<std::string, std::pair<std::string, std::string>>& registry();

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace afx
