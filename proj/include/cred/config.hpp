// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cred {

// Flat `section.key = value` configuration. Lines starting with '#' are
// comments; later assignments win, so command-line overrides can be layered
// on top of file values.
class KeyValueConfig {
 public:
  static KeyValueConfig parse_file(const std::string& path);
  static KeyValueConfig parse_string(const std::string& text);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;  // throws when absent
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double_or(const std::string& key, double fallback) const;
  long get_long(const std::string& key) const;
  long get_long_or(const std::string& key, long fallback) const;

  void set(const std::string& key, const std::string& value);
  // Keys sharing `prefix.`, in insertion order, with the prefix stripped.
  std::vector<std::pair<std::string, std::string>> section(
      const std::string& prefix) const;

  // FNV-1a over the sorted canonical "key=value" lines; stable across
  // reordering and comments, sensitive to every effective setting.
  std::uint64_t canonical_hash() const;

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
};

// Utility splitters shared by the config consumers.
std::vector<std::string> split_list(const std::string& text, char sep = ',');
std::string trim(const std::string& text);

}  // namespace cred
