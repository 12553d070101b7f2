#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cfl {

// Flat dotted-key view of an INI-style file:
//
//   # comment
//   [section.sub]
//   key = value      ; trailing comment
//
// yields the entry "section.sub.key" -> "value". Keys before the first
// section header are top-level. Later duplicates overwrite earlier ones.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::string& at(const std::string& key) const;
  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  // Applies "a.b.c=value".
  void apply_override(const std::string& assignment);

  const std::map<std::string, std::string>& entries() const noexcept { return entries_; }

  // Canonical INI text: sections in key order, one header per section.
  std::string dump() const;

 private:
  std::map<std::string, std::string> entries_;
};

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);

}  // namespace cfl
