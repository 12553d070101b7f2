#include "cfl/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "cfl/errors.hpp"

namespace cfl {

std::string trim(const std::string& s) {
  const auto* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

namespace {

std::string strip_comment(const std::string& line) {
  // '#' or ';' at line start, or after whitespace, starts a comment.
  for (std::size_t i = 0; i < line.size(); ++i) {
    if ((line[i] == '#' || line[i] == ';') && (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t'))
      return line.substr(0, i);
  }
  return line;
}

bool valid_key(const std::string& k) {
  if (k.empty() || k.front() == '.' || k.back() == '.') return false;
  for (char c : k) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-')) return false;
  }
  return true;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string raw, section;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    auto where = [&] { return origin + ":" + std::to_string(lineno); };
    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError(where() + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!valid_key(section)) throw ValidationError(where() + ": invalid section name '" + section + "'");
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError(where() + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    if (!valid_key(key)) throw ValidationError(where() + ": invalid key '" + key + "'");
    cfg.entries_[section.empty() ? key : section + "." + key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

const std::string& KeyValueConfig::at(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ValidationError("missing config key '" + key + "'");
  return it->second;
}

void KeyValueConfig::apply_override(const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ValidationError("override '" + assignment + "' is not of the form key=value");
  std::string key = trim(assignment.substr(0, eq));
  if (!valid_key(key)) throw ValidationError("override has invalid key '" + key + "'");
  entries_[key] = trim(assignment.substr(eq + 1));
}

std::string KeyValueConfig::dump() const {
  std::ostringstream out;
  // Top-level keys must precede every section header.
  for (const auto& [key, value] : entries_)
    if (key.find('.') == std::string::npos) out << key << " = " << value << "\n";
  std::string current;
  for (const auto& [key, value] : entries_) {
    auto dot = key.rfind('.');
    if (dot == std::string::npos) continue;
    std::string section = key.substr(0, dot);
    if (section != current) {
      if (out.tellp() > 0) out << "\n";
      out << "[" << section << "]\n";
      current = section;
    }
    out << key.substr(dot + 1) << " = " << value << "\n";
  }
  return out.str();
}

}  // namespace cfl
