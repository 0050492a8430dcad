#include "rnclab/configfile.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "rnclab/errors.hpp"

namespace rnclab {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

// Drops a trailing comment, respecting double quotes.
std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

double parse_double(const std::string& s, const std::string& context) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw ConfigError(context + ": '" + s + "' is not a number");
  }
  return v;
}

}  // namespace

ConfigFile ConfigFile::parse_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open config '" + path + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_string(buf.str(), path);
}

ConfigFile ConfigFile::parse_string(const std::string& text, const std::string& origin) {
  ConfigFile cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": unterminated [section]");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty section name");
      }
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    }
    std::string full = section.empty() ? key : section + "." + key;
    if (cfg.entries_.count(full)) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + full + "'");
    }

    Entry e;
    e.line = line_no;
    if (!value.empty() && value.front() == '[') {
      if (value.back() != ']') {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": unterminated list");
      }
      e.is_list = true;
      std::string inner = value.substr(1, value.size() - 2);
      std::string item;
      std::istringstream items(inner);
      while (std::getline(items, item, ',')) {
        item = trim(item);
        if (!item.empty()) e.items.push_back(unquote(item));
      }
    } else {
      e.raw = unquote(value);
    }
    cfg.entries_.emplace(std::move(full), std::move(e));
  }
  return cfg;
}

bool ConfigFile::has(const std::string& key) const { return entries_.count(key) > 0; }

const ConfigFile::Entry& ConfigFile::entry(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw ConfigError(origin_ + ": missing required key '" + key + "'");
  }
  return it->second;
}

void ConfigFile::fail(const std::string& key, const std::string& why) const {
  throw ConfigError(origin_ + ":" + std::to_string(line_of(key)) + ": key '" + key +
                    "' " + why);
}

double ConfigFile::get_double(const std::string& key) const {
  const Entry& e = entry(key);
  if (e.is_list) fail(key, "is a list, expected a number");
  return parse_double(e.raw, origin_ + ": key '" + key + "'");
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long long ConfigFile::get_int(const std::string& key) const {
  double v = get_double(key);
  auto i = static_cast<long long>(v);
  if (static_cast<double>(i) != v) fail(key, "is not an integer");
  return i;
}

long long ConfigFile::get_int(const std::string& key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

std::uint64_t ConfigFile::get_u64(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  long long v = get_int(key);
  if (v < 0) fail(key, "must be non-negative");
  return static_cast<std::uint64_t>(v);
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const Entry& e = entry(key);
  if (e.raw == "true") return true;
  if (e.raw == "false") return false;
  fail(key, "must be true or false");
}

std::string ConfigFile::get_string(const std::string& key) const {
  const Entry& e = entry(key);
  if (e.is_list) fail(key, "is a list, expected a string");
  return e.raw;
}

std::string ConfigFile::get_string(const std::string& key,
                                   const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

std::vector<double> ConfigFile::get_double_list(const std::string& key) const {
  const Entry& e = entry(key);
  std::vector<double> out;
  if (!e.is_list) {
    out.push_back(parse_double(e.raw, origin_ + ": key '" + key + "'"));
    return out;
  }
  for (const std::string& item : e.items) {
    out.push_back(parse_double(item, origin_ + ": key '" + key + "'"));
  }
  return out;
}

std::vector<std::string> ConfigFile::get_string_list(const std::string& key) const {
  const Entry& e = entry(key);
  if (!e.is_list) return {e.raw};
  return e.items;
}

std::vector<std::string> ConfigFile::keys() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [key, entry] : entries_) out.push_back(key);
  return out;
}

int ConfigFile::line_of(const std::string& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? 0 : it->second.line;
}

}  // namespace rnclab
