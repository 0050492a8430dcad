#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace rnclab {

// Flat key-value config with [section] headers, TOML-style:
//
//   # comment
//   [section]
//   key = 3.5
//   name = "text"         # or a bare token
//   seeds = [1, 2, 3]
//
// Keys are addressed as "section.key". No nesting, no escapes; numbers,
// booleans, strings and flat lists only.
class ConfigFile {
 public:
  static ConfigFile parse_file(const std::string& path);
  static ConfigFile parse_string(const std::string& text,
                                 const std::string& origin = "<string>");

  bool has(const std::string& key) const;

  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<std::string> get_string_list(const std::string& key) const;

  std::vector<std::string> keys() const;
  int line_of(const std::string& key) const;
  const std::string& origin() const { return origin_; }

 private:
  struct Entry {
    std::string raw;  // scalar form, unquoted
    std::vector<std::string> items;
    bool is_list = false;
    int line = 0;
  };

  const Entry& entry(const std::string& key) const;
  [[noreturn]] void fail(const std::string& key, const std::string& why) const;

  std::map<std::string, Entry> entries_;
  std::string origin_;
};

}  // namespace rnclab
