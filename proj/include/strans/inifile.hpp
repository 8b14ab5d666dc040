#pragma once

#include <map>
#include <string>

#include "strans/common.hpp"

namespace strans {

// Minimal INI reader: [section] headers, key = value pairs, comments with
// '#' or ';', surrounding whitespace trimmed.  Values stay strings until a
// typed getter is called; getters throw Error with a descriptive message on
// missing keys or malformed values so the CLI can exit cleanly.
class IniFile {
 public:
  IniFile() = default;

  static IniFile parse_file(const std::string& path);
  static IniFile parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& section, const std::string& key) const;

  std::string get_str(const std::string& section, const std::string& key) const;
  std::string get_str(const std::string& section, const std::string& key,
                      const std::string& fallback) const;

  long long get_int(const std::string& section, const std::string& key) const;
  long long get_int(const std::string& section, const std::string& key, long long fallback) const;

  double get_double(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;

  bool get_bool(const std::string& section, const std::string& key) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;

  void set(const std::string& section, const std::string& key, const std::string& value);

  const std::map<std::string, std::map<std::string, std::string>>& sections() const {
    return sections_;
  }

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace strans
