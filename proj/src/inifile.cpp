#include "strans/inifile.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace strans {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0;
  size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string strip_comment(const std::string& s) {
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '#' || s[i] == ';') return s.substr(0, i);
  }
  return s;
}

}  // namespace

IniFile IniFile::parse_file(const std::string& path) {
  std::ifstream in(path);
  ST_CHECK(in.good(), "cannot open config file: " << path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str(), path);
}

IniFile IniFile::parse_string(const std::string& text, const std::string& origin) {
  IniFile out;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      ST_CHECK(line.back() == ']' && line.size() > 2,
               origin << ":" << lineno << ": malformed section header '" << line << "'");
      section = trim(line.substr(1, line.size() - 2));
      out.sections_[section];
      continue;
    }
    size_t eq = line.find('=');
    ST_CHECK(eq != std::string::npos,
             origin << ":" << lineno << ": expected 'key = value', got '" << line << "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    ST_CHECK(!key.empty(), origin << ":" << lineno << ": empty key");
    out.sections_[section][key] = value;
  }
  return out;
}

bool IniFile::has(const std::string& section, const std::string& key) const {
  auto it = sections_.find(section);
  if (it == sections_.end()) return false;
  return it->second.count(key) > 0;
}

std::string IniFile::get_str(const std::string& section, const std::string& key) const {
  auto it = sections_.find(section);
  ST_CHECK(it != sections_.end(), "config: missing section [" << section << "]");
  auto jt = it->second.find(key);
  ST_CHECK(jt != it->second.end(), "config: missing key '" << key << "' in [" << section << "]");
  return jt->second;
}

std::string IniFile::get_str(const std::string& section, const std::string& key,
                             const std::string& fallback) const {
  return has(section, key) ? get_str(section, key) : fallback;
}

long long IniFile::get_int(const std::string& section, const std::string& key) const {
  std::string v = get_str(section, key);
  char* end = nullptr;
  long long out = std::strtoll(v.c_str(), &end, 10);
  ST_CHECK(end != nullptr && *end == '\0' && !v.empty(),
           "config: [" << section << "] " << key << " = '" << v << "' is not an integer");
  return out;
}

long long IniFile::get_int(const std::string& section, const std::string& key,
                           long long fallback) const {
  return has(section, key) ? get_int(section, key) : fallback;
}

double IniFile::get_double(const std::string& section, const std::string& key) const {
  std::string v = get_str(section, key);
  char* end = nullptr;
  double out = std::strtod(v.c_str(), &end);
  ST_CHECK(end != nullptr && *end == '\0' && !v.empty(),
           "config: [" << section << "] " << key << " = '" << v << "' is not a number");
  return out;
}

double IniFile::get_double(const std::string& section, const std::string& key,
                           double fallback) const {
  return has(section, key) ? get_double(section, key) : fallback;
}

bool IniFile::get_bool(const std::string& section, const std::string& key) const {
  std::string v = get_str(section, key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  ST_CHECK(false, "config: [" << section << "] " << key << " = '" << v << "' is not a boolean");
  return false;
}

bool IniFile::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  return has(section, key) ? get_bool(section, key) : fallback;
}

void IniFile::set(const std::string& section, const std::string& key, const std::string& value) {
  sections_[section][key] = value;
}

}  // namespace strans
