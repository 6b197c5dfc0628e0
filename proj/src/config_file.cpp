#include "apn/config_file.hpp"

#include <cstdio>
#include <memory>

namespace apn {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

}  // namespace

std::string KeyValues::get(const std::string& k) const {
  auto it = values.find(k);
  check(it != values.end(), ErrKind::usage, "missing-key", "config key '" + k + "' not set");
  return it->second;
}

int KeyValues::get_int(const std::string& k) const {
  try {
    return std::stoi(get(k));
  } catch (const std::logic_error&) {
    throw Error(ErrKind::usage, "bad-value", "config key '" + k + "' is not an integer");
  }
}

double KeyValues::get_double(const std::string& k) const {
  try {
    return std::stod(get(k));
  } catch (const std::logic_error&) {
    throw Error(ErrKind::usage, "bad-value", "config key '" + k + "' is not a number");
  }
}

bool KeyValues::get_bool(const std::string& k) const {
  const std::string v = get(k);
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw Error(ErrKind::usage, "bad-value", "config key '" + k + "' is not a boolean");
}

std::vector<std::string> KeyValues::get_list(const std::string& k) const {
  std::vector<std::string> out;
  const std::string v = get(k);
  size_t start = 0;
  for (size_t i = 0; i <= v.size(); ++i)
    if (i == v.size() || v[i] == ',') {
      std::string item = trim(v.substr(start, i - start));
      if (!item.empty()) out.push_back(item);
      start = i + 1;
    }
  return out;
}

KeyValues parse_key_values(const std::string& text, const std::set<std::string>* known_keys) {
  KeyValues kv;
  size_t start = 0;
  int lineno = 0;
  for (size_t i = 0; i <= text.size(); ++i) {
    if (i != text.size() && text[i] != '\n') continue;
    ++lineno;
    std::string line = trim(text.substr(start, i - start));
    start = i + 1;
    if (line.empty() || line[0] == '#') continue;
    size_t eq = line.find('=');
    check(eq != std::string::npos, ErrKind::usage, "bad-config",
          "line " + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    check(!key.empty(), ErrKind::usage, "bad-config",
          "line " + std::to_string(lineno) + ": empty key");
    if (known_keys && known_keys->count(key) == 0)
      throw Error(ErrKind::usage, "unknown-key", "unknown config key '" + key + "'");
    kv.values[key] = value;
  }
  return kv;
}

KeyValues load_key_values(const std::string& path, const std::set<std::string>* known_keys) {
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> f(std::fopen(path.c_str(), "rb"), std::fclose);
  check(f != nullptr, ErrKind::io, "open-failed", path + ": cannot open");
  std::string all;
  char buf[4096];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), f.get())) > 0) all.append(buf, n);
  return parse_key_values(all, known_keys);
}

}  // namespace apn
