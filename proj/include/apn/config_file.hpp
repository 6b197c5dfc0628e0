#ifndef APN_CONFIG_FILE_HPP
#define APN_CONFIG_FILE_HPP

#include <map>
#include <set>
#include <string>
#include <vector>

#include "apn/error.hpp"

namespace apn {

// Plain `key = value` configuration text. Lines starting with '#' (and blank
// lines) are ignored. When a known-key set is supplied, unknown keys are
// rejected.
struct KeyValues {
  std::map<std::string, std::string> values;

  bool has(const std::string& k) const { return values.count(k) > 0; }
  std::string get(const std::string& k) const;
  int get_int(const std::string& k) const;
  double get_double(const std::string& k) const;
  bool get_bool(const std::string& k) const;
  std::vector<std::string> get_list(const std::string& k) const;  // comma-separated

  int get_int(const std::string& k, int fallback) const { return has(k) ? get_int(k) : fallback; }
  double get_double(const std::string& k, double fallback) const {
    return has(k) ? get_double(k) : fallback;
  }
  bool get_bool(const std::string& k, bool fallback) const {
    return has(k) ? get_bool(k) : fallback;
  }
};

KeyValues parse_key_values(const std::string& text, const std::set<std::string>* known_keys);
KeyValues load_key_values(const std::string& path, const std::set<std::string>* known_keys);

}  // namespace apn

#endif
