#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "thc/tensor.hpp"

namespace thc {

// Sectioned key=value config. Keys are addressed as "section.key"; lines
// before any [section] header live in the "" section and are addressed by
// bare key.
class KeyValueConfig {
 public:
  static KeyValueConfig parse_file(const std::string& path);
  static KeyValueConfig parse_string(const std::string& text,
                                     const std::string& origin = "<string>");

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) {
    values_[key] = value;
  }

  std::string get_string(const std::string& key, const std::string& def) const;
  double get_double(const std::string& key, double def) const;
  int get_int(const std::string& key, int def) const;
  uint64_t get_u64(const std::string& key, uint64_t def) const;
  bool get_bool(const std::string& key, bool def) const;
  std::vector<int> get_int_list(const std::string& key,
                                const std::vector<int>& def) const;
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& def) const;

  std::string dump() const;  // grouped by section, sorted keys

 private:
  std::map<std::string, std::string> values_;
};

std::string join_ints(const std::vector<int>& v, char sep = ',');
std::vector<int> parse_int_list(const std::string& s);
std::vector<double> parse_double_list(const std::string& s);

}  // namespace thc
