#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pogvins/types.hpp"

namespace pogvins {

/// Flat `key = value` text. Blank lines and `#` comments are ignored; keys may repeat
/// and keep file order.
class KvConfig {
 public:
  static KvConfig parse(const std::string& text);  // throws ParseError
  static KvConfig load(const std::string& path);   // throws IoError / ParseError

  void set(const std::string& key, const std::string& value);
  void add(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::optional<std::string> get(const std::string& key) const;  // last occurrence
  std::vector<std::string> get_all(const std::string& key) const;

  // Typed getters throw ConfigInvalid on malformed values.
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  Vec3 get_vec3(const std::string& key, const Vec3& fallback) const;

  /// Throws ConfigInvalid naming the first key not in `known`.
  void require_known(const std::vector<std::string>& known) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  std::string to_string() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// Shortest text that parses back to the same double.
std::string format_double(double v);
std::string format_vec3(const Vec3& v);

}  // namespace pogvins
