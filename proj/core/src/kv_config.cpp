#include "pogvins/kv_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pogvins/errors.hpp"

namespace pogvins {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw Error(ErrorCode::kConfigInvalid, "key '" + key + "': not a number: '" + text + "'");
  }
  return v;
}

}  // namespace

KvConfig KvConfig::parse(const std::string& text) {
  KvConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kParseError, "line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw Error(ErrorCode::kParseError, "line " + std::to_string(lineno) + ": empty key");
    }
    cfg.entries_.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return cfg;
}

KvConfig KvConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void KvConfig::set(const std::string& key, const std::string& value) {
  entries_.erase(std::remove_if(entries_.begin(), entries_.end(),
                                [&](const auto& e) { return e.first == key; }),
                 entries_.end());
  entries_.emplace_back(key, value);
}

void KvConfig::add(const std::string& key, const std::string& value) {
  entries_.emplace_back(key, value);
}

bool KvConfig::has(const std::string& key) const { return get(key).has_value(); }

std::optional<std::string> KvConfig::get(const std::string& key) const {
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->first == key) return it->second;
  }
  return std::nullopt;
}

std::vector<std::string> KvConfig::get_all(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& e : entries_) {
    if (e.first == key) out.push_back(e.second);
  }
  return out;
}

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  const auto v = get(key);
  return v ? to_double(key, *v) : fallback;
}

long KvConfig::get_int(const std::string& key, long fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  long out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    throw Error(ErrorCode::kConfigInvalid, "key '" + key + "': not an integer: '" + *v + "'");
  }
  return out;
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw Error(ErrorCode::kConfigInvalid, "key '" + key + "': not a boolean: '" + *v + "'");
}

Vec3 KvConfig::get_vec3(const std::string& key, const Vec3& fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  std::istringstream in(*v);
  std::string a, b, c, extra;
  if (!(in >> a >> b >> c) || (in >> extra)) {
    throw Error(ErrorCode::kConfigInvalid, "key '" + key + "': expected three numbers");
  }
  return {to_double(key, a), to_double(key, b), to_double(key, c)};
}

void KvConfig::require_known(const std::vector<std::string>& known) const {
  for (const auto& e : entries_) {
    if (std::find(known.begin(), known.end(), e.first) == known.end()) {
      throw Error(ErrorCode::kConfigInvalid, "unknown key '" + e.first + "'");
    }
  }
}

std::string KvConfig::to_string() const {
  std::string out;
  for (const auto& e : entries_) out += e.first + " = " + e.second + "\n";
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

std::string format_vec3(const Vec3& v) {
  return format_double(v.x()) + " " + format_double(v.y()) + " " + format_double(v.z());
}

}  // namespace pogvins
