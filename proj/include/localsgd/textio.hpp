// SPDX-License-Identifier: Apache-2.0
//
// Flat "key = value" text records and CSV helpers used by every serializer.
#pragma once

#include <charconv>
#include <concepts>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "localsgd/error.hpp"
#include "localsgd/numkit.hpp"

namespace localsgd {

/// Shortest text that reparses to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, std::size_t line = 0) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ParseError(line, "not a number: '" + std::string(s) + "'");
  return v;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string join_doubles(std::span<const double> xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += format_double(xs[i]);
  }
  return out;
}

/// Ordered key-value record. Keys keep insertion order on output.
class KeyValues {
 public:
  KeyValues& set(std::string key, std::string value) {
    for (auto& [k, v] : entries_)
      if (k == key) {
        v = std::move(value);
        return *this;
      }
    entries_.emplace_back(std::move(key), std::move(value));
    return *this;
  }
  KeyValues& set(std::string key, double value) {
    return set(std::move(key), format_double(value));
  }
  template <std::integral I>
    requires(!std::same_as<I, bool>)
  KeyValues& set(std::string key, I value) {
    return set(std::move(key), std::to_string(value));
  }
  KeyValues& set(std::string key, const char* value) {
    return set(std::move(key), std::string(value));
  }
  KeyValues& set(std::string key, bool value) {
    return set(std::move(key), std::string(value ? "true" : "false"));
  }

  void append(const KeyValues& other, const std::string& prefix = {}) {
    for (const auto& [k, v] : other.entries_) set(prefix + k, v);
  }

  bool contains(std::string_view key) const {
    for (const auto& [k, v] : entries_)
      if (k == key) return true;
    return false;
  }

  const std::string& get(std::string_view key) const {
    for (const auto& [k, v] : entries_)
      if (k == key) return v;
    throw ParseError(0, "missing key '" + std::string(key) + "'");
  }
  double get_double(std::string_view key) const { return parse_double(get(key)); }

  const std::vector<std::pair<std::string, std::string>>& entries() const noexcept {
    return entries_;
  }

  /// Writes "key = value" lines, each prefixed by `prefix` (e.g. "# ").
  void write(std::ostream& os, std::string_view prefix = {}) const {
    for (const auto& [k, v] : entries_) os << prefix << k << " = " << v << '\n';
  }

  std::string str() const {
    std::ostringstream os;
    write(os);
    return os.str();
  }

  /// Reads "key = value" lines; blank lines and lines starting with '#' or
  /// '[' are skipped.
  static KeyValues read(std::istream& is) {
    KeyValues kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const std::string t = trim(line);
      if (t.empty() || t.front() == '#' || t.front() == '[') continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos) throw ParseError(lineno, "expected 'key = value'");
      kv.set(trim(std::string_view(t).substr(0, eq)),
             trim(std::string_view(t).substr(eq + 1)));
    }
    return kv;
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

inline DenseVector parse_vector(std::string_view s) {
  std::vector<double> out;
  if (trim(s).empty()) return DenseVector(std::move(out));
  for (const auto& part : split(s, ',')) out.push_back(parse_double(part));
  return DenseVector(std::move(out));
}

}  // namespace localsgd
