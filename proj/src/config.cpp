// src/config.cpp

// Copyright 2026  The smdd Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.
#include "smdd/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace smdd {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T out{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("bad value for " + key + ": '" + text + "'");
  return out;
}

}  // namespace

KeyValues KeyValues::parse(std::string_view text, const std::string& source) {
  KeyValues kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    kv.values_[key] = std::string(trim(line.substr(eq + 1)));
  }
  return kv;
}

KeyValues KeyValues::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

void KeyValues::set_assignment(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override must be key=value: " + std::string(assignment));
  const std::string key(trim(assignment.substr(0, eq)));
  if (key.empty()) throw ConfigError("override has an empty key");
  values_[key] = std::string(trim(assignment.substr(eq + 1)));
}

void KeyValues::merge(const KeyValues& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

void KeyValues::check_known(const std::vector<std::string>& known) const {
  std::string unknown;
  for (const auto& [k, v] : values_) {
    if (std::find(known.begin(), known.end(), k) != known.end()) continue;
    unknown += unknown.empty() ? k : ", " + k;
  }
  if (!unknown.empty()) throw ConfigError("unknown config keys: " + unknown);
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

int KeyValues::get_int(const std::string& key, int fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_number<int>(key, it->second);
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_number<double>(key, it->second);
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("bad boolean for " + key + ": '" + it->second + "'");
}

std::vector<int> KeyValues::get_int_list(const std::string& key, const std::vector<int>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<int> out;
  std::string_view rest = it->second;
  while (true) {
    const auto comma = rest.find(',');
    out.push_back(parse_number<int>(key, std::string(trim(rest.substr(0, comma)))));
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return out;
}

std::string format_double(double x) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

}  // namespace smdd
