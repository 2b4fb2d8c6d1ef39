// smdd/config.hpp

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
#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "smdd/common.hpp"

namespace smdd {

/// Flat `key = value` settings. Blank lines and lines starting with '#' are
/// skipped; a repeated key keeps its last value.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text, const std::string& source = "config");
  static KeyValues load(const std::string& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  /// Applies "key=value" overrides.
  void set_assignment(std::string_view assignment);
  void merge(const KeyValues& other);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  /// Throws ConfigError naming every key outside `known`.
  void check_known(const std::vector<std::string>& known) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

 private:
  std::map<std::string, std::string> values_;
};

/// Shortest decimal text that reads back to the same double.
std::string format_double(double x);

}  // namespace smdd
