// src/phones.cpp

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
#include "smdd/phones.hpp"

#include <algorithm>
#include <sstream>

#include "smdd/common.hpp"

namespace smdd {

PhoneSet::PhoneSet()
    : names_{"AA", "AE", "AH", "AO", "AW", "AY", "B",  "CH", "D",  "DH", "EH", "ER", "EY", "F",
             "G",  "HH", "IH", "IY", "JH", "K",  "L",  "M",  "N",  "NG", "OW", "OY", "P",  "R",
             "S",  "SH", "T",  "TH", "UH", "UW", "V",  "W",  "Y",  "Z",  "ZH", "err", "<del>"} {}

const PhoneSet& PhoneSet::instance() {
  static const PhoneSet set;
  return set;
}

int PhoneSet::id(std::string_view name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw VocabularyError("unknown phone '" + std::string(name) + "'");
  return static_cast<int>(it - names_.begin());
}

const std::string& PhoneSet::name(int id) const {
  static const std::string serr = "serr";
  if (id == kSerr) return serr;
  if (!valid_id(id)) throw VocabularyError("phone id " + std::to_string(id) + " out of range");
  return names_[id];
}

bool PhoneSet::contains(std::string_view name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::vector<int> PhoneSet::parse(std::string_view space_separated) const {
  std::istringstream in{std::string(space_separated)};
  std::vector<int> ids;
  std::string tok;
  while (in >> tok) ids.push_back(id(tok));
  return ids;
}

std::string PhoneSet::format(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (!out.empty()) out += ' ';
    out += name(id);
  }
  return out;
}

}  // namespace smdd
