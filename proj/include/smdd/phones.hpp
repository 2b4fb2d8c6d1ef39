// smdd/phones.hpp

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

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace smdd {

/// Phone inventory: the 39 CMU dictionary phones, the corpus "err" symbol for
/// unclear pronunciation, and a deletion marker used as a phone-predictor
/// target. Ids are dense and fixed.
class PhoneSet {
 public:
  static constexpr int kNumPhones = 39;
  static constexpr int kErr = 39;
  static constexpr int kDel = 40;
  static constexpr int kSize = 41;
  /// Fused-decision token for a mispronunciation flagged by the classifier.
  static constexpr int kSerr = -2;

  static const PhoneSet& instance();

  /// Throws VocabularyError for unknown names.
  int id(std::string_view name) const;
  const std::string& name(int id) const;
  bool contains(std::string_view name) const;
  bool valid_id(int id) const { return id >= 0 && id < kSize; }

  std::vector<int> parse(std::string_view space_separated) const;
  /// Space-joined names; kSerr prints as "serr".
  std::string format(std::span<const int> ids) const;

  std::span<const std::string> names() const { return names_; }

 private:
  PhoneSet();
  std::vector<std::string> names_;
};

/// CTC output classes are the 40 recognizable symbols (phones + err) followed
/// by the blank; the deletion marker is never emitted.
inline constexpr int kCtcClasses = PhoneSet::kErr + 2;
inline constexpr int kCtcBlank = kCtcClasses - 1;

}  // namespace smdd
