// src/metrics.cpp

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
#include "smdd/metrics.hpp"

#include "smdd/align.hpp"
#include "smdd/phones.hpp"

namespace smdd {

MddCounts classify_outcomes(std::span<const int> ref, std::span<const int> truth, std::span<const int> decision) {
  if (truth.size() != ref.size() || decision.size() != ref.size())
    throw ContractError("classify_outcomes: sequences must all have the reference length");
  MddCounts c;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const bool pronounced_ok = truth[i] == ref[i];
    const bool accepted = decision[i] == ref[i];
    if (pronounced_ok) {
      (accepted ? c.ta : c.fr) += 1;
    } else if (accepted) {
      c.fa += 1;
    } else {
      const bool diag_ok = decision[i] == truth[i] || (decision[i] == PhoneSet::kSerr && truth[i] == PhoneSet::kErr);
      (diag_ok ? c.tr_correct_diag : c.tr_error_diag) += 1;
    }
  }
  return c;
}

namespace {

Ratio ratio(double num, double den) {
  if (den <= 0.0) return {};
  return {num / den, true};
}

}  // namespace

Ratio precision(const MddCounts& c) { return ratio(static_cast<double>(c.tr()), static_cast<double>(c.fr + c.tr())); }

Ratio recall(const MddCounts& c) { return ratio(static_cast<double>(c.tr()), static_cast<double>(c.tr() + c.fa)); }

Ratio f1(const MddCounts& c) {
  const Ratio p = precision(c), r = recall(c);
  if (!p.defined || !r.defined) return {};
  return ratio(2.0 * p.value * r.value, p.value + r.value);
}

double phone_error_rate(std::span<const std::vector<int>> refs, std::span<const std::vector<int>> hyps) {
  if (refs.size() != hyps.size()) throw ContractError("phone_error_rate: unpaired transcripts");
  long errors = 0, total = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    errors += needleman_wunsch(refs[i], hyps[i]).total_cost;
    total += static_cast<long>(refs[i].size());
  }
  if (total == 0) throw ContractError("phone_error_rate: empty reference total");
  return static_cast<double>(errors) / static_cast<double>(total);
}

}  // namespace smdd
