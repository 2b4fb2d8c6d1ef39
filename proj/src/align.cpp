// src/align.cpp

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
#include "smdd/align.hpp"

#include "smdd/phones.hpp"

namespace smdd {

Targets derive_targets(std::span<const int> ref, std::span<const int> pronounced) {
  Targets t;
  t.phones.assign(ref.size(), PhoneSet::kDel);
  t.errors.assign(ref.size(), 1.0);
  for (const EditOp& op : needleman_wunsch(ref, pronounced).ops) {
    if (!op.ref_index) continue;
    const Index r = *op.ref_index;
    if (op.kind == EditKind::kMatch) {
      t.phones[r] = ref[r];
      t.errors[r] = 0.0;
    } else if (op.kind == EditKind::kSubstitute) {
      t.phones[r] = pronounced[*op.hyp_index];
    }
  }
  return t;
}

std::vector<int> collapse_ctc(std::span<const int> frame_labels, int blank) {
  std::vector<int> out;
  int previous = -1;
  for (int label : frame_labels) {
    if (label != previous && label != blank) out.push_back(label);
    previous = label;
  }
  return out;
}

std::optional<int> GreedyCtcDecoder::push(const Eigen::Ref<const RowVector>& log_probs) {
  Index best = 0;
  log_probs.maxCoeff(&best);
  const int label = static_cast<int>(best);
  std::optional<int> emitted;
  if (label != blank_ && label != previous_) {
    hypothesis_.push_back(label);
    emitted = label;
  }
  previous_ = label;
  return emitted;
}

std::vector<FusionToken> fuse(std::span<const int> ref, std::span<const int> ctc_hyp, std::span<const double> sc_probs,
                              double threshold) {
  if (sc_probs.size() != ref.size())
    throw ContractError("fuse: " + std::to_string(sc_probs.size()) + " classifier outputs for " +
                        std::to_string(ref.size()) + " reference phones");
  std::vector<FusionToken> out;
  for (const EditOp& op : needleman_wunsch(ref, ctc_hyp).ops) {
    if (op.kind == EditKind::kInsert) {
      out.push_back({ctc_hyp[*op.hyp_index], DecisionSource::kCtc, std::nullopt});
      continue;
    }
    const Index r = *op.ref_index;
    if (sc_probs[r] > threshold) {
      out.push_back({PhoneSet::kSerr, DecisionSource::kClassifierOverride, r});
    } else if (op.kind != EditKind::kDelete) {
      out.push_back({ctc_hyp[*op.hyp_index], DecisionSource::kCtc, r});
    }
  }
  return out;
}

std::vector<int> reference_decisions(std::span<const int> ref, std::span<const int> hyp,
                                     std::optional<std::span<const double>> sc_probs, double threshold) {
  if (sc_probs && sc_probs->size() != ref.size())
    throw ContractError("classifier outputs do not match the reference length");
  std::vector<int> out(ref.size(), PhoneSet::kDel);
  for (const EditOp& op : needleman_wunsch(ref, hyp).ops) {
    if (!op.ref_index) continue;
    const Index r = *op.ref_index;
    if (sc_probs && (*sc_probs)[r] > threshold) out[r] = PhoneSet::kSerr;
    else if (op.hyp_index) out[r] = hyp[*op.hyp_index];
  }
  return out;
}

std::vector<int> fusion_phones(std::span<const FusionToken> tokens) {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const FusionToken& t : tokens) out.push_back(t.phone);
  return out;
}

}  // namespace smdd
