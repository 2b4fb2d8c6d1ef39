// smdd/align.hpp

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

#include <algorithm>
#include <optional>
#include <span>
#include <vector>

#include "smdd/common.hpp"

namespace smdd {

enum class EditKind { kMatch, kSubstitute, kInsert, kDelete };

/// Match/substitute carry both indices, insert only hyp_index, delete only
/// ref_index.
struct EditOp {
  EditKind kind;
  std::optional<Index> ref_index;
  std::optional<Index> hyp_index;

  bool operator==(const EditOp&) const = default;
};

struct AlignmentResult {
  std::vector<EditOp> ops;
  int total_cost = 0;
};

/// Global alignment under unit substitution / insertion / deletion cost. The
/// backtrace runs from the end and prefers match/substitute, then delete,
/// then insert, so equal-cost alignments resolve the same way every time.
template <typename T>
AlignmentResult needleman_wunsch(std::span<const T> ref, std::span<const T> hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<int> cost((n + 1) * (m + 1));
  auto at = [m, &cost](std::size_t i, std::size_t j) -> int& { return cost[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      at(i, j) = std::min({at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1), at(i - 1, j) + 1, at(i, j - 1) + 1});

  AlignmentResult r;
  r.total_cost = at(n, m);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : 1)) {
        r.ops.push_back({same ? EditKind::kMatch : EditKind::kSubstitute, static_cast<Index>(i - 1),
                         static_cast<Index>(j - 1)});
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      r.ops.push_back({EditKind::kDelete, static_cast<Index>(i - 1), std::nullopt});
      --i;
    } else {
      r.ops.push_back({EditKind::kInsert, std::nullopt, static_cast<Index>(j - 1)});
      --j;
    }
  }
  std::reverse(r.ops.begin(), r.ops.end());
  return r;
}

inline AlignmentResult needleman_wunsch(const std::vector<int>& ref, const std::vector<int>& hyp) {
  return needleman_wunsch(std::span<const int>(ref), std::span<const int>(hyp));
}

/// Per-reference training targets: the phone actually produced at each
/// reference position (the deletion marker if none) and a 0/1 error flag.
/// Phones the speaker inserted have no reference position and no target.
struct Targets {
  std::vector<int> phones;
  std::vector<double> errors;
};

Targets derive_targets(std::span<const int> ref, std::span<const int> pronounced);

/// Best-path CTC collapse: merge adjacent repeats, then drop blanks.
std::vector<int> collapse_ctc(std::span<const int> frame_labels, int blank);

/// Incremental greedy CTC decoding. Each frame's decision depends only on
/// that frame and the previous label, so the emitted prefix never changes.
class GreedyCtcDecoder {
 public:
  explicit GreedyCtcDecoder(int blank) : blank_(blank) {}

  /// Returns the newly decoded label for this frame, if any.
  std::optional<int> push(const Eigen::Ref<const RowVector>& log_probs);
  const std::vector<int>& hypothesis() const { return hypothesis_; }

 private:
  int blank_;
  int previous_ = -1;
  std::vector<int> hypothesis_;
};

enum class DecisionSource { kCtc, kClassifierOverride };

struct FusionToken {
  int phone;  // PhoneSet id, or PhoneSet::kSerr
  DecisionSource source;
  std::optional<Index> ref_index;

  bool operator==(const FusionToken&) const = default;
};

/// Combines the streaming CTC hypothesis with per-reference classifier
/// probabilities. Reference positions whose probability exceeds `threshold`
/// become serr; everything else follows the CTC alignment, including
/// speaker insertions (kept) and CTC deletions (dropped).
std::vector<FusionToken> fuse(std::span<const int> ref, std::span<const int> ctc_hyp, std::span<const double> sc_probs,
                              double threshold = 0.5);

/// System decision at each reference position: the aligned hypothesis phone,
/// PhoneSet::kDel when the hypothesis skipped it, or PhoneSet::kSerr when the
/// classifier overrides (only when `sc_probs` is given).
std::vector<int> reference_decisions(std::span<const int> ref, std::span<const int> hyp,
                                     std::optional<std::span<const double>> sc_probs, double threshold = 0.5);

std::vector<int> fusion_phones(std::span<const FusionToken> tokens);

}  // namespace smdd
