// smdd/metrics.hpp

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

#include <cmath>
#include <span>
#include <vector>

#include "smdd/common.hpp"

namespace smdd {

/// Per-reference-phone outcome tallies. True rejections are split by whether
/// the diagnosed phone matches what was actually said.
struct MddCounts {
  long ta = 0;
  long fr = 0;
  long fa = 0;
  long tr_correct_diag = 0;
  long tr_error_diag = 0;

  long tr() const { return tr_correct_diag + tr_error_diag; }
  long total() const { return ta + fr + fa + tr(); }

  MddCounts& operator+=(const MddCounts& o) {
    ta += o.ta;
    fr += o.fr;
    fa += o.fa;
    tr_correct_diag += o.tr_correct_diag;
    tr_error_diag += o.tr_error_diag;
    return *this;
  }
  bool operator==(const MddCounts&) const = default;
};

inline MddCounts operator+(MddCounts a, const MddCounts& b) { return a += b; }

/// All three sequences are indexed by reference position. `truth` holds the
/// phone actually pronounced (deletion marker if none), `decision` the
/// system's phone, deletion marker or serr.
MddCounts classify_outcomes(std::span<const int> ref, std::span<const int> truth, std::span<const int> decision);

/// A ratio whose denominator may be zero. Undefined ratios read as 0.
struct Ratio {
  double value = 0.0;
  bool defined = false;
};

Ratio precision(const MddCounts& c);
Ratio recall(const MddCounts& c);
Ratio f1(const MddCounts& c);

/// Total edit distance over total reference length.
double phone_error_rate(std::span<const std::vector<int>> refs, std::span<const std::vector<int>> hyps);

/// Sample Pearson correlation.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar pcc(const Eigen::MatrixBase<DerivedA>& predicted, const Eigen::MatrixBase<DerivedB>& reference) {
  using Scalar = typename DerivedA::Scalar;
  if (predicted.size() != reference.size()) throw ContractError("pcc: sequences differ in length");
  if (predicted.size() < 2) throw ContractError("pcc needs at least two pairs");
  const auto p = predicted.reshaped().array();
  const auto r = reference.reshaped().array().template cast<Scalar>();
  const auto dp = (p - p.mean()).eval();
  const auto dr = (r - r.mean()).eval();
  const Scalar sp = std::sqrt(dp.square().sum()), sr = std::sqrt(dr.square().sum());
  if (sp == Scalar(0) || sr == Scalar(0)) throw UndefinedCorrelationError("pcc: one side has zero variance");
  return (dp * dr).sum() / (sp * sr);
}

}  // namespace smdd
