// smdd/ctc.hpp

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
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "smdd/common.hpp"

namespace smdd {

template <typename Scalar>
struct CtcResult {
  Scalar loss;               // -log P(target | frames)
  MatrixX<Scalar> grad;      // d loss / d log_probs, frames x classes
};

namespace detail {

template <typename Scalar>
Scalar log_add(Scalar a, Scalar b) {
  constexpr Scalar kNegInf = -std::numeric_limits<Scalar>::infinity();
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const Scalar hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

}  // namespace detail

/// Number of frames the target needs: one per label plus a separating blank
/// between each repeated pair.
inline Index ctc_min_frames(std::span<const int> target) {
  Index n = static_cast<Index>(target.size());
  for (std::size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++n;
  return n;
}

/// Connectionist temporal classification loss by the forward-backward
/// recursion in log space. `log_probs` rows are per-frame log posteriors over
/// classes (blank included); the gradient is taken with respect to them
/// directly, i.e. minus the label occupancy of each (frame, class).
template <typename Derived>
CtcResult<typename Derived::Scalar> ctc_loss(const Eigen::MatrixBase<Derived>& log_probs, std::span<const int> target,
                                             int blank) {
  using Scalar = typename Derived::Scalar;
  constexpr Scalar kNegInf = -std::numeric_limits<Scalar>::infinity();
  const Index frames = log_probs.rows(), classes = log_probs.cols();
  for (int label : target)
    if (label < 0 || label >= classes || label == blank)
      throw LabelError("ctc target label " + std::to_string(label) + " invalid for " + std::to_string(classes) +
                       " classes with blank " + std::to_string(blank));
  if (ctc_min_frames(target) > frames)
    throw InfeasibleTargetError("ctc target of length " + std::to_string(target.size()) + " needs " +
                                std::to_string(ctc_min_frames(target)) + " frames, got " + std::to_string(frames));

  CtcResult<Scalar> r{Scalar(0), MatrixX<Scalar>::Zero(frames, classes)};
  if (frames == 0) return r;

  // Extended label sequence: blank, l1, blank, l2, ..., blank.
  const Index states = 2 * static_cast<Index>(target.size()) + 1;
  std::vector<int> ext(states, blank);
  for (std::size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];
  auto can_skip = [&ext, blank](Index s) { return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]; };

  MatrixX<Scalar> alpha = MatrixX<Scalar>::Constant(frames, states, kNegInf);
  MatrixX<Scalar> beta = MatrixX<Scalar>::Constant(frames, states, kNegInf);
  alpha(0, 0) = log_probs(0, ext[0]);
  if (states > 1) alpha(0, 1) = log_probs(0, ext[1]);
  for (Index t = 1; t < frames; ++t) {
    for (Index s = 0; s < states; ++s) {
      Scalar a = alpha(t - 1, s);
      if (s >= 1) a = detail::log_add(a, alpha(t - 1, s - 1));
      if (can_skip(s)) a = detail::log_add(a, alpha(t - 1, s - 2));
      if (a != kNegInf) alpha(t, s) = a + log_probs(t, ext[s]);
    }
  }
  beta(frames - 1, states - 1) = log_probs(frames - 1, ext[states - 1]);
  if (states > 1) beta(frames - 1, states - 2) = log_probs(frames - 1, ext[states - 2]);
  for (Index t = frames - 1; t-- > 0;) {
    for (Index s = 0; s < states; ++s) {
      Scalar b = beta(t + 1, s);
      if (s + 1 < states) b = detail::log_add(b, beta(t + 1, s + 1));
      if (s + 2 < states && can_skip(s + 2)) b = detail::log_add(b, beta(t + 1, s + 2));
      if (b != kNegInf) beta(t, s) = b + log_probs(t, ext[s]);
    }
  }

  Scalar log_p = alpha(frames - 1, states - 1);
  if (states > 1) log_p = detail::log_add(log_p, alpha(frames - 1, states - 2));
  if (log_p == kNegInf) throw InfeasibleTargetError("ctc target has zero probability under the posteriors");
  r.loss = -log_p;

  for (Index t = 0; t < frames; ++t) {
    for (Index s = 0; s < states; ++s) {
      if (alpha(t, s) == kNegInf || beta(t, s) == kNegInf) continue;
      const Scalar occupancy = std::exp(alpha(t, s) + beta(t, s) - log_probs(t, ext[s]) - log_p);
      r.grad(t, ext[s]) -= occupancy;
    }
  }
  return r;
}

}  // namespace smdd
