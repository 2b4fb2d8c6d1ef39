// smdd/numeric.hpp

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
#include <limits>
#include <numbers>

#include "smdd/common.hpp"

// Scalar-generic kernels shared by the autodiff graph and the incremental
// (streaming) inference path. Both routes call these so they agree up to
// floating summation order.

namespace smdd {

template <typename Derived>
using PlainOf = MatrixX<typename Derived::Scalar>;

/// Row-wise softmax with max subtraction.
template <typename Derived>
PlainOf<Derived> softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  PlainOf<Derived> out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const Scalar mx = x.row(i).maxCoeff();
    out.row(i) = (x.row(i).array() - mx).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

/// Row-wise softmax restricted to positions where `allowed` is true; other
/// positions get exactly zero. Rows with no allowed position are rejected.
template <typename Derived>
PlainOf<Derived> masked_softmax_rows(const Eigen::MatrixBase<Derived>& x, const BoolMatrix& allowed) {
  using Scalar = typename Derived::Scalar;
  if (allowed.rows() != x.rows() || allowed.cols() != x.cols())
    throw ShapeError("mask " + shape_str(allowed) + " vs scores " + shape_str(x));
  PlainOf<Derived> out = PlainOf<Derived>::Zero(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    Scalar mx = -std::numeric_limits<Scalar>::infinity();
    for (Index j = 0; j < x.cols(); ++j)
      if (allowed(i, j)) mx = std::max(mx, x(i, j));
    if (!std::isfinite(static_cast<double>(mx)))
      throw ContractError("attention row " + std::to_string(i) + " is fully masked");
    Scalar total = 0;
    for (Index j = 0; j < x.cols(); ++j) {
      if (!allowed(i, j)) continue;
      out(i, j) = std::exp(x(i, j) - mx);
      total += out(i, j);
    }
    out.row(i) /= total;
  }
  return out;
}

template <typename Derived>
PlainOf<Derived> log_softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  PlainOf<Derived> out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const Scalar mx = x.row(i).maxCoeff();
    const Scalar lse = mx + std::log((x.row(i).array() - mx).exp().sum());
    out.row(i) = (x.row(i).array() - lse).matrix();
  }
  return out;
}

inline constexpr double kLayerNormEps = 1e-5;

/// Per-row normalization to zero mean / unit variance followed by an affine
/// map. `gain` and `bias` are 1 x cols.
template <typename Derived, typename G, typename B>
PlainOf<Derived> layer_norm_rows(const Eigen::MatrixBase<Derived>& x, const Eigen::MatrixBase<G>& gain,
                                 const Eigen::MatrixBase<B>& bias) {
  using Scalar = typename Derived::Scalar;
  PlainOf<Derived> out(x.rows(), x.cols());
  const Scalar n = static_cast<Scalar>(x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const Scalar mean = x.row(i).sum() / n;
    const auto centered = (x.row(i).array() - mean).eval();
    const Scalar var = centered.square().sum() / n;
    const Scalar inv = Scalar(1) / std::sqrt(var + Scalar(kLayerNormEps));
    out.row(i) = (centered * inv * gain.array() + bias.array()).matrix();
  }
  return out;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Sinusoidal absolute position code for positions [first, first + count).
inline Matrix sinusoidal_positions(Index first, Index count, Index dim) {
  Matrix pe(count, dim);
  for (Index p = 0; p < count; ++p) {
    const double pos = static_cast<double>(first + p);
    for (Index k = 0; k < dim; ++k) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (k / 2)) / static_cast<double>(dim));
      pe(p, k) = (k % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
    }
  }
  return pe;
}

}  // namespace smdd
