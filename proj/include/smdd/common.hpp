// smdd/common.hpp

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

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace smdd {

/// Dense row-major matrix over an arbitrary scalar. Every sequence in the
/// model is stored as (positions x features).
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic, Eigen::RowMajor>;

using Matrix = MatrixX<double>;
using RowVector = RowVectorX<double>;
using Vector = Eigen::VectorXd;
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Operation is not valid in the object's current state.
class StateError : public Error {
 public:
  using Error::Error;
};

class VocabularyError : public Error {
 public:
  using Error::Error;
};

class LabelError : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk container.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Parameter container is well-formed but does not match the model.
class LoadError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The CTC target cannot be emitted in the available number of frames.
class InfeasibleTargetError : public Error {
 public:
  using Error::Error;
};

/// Pearson correlation with a zero-variance side.
class UndefinedCorrelationError : public Error {
 public:
  using Error::Error;
};

inline std::string shape_str(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename Derived>
std::string shape_str(const Eigen::DenseBase<Derived>& m) {
  return shape_str(m.rows(), m.cols());
}

}  // namespace smdd
