// smdd/tensor.hpp

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

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <unordered_map>
#include <vector>

#include "smdd/common.hpp"
#include "smdd/rng.hpp"

namespace smdd {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
/// lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  /// Accumulated gradient, or an all-zero matrix when none reached this node.
  Matrix grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records operations in execution order for reverse-mode differentiation.
/// A tape and its values are confined to one thread; independent tapes may
/// run concurrently. With recording off, ops only compute values.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf that receives a gradient.
  Var variable(Matrix value);
  /// Leaf bound to a model parameter. Repeated calls with the same matrix
  /// return the same node, so gradients from every use are summed.
  Var param(const Matrix& value);

  /// Appends an op result. The backward rule is kept only when recording and
  /// some input requires a gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Matrix value, std::span<const Var> inputs, BackwardFn backward);

  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
    } else {
      n.grad += g;
    }
  }

  /// Runs every recorded backward rule in reverse order starting from a 1x1
  /// loss. Leaves off the loss path end up with zero gradients.
  void backward(const Var& loss);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  Matrix grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient reaching a parameter bound with param(), or nullptr.
  const Matrix* param_grad(const Matrix& param) const;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  void set_dropout(double rate, Rng* rng) {
    dropout_rate_ = rate;
    rng_ = rng;
  }
  double dropout_rate() const { return rng_ ? dropout_rate_ : 0.0; }
  Rng* rng() const { return rng_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };

  Var push(Matrix value, bool requires_grad, BackwardFn backward);

  std::deque<Node> nodes_;
  std::unordered_map<const Matrix*, std::size_t> params_;
  bool record_;
  double dropout_rate_ = 0.0;
  Rng* rng_ = nullptr;
};

enum class Axis { kRows = 0, kCols = 1 };

/// Strided 1-D convolution over the frame axis. Output j reads input frames
/// [stride*j - left_pad, stride*j - left_pad + kernel); frames outside the
/// sequence read as zero. right_context() is how far the last tap reaches
/// past the stride window of output j.
struct Conv1dGeometry {
  int kernel = 1;
  int stride = 1;
  int left_pad = 0;

  int right_context() const { return kernel - stride - left_pad; }
  Index output_length(Index frames) const { return (frames + stride - 1) / stride; }
  Index first_tap(Index j) const { return stride * j - left_pad; }
  Index last_tap(Index j) const { return first_tap(j) + kernel - 1; }
  void validate() const;
};

/// Gathers the receptive field of output j into one row (kernel * dim wide),
/// reading zeros outside [0, valid_frames).
RowVector conv_window(const Eigen::Ref<const Matrix>& input, Index valid_frames, Index j, const Conv1dGeometry& geom);

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// Adds a 1 x cols row to every row of `a`.
Var add_row(const Var& a, const Var& row);
Var relu(const Var& a);
Var gelu(const Var& a);
Var sigmoid(const Var& a);
Var transpose(const Var& a);
Var concat(std::span<const Var> parts, Axis axis);
Var slice_cols(const Var& a, Index start, Index count);
Var slice_rows(const Var& a, Index start, Index count);
Var layer_norm(const Var& x, const Var& gain, const Var& bias);
/// axis = kCols normalizes each row; kRows normalizes each column.
Var softmax(const Var& x, Axis axis = Axis::kCols);
Var masked_softmax(const Var& x, const BoolMatrix& allowed);
Var log_softmax(const Var& x);
/// `weight` is (kernel * in_dim) x out_dim, tap-major.
Var conv1d(const Var& x, const Var& weight, const Conv1dGeometry& geom);
Var sum(const Var& a);
/// Inverted dropout using the tape's rate and generator; identity when the
/// tape has no dropout configured.
Var dropout(const Var& a);
/// Wraps an externally computed scalar loss of `input` with its gradient.
Var attach_loss(const Var& input, double value, Matrix grad);

}  // namespace smdd
