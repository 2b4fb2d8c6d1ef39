// src/tensor.cpp

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
#include "smdd/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "smdd/numeric.hpp"

namespace smdd {

const Matrix& Var::value() const { return tape_->value(id_); }
Matrix Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::push(Matrix value, bool requires_grad, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (record_ && requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::variable(Matrix value) { return push(std::move(value), record_, nullptr); }

Var Tape::param(const Matrix& value) {
  if (auto it = params_.find(&value); it != params_.end()) return Var(this, it->second);
  Var v = push(value, record_, nullptr);
  params_.emplace(&value, v.id());
  return v;
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> inputs, BackwardFn backward) {
  bool any = false;
  for (const Var& v : inputs) {
    if (v.tape_ != this) throw ContractError("op mixes values from different tapes");
    any = any || nodes_[v.id_].requires_grad;
  }
  return push(std::move(value), any, std::move(backward));
}

Matrix Tape::grad(std::size_t id) const {
  const Node& n = nodes_[id];
  if (n.has_grad) return n.grad;
  return Matrix::Zero(n.value.rows(), n.value.cols());
}

const Matrix* Tape::param_grad(const Matrix& param) const {
  auto it = params_.find(&param);
  if (it == params_.end() || !nodes_[it->second].has_grad) return nullptr;
  return &nodes_[it->second].grad;
}

void Tape::backward(const Var& loss) {
  if (loss.tape_ != this) throw ContractError("loss belongs to another tape");
  if (loss.rows() != 1 || loss.cols() != 1)
    throw ContractError("backward needs a scalar loss, got " + shape_str(loss.value()));
  if (!record_) throw StateError("backward on a tape that does not record");
  accumulate(loss.id_, Matrix::Ones(1, 1));
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    // Rules only accumulate into nodes with smaller ids.
    n.backward(*this, n.grad);
  }
  for (Node& n : nodes_) {
    if (n.requires_grad && !n.has_grad) {
      n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
      n.has_grad = true;
    }
  }
}

void Conv1dGeometry::validate() const {
  if (kernel < 1 || stride < 1 || left_pad < 0 || right_context() < 0)
    throw ContractError("conv geometry kernel=" + std::to_string(kernel) + " stride=" + std::to_string(stride) +
                        " left_pad=" + std::to_string(left_pad) + " leaves negative right context");
}

RowVector conv_window(const Eigen::Ref<const Matrix>& input, Index valid_frames, Index j, const Conv1dGeometry& geom) {
  const Index dim = input.cols();
  RowVector row = RowVector::Zero(geom.kernel * dim);
  for (int tap = 0; tap < geom.kernel; ++tap) {
    const Index src = geom.first_tap(j) + tap;
    if (src >= 0 && src < valid_frames) row.segment(tap * dim, dim) = input.row(src);
  }
  return row;
}

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": " + shape_str(a.value()) + " vs " + shape_str(b.value()));
}

template <typename F, typename G>
Var unary(const Var& a, F f, G df) {
  Matrix out = a.value().unaryExpr(f);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, df](Tape& t, const Matrix& g) {
    t.accumulate(ia, (g.array() * t.value(ia).unaryExpr(df).array()).matrix());
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: " + shape_str(a.value()) + " x " + shape_str(b.value()));
  Matrix out = a.value() * b.value();
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  const std::size_t ia = a.id(), ib = b.id();
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var scale(const Var& a, double s) {
  const std::size_t ia = a.id();
  return a.tape().record(a.value() * s, {a}, [ia, s](Tape& t, const Matrix& g) { t.accumulate(ia, g * s); });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw ShapeError("add_row: " + shape_str(a.value()) + " + " + shape_str(row.value()));
  Matrix out = a.value().rowwise() + row.value().row(0);
  const std::size_t ia = a.id(), ir = row.id();
  return a.tape().record(std::move(out), {a, row}, [ia, ir](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ir, g.colwise().sum());
  });
}

Var relu(const Var& a) {
  return unary(a, [](double x) { return x > 0 ? x : 0.0; }, [](double x) { return x > 0 ? 1.0 : 0.0; });
}

Var gelu(const Var& a) {
  return unary(a, [](double x) { return smdd::gelu(x); }, [](double x) { return gelu_grad(x); });
}

Var sigmoid(const Var& a) {
  return unary(
      a, [](double x) { return smdd::sigmoid(x); },
      [](double x) {
        const double s = smdd::sigmoid(x);
        return s * (1.0 - s);
      });
}

Var transpose(const Var& a) {
  const std::size_t ia = a.id();
  return a.tape().record(a.value().transpose(), {a},
                         [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g.transpose()); });
}

Var concat(std::span<const Var> parts, Axis axis) {
  if (parts.empty()) throw ContractError("concat of zero parts");
  Index rows = 0, cols = 0;
  for (const Var& p : parts) {
    if (axis == Axis::kCols) {
      if (p.rows() != parts[0].rows()) throw ShapeError("concat(cols): row counts differ");
      cols += p.cols();
    } else {
      if (p.cols() != parts[0].cols()) throw ShapeError("concat(rows): column counts differ");
      rows += p.rows();
    }
  }
  if (axis == Axis::kCols) rows = parts[0].rows();
  else cols = parts[0].cols();

  Matrix out(rows, cols);
  std::vector<std::pair<std::size_t, Index>> pieces;  // (id, offset)
  Index offset = 0;
  for (const Var& p : parts) {
    if (axis == Axis::kCols) out.middleCols(offset, p.cols()) = p.value();
    else out.middleRows(offset, p.rows()) = p.value();
    pieces.emplace_back(p.id(), offset);
    offset += axis == Axis::kCols ? p.cols() : p.rows();
  }
  return parts[0].tape().record(std::move(out), parts, [pieces, axis](Tape& t, const Matrix& g) {
    for (const auto& [id, off] : pieces) {
      if (!t.requires_grad(id)) continue;
      const Matrix& v = t.value(id);
      if (axis == Axis::kCols) t.accumulate(id, g.middleCols(off, v.cols()));
      else t.accumulate(id, g.middleRows(off, v.rows()));
    }
  });
}

Var slice_cols(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw ShapeError("slice_cols [" + std::to_string(start) + ", +" + std::to_string(count) + ") of " +
                     shape_str(a.value()));
  const std::size_t ia = a.id();
  const Index rows = a.rows(), cols = a.cols();
  return a.tape().record(a.value().middleCols(start, count), {a},
                         [ia, start, count, rows, cols](Tape& t, const Matrix& g) {
                           Matrix full = Matrix::Zero(rows, cols);
                           full.middleCols(start, count) = g;
                           t.accumulate(ia, full);
                         });
}

Var slice_rows(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    throw ShapeError("slice_rows [" + std::to_string(start) + ", +" + std::to_string(count) + ") of " +
                     shape_str(a.value()));
  const std::size_t ia = a.id();
  const Index rows = a.rows(), cols = a.cols();
  return a.tape().record(a.value().middleRows(start, count), {a},
                         [ia, start, count, rows, cols](Tape& t, const Matrix& g) {
                           Matrix full = Matrix::Zero(rows, cols);
                           full.middleRows(start, count) = g;
                           t.accumulate(ia, full);
                         });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias) {
  if (gain.rows() != 1 || gain.cols() != x.cols() || bias.rows() != 1 || bias.cols() != x.cols())
    throw ShapeError("layer_norm: gain/bias must be 1x" + std::to_string(x.cols()));
  Matrix out = layer_norm_rows(x.value(), gain.value(), bias.value());
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.tape().record(std::move(out), {x, gain, bias}, [ix, ig, ib](Tape& t, const Matrix& g) {
    const Matrix& xv = t.value(ix);
    const auto gv = t.value(ig).row(0).array();
    const double n = static_cast<double>(xv.cols());
    Matrix dx(xv.rows(), xv.cols());
    RowVector dgain = RowVector::Zero(xv.cols());
    for (Index i = 0; i < xv.rows(); ++i) {
      const double mean = xv.row(i).sum() / n;
      const auto centered = (xv.row(i).array() - mean).eval();
      const double inv = 1.0 / std::sqrt(centered.square().sum() / n + kLayerNormEps);
      const auto xhat = (centered * inv).eval();
      const auto dxhat = (g.row(i).array() * gv).eval();
      dx.row(i) = ((inv / n) * (n * dxhat - dxhat.sum() - xhat * (dxhat * xhat).sum())).matrix();
      dgain.array() += g.row(i).array() * xhat;
    }
    t.accumulate(ix, dx);
    t.accumulate(ig, dgain);
    t.accumulate(ib, g.colwise().sum());
  });
}

namespace {

Matrix softmax_backward(const Matrix& y, const Matrix& g) {
  Matrix dx(y.rows(), y.cols());
  for (Index i = 0; i < y.rows(); ++i) {
    const double dot = y.row(i).dot(g.row(i));
    dx.row(i) = (y.row(i).array() * (g.row(i).array() - dot)).matrix();
  }
  return dx;
}

}  // namespace

Var softmax(const Var& x, Axis axis) {
  if (axis == Axis::kRows) return transpose(softmax(transpose(x), Axis::kCols));
  const std::size_t ix = x.id();
  return x.tape().record(softmax_rows(x.value()), {x}, [ix](Tape& t, const Matrix& g) {
    t.accumulate(ix, softmax_backward(softmax_rows(t.value(ix)), g));
  });
}

Var masked_softmax(const Var& x, const BoolMatrix& allowed) {
  const std::size_t ix = x.id();
  return x.tape().record(masked_softmax_rows(x.value(), allowed), {x}, [ix, allowed](Tape& t, const Matrix& g) {
    t.accumulate(ix, softmax_backward(masked_softmax_rows(t.value(ix), allowed), g));
  });
}

Var log_softmax(const Var& x) {
  const std::size_t ix = x.id();
  return x.tape().record(log_softmax_rows(x.value()), {x}, [ix](Tape& t, const Matrix& g) {
    const Matrix y = softmax_rows(t.value(ix));
    Matrix dx = g;
    for (Index i = 0; i < y.rows(); ++i) dx.row(i) -= y.row(i) * g.row(i).sum();
    t.accumulate(ix, dx);
  });
}

Var conv1d(const Var& x, const Var& weight, const Conv1dGeometry& geom) {
  geom.validate();
  const Index frames = x.rows(), dim = x.cols();
  if (weight.rows() != geom.kernel * dim)
    throw ShapeError("conv1d: weight " + shape_str(weight.value()) + " for kernel " + std::to_string(geom.kernel) +
                     " over dim " + std::to_string(dim));
  const Index out_frames = geom.output_length(frames);
  Matrix windows(out_frames, geom.kernel * dim);
  for (Index j = 0; j < out_frames; ++j) windows.row(j) = conv_window(x.value(), frames, j, geom);
  const std::size_t ix = x.id();
  Var cols = x.tape().record(std::move(windows), {x}, [ix, geom, frames, dim](Tape& t, const Matrix& g) {
    Matrix dx = Matrix::Zero(frames, dim);
    for (Index j = 0; j < g.rows(); ++j) {
      for (int tap = 0; tap < geom.kernel; ++tap) {
        const Index src = geom.first_tap(j) + tap;
        if (src >= 0 && src < frames) dx.row(src) += g.row(j).segment(tap * dim, dim);
      }
    }
    t.accumulate(ix, dx);
  });
  return matmul(cols, weight);
}

Var sum(const Var& a) {
  const std::size_t ia = a.id();
  const Index rows = a.rows(), cols = a.cols();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape().record(std::move(out), {a}, [ia, rows, cols](Tape& t, const Matrix& g) {
    t.accumulate(ia, Matrix::Constant(rows, cols, g(0, 0)));
  });
}

Var dropout(const Var& a) {
  Tape& tape = a.tape();
  const double rate = tape.dropout_rate();
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw ContractError("dropout rate must be below 1");
  Matrix keep(a.rows(), a.cols());
  Rng& rng = *tape.rng();
  for (Index i = 0; i < keep.size(); ++i) keep.data()[i] = rng.uniform() < rate ? 0.0 : 1.0 / (1.0 - rate);
  Var mask = tape.constant(std::move(keep));
  return mul(a, mask);
}

Var attach_loss(const Var& input, double value, Matrix grad) {
  if (grad.rows() != input.rows() || grad.cols() != input.cols())
    throw ShapeError("attach_loss: gradient " + shape_str(grad) + " for input " + shape_str(input.value()));
  Matrix out(1, 1);
  out(0, 0) = value;
  const std::size_t ii = input.id();
  return input.tape().record(std::move(out), {input}, [ii, grad = std::move(grad)](Tape& t, const Matrix& g) {
    t.accumulate(ii, grad * g(0, 0));
  });
}

}  // namespace smdd
