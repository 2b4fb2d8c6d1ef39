// src/nn.cpp

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
#include "smdd/nn.hpp"

#include <cmath>

#include "smdd/numeric.hpp"

namespace smdd {

void AttentionConfig::validate() const {
  if (num_heads < 1 || head_dim < 1 || model_dim < 1 || ffn_dim < 1)
    throw ConfigError("attention sizes must be positive");
  if (inner_dim() != model_dim)
    throw ConfigError("heads x head_dim = " + std::to_string(inner_dim()) + " but model_dim = " +
                      std::to_string(model_dim));
}

LinearParams init_linear(Rng& rng, int in, int out) {
  return {rng.normal_matrix(in, out, 1.0 / std::sqrt(static_cast<double>(in))), Matrix::Zero(1, out)};
}

LayerNormParams init_layer_norm(int dim) { return {Matrix::Ones(1, dim), Matrix::Zero(1, dim)}; }

AttentionParams init_attention(Rng& rng, const AttentionConfig& cfg) {
  const double s_in = 1.0 / std::sqrt(static_cast<double>(cfg.model_dim));
  const double s_out = 1.0 / std::sqrt(static_cast<double>(cfg.inner_dim()));
  AttentionParams p;
  p.wq = rng.normal_matrix(cfg.model_dim, cfg.inner_dim(), s_in);
  p.wk = rng.normal_matrix(cfg.model_dim, cfg.inner_dim(), s_in);
  p.wv = rng.normal_matrix(cfg.model_dim, cfg.inner_dim(), s_in);
  p.wo = rng.normal_matrix(cfg.inner_dim(), cfg.model_dim, s_out);
  p.bo = Matrix::Zero(1, cfg.model_dim);
  return p;
}

TransformerLayerParams init_transformer_layer(Rng& rng, const AttentionConfig& cfg) {
  TransformerLayerParams p;
  p.ln_attn = init_layer_norm(cfg.model_dim);
  p.attn = init_attention(rng, cfg);
  p.ln_ffn = init_layer_norm(cfg.model_dim);
  p.ffn_in = init_linear(rng, cfg.model_dim, cfg.ffn_dim);
  p.ffn_out = init_linear(rng, cfg.ffn_dim, cfg.model_dim);
  return p;
}

ConvBlockParams init_conv_block(Rng& rng, const AttentionConfig& cfg, int in_dim, const Conv1dGeometry& geom) {
  geom.validate();
  ConvBlockParams p;
  p.geometry = geom;
  p.conv = init_linear(rng, geom.kernel * in_dim, cfg.model_dim);
  p.layer = init_transformer_layer(rng, cfg);
  return p;
}

CoupledAttentionParams init_coupled_attention(Rng& rng, const AttentionConfig& cfg) {
  const double s_in = 1.0 / std::sqrt(static_cast<double>(cfg.model_dim));
  const double s_out = 1.0 / std::sqrt(static_cast<double>(cfg.inner_dim()));
  CoupledAttentionParams p;
  p.wq = rng.normal_matrix(cfg.model_dim, cfg.inner_dim(), s_in);
  p.wk = rng.normal_matrix(cfg.model_dim, cfg.inner_dim(), s_in);
  p.wv = rng.normal_matrix(cfg.model_dim, cfg.inner_dim(), s_in);
  p.wqv = rng.normal_matrix(cfg.model_dim, cfg.inner_dim(), s_in);
  p.wo_speech = Matrix::Zero(cfg.inner_dim(), cfg.model_dim);
  p.wo_text = rng.normal_matrix(cfg.inner_dim(), cfg.model_dim, s_out);
  return p;
}

BoolMatrix causal_mask(Index n) {
  BoolMatrix m(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) m(i, j) = j <= i;
  return m;
}

Var linear(const Var& x, const LinearParams& p) {
  Tape& t = x.tape();
  return add_row(matmul(x, t.param(p.weight)), t.param(p.bias));
}

Var multi_head_attention(const Var& query, const Var& memory, const AttentionParams& p, const AttentionConfig& cfg,
                         const BoolMatrix* allowed) {
  if (query.cols() != cfg.model_dim || memory.cols() != cfg.model_dim)
    throw ShapeError("attention inputs must be model_dim wide");
  if (memory.rows() == 0) throw ContractError("attention over an empty memory");
  Tape& t = query.tape();
  const Var q = matmul(query, t.param(p.wq));
  const Var k = matmul(memory, t.param(p.wk));
  const Var v = matmul(memory, t.param(p.wv));
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));
  std::vector<Var> heads;
  heads.reserve(cfg.num_heads);
  for (int h = 0; h < cfg.num_heads; ++h) {
    const Var qh = slice_cols(q, h * cfg.head_dim, cfg.head_dim);
    const Var kh = slice_cols(k, h * cfg.head_dim, cfg.head_dim);
    const Var vh = slice_cols(v, h * cfg.head_dim, cfg.head_dim);
    const Var logits = scale(matmul(qh, transpose(kh)), inv_sqrt_m);
    const Var weights = allowed ? masked_softmax(logits, *allowed) : softmax(logits);
    heads.push_back(matmul(weights, vh));
  }
  return add_row(matmul(concat(heads, Axis::kCols), t.param(p.wo)), t.param(p.bo));
}

Var transformer_layer(const Var& x, const TransformerLayerParams& p, const AttentionConfig& cfg, AttentionMask mask) {
  Tape& t = x.tape();
  const Var a = layer_norm(x, t.param(p.ln_attn.gain), t.param(p.ln_attn.bias));
  BoolMatrix causal;
  if (mask == AttentionMask::kCausal) causal = causal_mask(x.rows());
  const Var attn = multi_head_attention(a, a, p.attn, cfg, mask == AttentionMask::kCausal ? &causal : nullptr);
  const Var h = add(x, dropout(attn));
  const Var b = layer_norm(h, t.param(p.ln_ffn.gain), t.param(p.ln_ffn.bias));
  const Var ff = linear(gelu(linear(b, p.ffn_in)), p.ffn_out);
  return add(h, dropout(ff));
}

Var conv_subsample_block(const Var& x, const ConvBlockParams& p, const AttentionConfig& cfg) {
  Tape& t = x.tape();
  Var y = add_row(conv1d(x, t.param(p.conv.weight), p.geometry), t.param(p.conv.bias));
  if (y.rows() == 0) return y;
  y = add(y, t.constant(sinusoidal_positions(0, y.rows(), cfg.model_dim)));
  return transformer_layer(y, p.layer, cfg, AttentionMask::kCausal);
}

Var text_attention_from_scores(std::span<const Var> scores, const Var& frames_full, const CoupledAttentionParams& p,
                               const AttentionConfig& cfg, std::vector<Var>* text_weights) {
  if (scores.size() != static_cast<std::size_t>(cfg.num_heads)) throw ContractError("one score map per head");
  Tape& t = frames_full.tape();
  const Index text_len = scores.front().cols();
  if (frames_full.rows() == 0) return t.constant(Matrix::Zero(text_len, cfg.model_dim));
  for (const Var& s : scores)
    if (s.rows() != frames_full.rows() || s.cols() != text_len) throw ShapeError("score map does not match frames");
  const Var fv = matmul(frames_full, t.param(p.wqv));
  std::vector<Var> heads;
  for (int h = 0; h < cfg.num_heads; ++h) {
    const Var w = softmax(transpose(scores[h]), Axis::kCols);
    if (text_weights) text_weights->push_back(w);
    heads.push_back(matmul(w, slice_cols(fv, h * cfg.head_dim, cfg.head_dim)));
  }
  return matmul(concat(heads, Axis::kCols), t.param(p.wo_text));
}

CoupledAttentionResult coupled_cross_attention(const Var& frames, const Var& text, const Var* frames_full,
                                               const CoupledAttentionParams& p, const AttentionConfig& cfg) {
  if (text.rows() == 0) throw ContractError("coupled attention needs a nonempty reference");
  if (frames.cols() != cfg.model_dim || text.cols() != cfg.model_dim)
    throw ShapeError("coupled attention inputs must be model_dim wide");
  Tape& t = frames.tape();
  CoupledAttentionResult r;
  const Var k = matmul(text, t.param(p.wk));
  const Var v = matmul(text, t.param(p.wv));
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));
  std::vector<Var> heads;
  if (frames.rows() > 0) {
    const Var q = matmul(frames, t.param(p.wq));
    for (int h = 0; h < cfg.num_heads; ++h) {
      const Var qh = slice_cols(q, h * cfg.head_dim, cfg.head_dim);
      const Var kh = slice_cols(k, h * cfg.head_dim, cfg.head_dim);
      const Var score = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt_m), Axis::kCols);
      r.scores.push_back(score);
      heads.push_back(matmul(score, slice_cols(v, h * cfg.head_dim, cfg.head_dim)));
    }
    r.speech = matmul(concat(heads, Axis::kCols), t.param(p.wo_speech));
  } else {
    for (int h = 0; h < cfg.num_heads; ++h) r.scores.push_back(t.constant(Matrix::Zero(0, text.rows())));
    r.speech = t.constant(Matrix::Zero(0, cfg.model_dim));
  }
  if (frames_full) r.text = text_attention_from_scores(r.scores, *frames_full, p, cfg, &r.text_weights);
  return r;
}

// ---------------------------------------------------------------------------

void RowBuffer::append(const Eigen::Ref<const RowVector>& row) {
  if (data_.cols() == 0 && count_ == 0) data_.resize(0, row.cols());
  if (row.cols() != data_.cols()) throw ShapeError("row buffer width mismatch");
  if (count_ == data_.rows()) data_.conservativeResize(std::max<Index>(8, 2 * data_.rows()), Eigen::NoChange);
  data_.row(count_++) = row;
}

RowVector linear_row(const Eigen::Ref<const RowVector>& x, const LinearParams& p) {
  return x * p.weight + p.bias;
}

CausalTransformerStream::CausalTransformerStream(const TransformerLayerParams& p, const AttentionConfig& cfg)
    : p_(&p), cfg_(cfg), keys_(cfg.inner_dim()), values_(cfg.inner_dim()) {}

RowVector CausalTransformerStream::step(const Eigen::Ref<const RowVector>& x) {
  const AttentionParams& ap = p_->attn;
  const RowVector a = layer_norm_rows(x, p_->ln_attn.gain, p_->ln_attn.bias);
  const RowVector q = a * ap.wq;
  keys_.append(a * ap.wk);
  values_.append(a * ap.wv);
  const auto keys = keys_.view();
  const auto values = values_.view();
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(cfg_.head_dim));
  RowVector heads(cfg_.inner_dim());
  for (int h = 0; h < cfg_.num_heads; ++h) {
    const Index off = h * cfg_.head_dim;
    const RowVector logits =
        (q.segment(off, cfg_.head_dim) * keys.middleCols(off, cfg_.head_dim).transpose()) * inv_sqrt_m;
    const RowVector w = softmax_rows(logits);
    heads.segment(off, cfg_.head_dim) = w * values.middleCols(off, cfg_.head_dim);
  }
  const RowVector h = x + (heads * ap.wo + ap.bo);
  const RowVector b = layer_norm_rows(h, p_->ln_ffn.gain, p_->ln_ffn.bias);
  const RowVector inner = linear_row(b, p_->ffn_in).unaryExpr([](double v) { return gelu(v); });
  return h + linear_row(inner, p_->ffn_out);
}

ConvBlockStream::ConvBlockStream(const ConvBlockParams& p, const AttentionConfig& cfg, Index input_dim)
    : p_(&p), cfg_(cfg), input_(input_dim), layer_(p.layer, cfg) {}

RowVector ConvBlockStream::emit_next(Index valid_frames) {
  const RowVector window = conv_window(input_.view(), valid_frames, emitted_, p_->geometry);
  RowVector y = linear_row(window, p_->conv);
  y += sinusoidal_positions(emitted_, 1, cfg_.model_dim);
  ++emitted_;
  return layer_.step(y);
}

Matrix ConvBlockStream::push(const Eigen::Ref<const Matrix>& frames) {
  if (flushed_) throw StateError("push after flush");
  if (frames.cols() != input_.cols())
    throw ShapeError("conv block expects " + std::to_string(input_.cols()) + "-dim frames");
  RowBuffer out(cfg_.model_dim);
  for (Index i = 0; i < frames.rows(); ++i) {
    input_.append(frames.row(i));
    while (p_->geometry.last_tap(emitted_) < input_.rows()) out.append(emit_next(input_.rows()));
  }
  return out.to_matrix();
}

Matrix ConvBlockStream::flush() {
  if (flushed_) throw StateError("flush called twice");
  flushed_ = true;
  RowBuffer out(cfg_.model_dim);
  const Index total = p_->geometry.output_length(input_.rows());
  while (emitted_ < total) out.append(emit_next(input_.rows()));
  return out.to_matrix();
}

SpeechAttentionStream::SpeechAttentionStream(const CoupledAttentionParams& p, const AttentionConfig& cfg,
                                             const Matrix& text)
    : p_(&p), cfg_(cfg), keys_(text * p.wk), values_(text * p.wv) {
  if (text.rows() == 0) throw ContractError("coupled attention needs a nonempty reference");
}

SpeechAttentionStream::Step SpeechAttentionStream::step(const Eigen::Ref<const RowVector>& frame) const {
  const RowVector q = frame * p_->wq;
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(cfg_.head_dim));
  Step s;
  RowVector heads(cfg_.inner_dim());
  for (int h = 0; h < cfg_.num_heads; ++h) {
    const Index off = h * cfg_.head_dim;
    const RowVector logits =
        (q.segment(off, cfg_.head_dim) * keys_.middleCols(off, cfg_.head_dim).transpose()) * inv_sqrt_m;
    RowVector w = softmax_rows(logits);
    heads.segment(off, cfg_.head_dim) = w * values_.middleCols(off, cfg_.head_dim);
    s.score_rows.push_back(std::move(w));
  }
  s.speech = heads * p_->wo_speech;
  return s;
}

}  // namespace smdd
