// smdd/nn.hpp

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

#include <concepts>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "smdd/common.hpp"
#include "smdd/rng.hpp"
#include "smdd/tensor.hpp"

namespace smdd {

/// Attention geometry shared by every transformer layer and the coupled
/// cross-attention layer.
struct AttentionConfig {
  int num_heads = 6;
  int head_dim = 64;
  int model_dim = 384;
  int ffn_dim = 1536;

  int inner_dim() const { return num_heads * head_dim; }
  void validate() const;
};

struct LinearParams {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out
};

struct LayerNormParams {
  Matrix gain;
  Matrix bias;
};

/// Projections are stacked over heads: head h owns columns [h*m, (h+1)*m).
struct AttentionParams {
  Matrix wq, wk, wv;  // model_dim x (H*m)
  Matrix wo;          // (H*m) x model_dim
  Matrix bo;          // 1 x model_dim
};

struct TransformerLayerParams {
  LayerNormParams ln_attn;
  AttentionParams attn;
  LayerNormParams ln_ffn;
  LinearParams ffn_in, ffn_out;
};

/// Strided convolution down to model_dim followed by one causal transformer
/// layer.
struct ConvBlockParams {
  Conv1dGeometry geometry;
  LinearParams conv;  // (kernel*in_dim) x model_dim
  TransformerLayerParams layer;
};

/// Two cross-attentions sharing one frame-by-text score map. wq projects
/// incremental frames, wk/wv project the encoded reference, wqv projects the
/// accumulated frames for the text-side attention.
struct CoupledAttentionParams {
  Matrix wq, wk, wv, wqv;  // model_dim x (H*m)
  Matrix wo_speech;        // (H*m) x model_dim
  Matrix wo_text;          // (H*m) x model_dim
};

LinearParams init_linear(Rng& rng, int in, int out);
LayerNormParams init_layer_norm(int dim);
AttentionParams init_attention(Rng& rng, const AttentionConfig& cfg);
TransformerLayerParams init_transformer_layer(Rng& rng, const AttentionConfig& cfg);
ConvBlockParams init_conv_block(Rng& rng, const AttentionConfig& cfg, int in_dim, const Conv1dGeometry& geom);
/// The speech-side output projection starts at zero so the block initially
/// contributes nothing to the residual stream it feeds.
CoupledAttentionParams init_coupled_attention(Rng& rng, const AttentionConfig& cfg);

template <typename P, typename T>
concept ParamsOf = std::same_as<std::remove_const_t<P>, T>;

// Name-keyed traversal of parameter matrices, used by serialization and the
// optimizer. Constness of the struct carries through to the callback.

template <ParamsOf<LinearParams> P, typename F>
void visit_params(P& p, const std::string& prefix, F&& f) {
  f(prefix + ".weight", p.weight);
  f(prefix + ".bias", p.bias);
}

template <ParamsOf<LayerNormParams> P, typename F>
void visit_params(P& p, const std::string& prefix, F&& f) {
  f(prefix + ".gain", p.gain);
  f(prefix + ".bias", p.bias);
}

template <ParamsOf<AttentionParams> P, typename F>
void visit_params(P& p, const std::string& prefix, F&& f) {
  f(prefix + ".wq", p.wq);
  f(prefix + ".wk", p.wk);
  f(prefix + ".wv", p.wv);
  f(prefix + ".wo", p.wo);
  f(prefix + ".bo", p.bo);
}

template <ParamsOf<TransformerLayerParams> P, typename F>
void visit_params(P& p, const std::string& prefix, F&& f) {
  visit_params(p.ln_attn, prefix + ".ln_attn", f);
  visit_params(p.attn, prefix + ".attn", f);
  visit_params(p.ln_ffn, prefix + ".ln_ffn", f);
  visit_params(p.ffn_in, prefix + ".ffn_in", f);
  visit_params(p.ffn_out, prefix + ".ffn_out", f);
}

template <ParamsOf<ConvBlockParams> P, typename F>
void visit_params(P& p, const std::string& prefix, F&& f) {
  visit_params(p.conv, prefix + ".conv", f);
  visit_params(p.layer, prefix + ".layer", f);
}

template <ParamsOf<CoupledAttentionParams> P, typename F>
void visit_params(P& p, const std::string& prefix, F&& f) {
  f(prefix + ".wq", p.wq);
  f(prefix + ".wk", p.wk);
  f(prefix + ".wv", p.wv);
  f(prefix + ".wqv", p.wqv);
  f(prefix + ".wo_speech", p.wo_speech);
  f(prefix + ".wo_text", p.wo_text);
}

enum class AttentionMask { kBidirectional, kCausal };

/// allowed(i, j) = j <= i.
BoolMatrix causal_mask(Index n);

Var linear(const Var& x, const LinearParams& p);

/// Standard scaled dot-product attention over `memory` for each query row.
/// `allowed` (queries x memory) marks permitted keys; nullptr allows all.
Var multi_head_attention(const Var& query, const Var& memory, const AttentionParams& p, const AttentionConfig& cfg,
                         const BoolMatrix* allowed);

/// Pre-norm layer: h = x + MHA(LN(x)); out = h + FFN(LN(h)), GELU inside the
/// FFN.
Var transformer_layer(const Var& x, const TransformerLayerParams& p, const AttentionConfig& cfg, AttentionMask mask);

/// Strided conv, position code for output frames starting at 0, then a
/// causal transformer layer.
Var conv_subsample_block(const Var& x, const ConvBlockParams& p, const AttentionConfig& cfg);

struct CoupledAttentionResult {
  Var speech;                     // frames x model_dim, per-frame output
  std::optional<Var> text;        // text_len x model_dim, whole-utterance output
  std::vector<Var> scores;        // per head, frames x text_len, rows sum to 1
  std::vector<Var> text_weights;  // per head, text_len x frames, rows sum to 1
};

/// Speech attention queries the reference encoding with each frame; text
/// attention reuses each head's score map, normalizing its transpose over
/// frames, and reads from `frames_full`. Text outputs are produced only when
/// `frames_full` is given.
CoupledAttentionResult coupled_cross_attention(const Var& frames, const Var& text, const Var* frames_full,
                                               const CoupledAttentionParams& p, const AttentionConfig& cfg);

/// Text-side half of the coupled attention computed from stored score maps.
/// With zero frames every text position reads an all-zero context.
Var text_attention_from_scores(std::span<const Var> scores, const Var& frames_full, const CoupledAttentionParams& p,
                               const AttentionConfig& cfg, std::vector<Var>* text_weights = nullptr);

// ---------------------------------------------------------------------------
// Incremental inference. These hold non-owning references to parameters,
// which must outlive them.

/// Append-only row storage with amortized growth.
class RowBuffer {
 public:
  explicit RowBuffer(Index cols = 0) : data_(0, cols) {}

  void append(const Eigen::Ref<const RowVector>& row);
  Index rows() const { return count_; }
  Index cols() const { return data_.cols(); }
  auto view() const { return data_.topRows(count_); }
  auto row(Index i) const { return data_.row(i); }
  Matrix to_matrix() const { return data_.topRows(count_); }

 private:
  Matrix data_;
  Index count_ = 0;
};

RowVector linear_row(const Eigen::Ref<const RowVector>& x, const LinearParams& p);

/// One causal transformer layer evaluated a position at a time with a key /
/// value cache.
class CausalTransformerStream {
 public:
  CausalTransformerStream(const TransformerLayerParams& p, const AttentionConfig& cfg);

  RowVector step(const Eigen::Ref<const RowVector>& x);
  Index positions() const { return keys_.rows(); }

 private:
  const TransformerLayerParams* p_;
  AttentionConfig cfg_;
  RowBuffer keys_;
  RowBuffer values_;
};

/// Streaming conv_subsample_block. Output j is produced as soon as input
/// frame geometry.last_tap(j) has arrived; flush() zero-pads the tail.
class ConvBlockStream {
 public:
  ConvBlockStream(const ConvBlockParams& p, const AttentionConfig& cfg, Index input_dim);

  Matrix push(const Eigen::Ref<const Matrix>& frames);
  Matrix flush();

  Index received() const { return input_.rows(); }
  Index emitted() const { return emitted_; }
  bool flushed() const { return flushed_; }

 private:
  RowVector emit_next(Index valid_frames);

  const ConvBlockParams* p_;
  AttentionConfig cfg_;
  RowBuffer input_;
  CausalTransformerStream layer_;
  Index emitted_ = 0;
  bool flushed_ = false;
};

/// Per-frame speech attention against a fixed reference encoding.
class SpeechAttentionStream {
 public:
  SpeechAttentionStream(const CoupledAttentionParams& p, const AttentionConfig& cfg, const Matrix& text);

  struct Step {
    RowVector speech;                  // 1 x model_dim
    std::vector<RowVector> score_rows;  // per head, 1 x text_len
  };
  Step step(const Eigen::Ref<const RowVector>& frame) const;

 private:
  const CoupledAttentionParams* p_;
  AttentionConfig cfg_;
  Matrix keys_;    // text_len x (H*m)
  Matrix values_;  // text_len x (H*m)
};

}  // namespace smdd
