// smdd/model.hpp

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

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smdd/align.hpp"
#include "smdd/common.hpp"
#include "smdd/config.hpp"
#include "smdd/nn.hpp"
#include "smdd/rng.hpp"
#include "smdd/tensor.hpp"

namespace smdd {

/// Stage 1 is the acoustic model alone (encoder + CTC decoder). Stage 2 adds
/// the reference encoder, coupled attention and the PP / SC heads.
struct ModelConfig {
  int feature_dim = 80;
  int model_dim = 384;
  int num_heads = 6;
  int head_dim = 64;
  int ffn_dim = 1536;
  int iae_blocks = 2;
  int re_layers = 2;
  int pp_layers = 2;
  int sc_layers = 2;
  int ctc_hidden = 512;
  int input_hop_ms = 10;
  int output_frame_ms = 40;
  int lookahead_ms = 60;
  int conv_kernel = 5;
  /// Future input frames each conv block waits for, in its own input rate.
  std::vector<int> right_context{2, 2};
  double dropout = 0.1;
  int stage = 2;

  static constexpr int kPhoneVocab = 41;

  AttentionConfig attention() const { return {num_heads, head_dim, model_dim, ffn_dim}; }
  Conv1dGeometry block_geometry(int block) const;
  int subsampling() const { return 1 << iae_blocks; }

  void validate() const;
  std::string to_text() const;
  /// Reads the keys produced by to_text(); unknown keys are an error.
  static ModelConfig from_key_values(const KeyValues& kv, const ModelConfig& defaults);
  static ModelConfig from_key_values(const KeyValues& kv);
  static std::vector<std::string> keys();
};

struct ModelParams {
  ModelConfig config;

  std::vector<ConvBlockParams> iae;
  TransformerLayerParams ctc_layer;
  LinearParams ctc_hidden, ctc_out;

  // Stage 2 only.
  Matrix re_embedding;  // kPhoneVocab x model_dim
  std::vector<TransformerLayerParams> re_layers;
  CoupledAttentionParams coca;
  std::vector<TransformerLayerParams> pp_layers;
  LinearParams pp_hidden, pp_out;
  LinearParams sc_merge;
  std::vector<TransformerLayerParams> sc_layers;
  LinearParams sc_hidden, sc_out;
};

ModelParams init_model(const ModelConfig& config, std::uint64_t seed);

template <typename P, typename F>
  requires ParamsOf<P, ModelParams>
void visit_params(P& p, F&& f) {
  for (std::size_t b = 0; b < p.iae.size(); ++b) visit_params(p.iae[b], "iae." + std::to_string(b), f);
  visit_params(p.ctc_layer, "ctc.layer", f);
  visit_params(p.ctc_hidden, "ctc.hidden", f);
  visit_params(p.ctc_out, "ctc.out", f);
  if (p.config.stage == 1) return;
  f(std::string("re.embedding"), p.re_embedding);
  for (std::size_t i = 0; i < p.re_layers.size(); ++i) visit_params(p.re_layers[i], "re." + std::to_string(i), f);
  visit_params(p.coca, "coca", f);
  for (std::size_t i = 0; i < p.pp_layers.size(); ++i) visit_params(p.pp_layers[i], "pp." + std::to_string(i), f);
  visit_params(p.pp_hidden, "pp.hidden", f);
  visit_params(p.pp_out, "pp.out", f);
  visit_params(p.sc_merge, "sc.merge", f);
  for (std::size_t i = 0; i < p.sc_layers.size(); ++i) visit_params(p.sc_layers[i], "sc." + std::to_string(i), f);
  visit_params(p.sc_hidden, "sc.hidden", f);
  visit_params(p.sc_out, "sc.out", f);
}

void save_params(const ModelParams& p, const std::string& path);
ModelParams load_params(const std::string& path);
std::string serialize_params(const ModelParams& p);
ModelParams deserialize_params(std::string_view bytes);

/// Copies every tensor of `pretrained` into the same-named tensor of
/// `target`. Missing names or shape mismatches raise LoadError naming them.
void adopt_pretrained(ModelParams& target, const ModelParams& pretrained);

// ---------------------------------------------------------------------------
// Whole-utterance forward on a tape.

struct ModelOutputs {
  Var encoder;        // f, frames x model_dim
  Var ctc_log_probs;  // frames x kCtcClasses
  // Stage 2 only.
  Var reference;              // d, text_len x model_dim
  Var speech;                 // g, frames x model_dim
  std::vector<Var> scores;    // per head, frames x text_len
  Var text;                   // s, text_len x model_dim
  Var pp_log_probs;           // text_len x kPhoneVocab
  Var sc_logits;              // text_len x 1
  Var sc_probs;               // text_len x 1
};

Var re_encode(Tape& tape, const ModelParams& p, std::span<const int> reference);
Matrix re_encode(const ModelParams& p, std::span<const int> reference);
Var encode_audio(Tape& tape, const ModelParams& p, const Matrix& features);
Var ctc_head(const Var& x, const ModelParams& p);

struct DecoderHeads {
  Var pp_log_probs;
  Var sc_logits;
  Var sc_probs;
};
DecoderHeads decoder_heads(const Var& text, const ModelParams& p);

/// Stage-1 models ignore `reference`, which may then be empty.
ModelOutputs forward(Tape& tape, const ModelParams& p, const Matrix& features, std::span<const int> reference);

// ---------------------------------------------------------------------------
// Streaming inference.

struct StreamEmission {
  Matrix encoder;        // new f rows
  Matrix speech;         // new g rows (stage 2)
  Matrix ctc_log_probs;  // new posterior rows
  std::vector<int> hypothesis_delta;
};

struct FinalResult {
  StreamEmission tail;  // frames released by the end-of-audio flush
  std::vector<int> ctc_hypothesis;
  // Stage 2 only.
  Matrix text;          // s
  Matrix pp_log_probs;  // text_len x kPhoneVocab
  Matrix sc_probs;      // text_len x 1
};

/// Frame-synchronous inference against a fixed reference. Keeps non-owning
/// references to the parameters.
class StreamSession {
 public:
  StreamSession(const ModelParams& p, std::span<const int> reference);

  StreamEmission push_frames(const Eigen::Ref<const Matrix>& features);
  FinalResult finalize();

  bool finalized() const { return finalized_; }
  Index received_frames() const { return received_; }
  Index emitted_frames() const { return encoder_.rows(); }
  const Matrix& reference_encoding() const { return reference_; }
  const std::vector<int>& hypothesis() const { return decoder_.hypothesis(); }
  /// Audio received, in ms, past the start of each output frame when it was
  /// released.
  const std::vector<int>& emission_latency_ms() const { return latency_ms_; }
  /// Input frames received when each hypothesis phone was decoded.
  const std::vector<Index>& phone_emission_frames() const { return phone_frames_; }

 private:
  void consume(const Matrix& frames, StreamEmission& out);

  const ModelParams* p_;
  AttentionConfig cfg_;
  Matrix reference_;
  std::vector<ConvBlockStream> blocks_;
  std::optional<SpeechAttentionStream> attention_;
  CausalTransformerStream ctc_layer_;
  GreedyCtcDecoder decoder_;
  RowBuffer encoder_;
  std::vector<RowBuffer> scores_;
  Index received_ = 0;
  bool finalized_ = false;
  std::vector<int> latency_ms_;
  std::vector<Index> phone_frames_;
};

}  // namespace smdd
