// src/model.cpp

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
#include "smdd/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "smdd/numeric.hpp"
#include "smdd/phones.hpp"

namespace smdd {

Conv1dGeometry ModelConfig::block_geometry(int block) const {
  const int rc = right_context.at(block);
  return Conv1dGeometry{conv_kernel, 2, conv_kernel - 2 - rc};
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("model config: " + what);
  };
  require(feature_dim > 0 && model_dim > 0 && ffn_dim > 0 && ctc_hidden > 0, "dimensions must be positive");
  require(num_heads > 0 && head_dim > 0 && num_heads * head_dim == model_dim, "num_heads * head_dim must equal model_dim");
  require(iae_blocks > 0 && re_layers >= 0 && pp_layers > 0 && sc_layers >= 0, "bad layer counts");
  require(stage == 1 || stage == 2, "stage must be 1 or 2");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  require(input_hop_ms > 0, "input_hop_ms must be positive");
  require(output_frame_ms == input_hop_ms * subsampling(), "output_frame_ms must equal input_hop_ms * 2^iae_blocks");
  require(lookahead_ms >= 0 && lookahead_ms % input_hop_ms == 0, "lookahead_ms must be a multiple of input_hop_ms");
  require(right_context.size() == static_cast<std::size_t>(iae_blocks), "one right_context entry per encoder block");
  require(conv_kernel >= 2, "conv_kernel must be at least 2");
  int lookahead_frames = 0;
  for (int b = 0; b < iae_blocks; ++b) {
    require(right_context[b] >= 0 && right_context[b] <= conv_kernel - 2, "right_context out of range for the kernel");
    lookahead_frames += right_context[b] << b;
  }
  require(lookahead_frames * input_hop_ms == lookahead_ms,
          "right contexts give " + std::to_string(lookahead_frames * input_hop_ms) + " ms of look-ahead, not " +
              std::to_string(lookahead_ms));
}

std::vector<std::string> ModelConfig::keys() {
  return {"feature_dim",  "model_dim",    "num_heads",    "head_dim",       "ffn_dim",         "iae_blocks",
          "re_layers",    "pp_layers",    "sc_layers",    "ctc_hidden",     "phone_vocab_size", "input_hop_ms",
          "output_frame_ms", "lookahead_ms", "conv_kernel", "right_context", "dropout",         "stage"};
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  std::string rc;
  for (std::size_t i = 0; i < right_context.size(); ++i) rc += (i ? "," : "") + std::to_string(right_context[i]);
  os << "feature_dim=" << feature_dim << "\nmodel_dim=" << model_dim << "\nnum_heads=" << num_heads
     << "\nhead_dim=" << head_dim << "\nffn_dim=" << ffn_dim << "\niae_blocks=" << iae_blocks
     << "\nre_layers=" << re_layers << "\npp_layers=" << pp_layers << "\nsc_layers=" << sc_layers
     << "\nctc_hidden=" << ctc_hidden << "\nphone_vocab_size=" << kPhoneVocab << "\ninput_hop_ms=" << input_hop_ms
     << "\noutput_frame_ms=" << output_frame_ms << "\nlookahead_ms=" << lookahead_ms
     << "\nconv_kernel=" << conv_kernel << "\nright_context=" << rc << "\ndropout=" << format_double(dropout)
     << "\nstage=" << stage << "\n";
  return os.str();
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv, const ModelConfig& d) {
  kv.check_known(keys());
  if (kv.get_int("phone_vocab_size", kPhoneVocab) != kPhoneVocab)
    throw ConfigError("phone_vocab_size is fixed at " + std::to_string(kPhoneVocab));
  ModelConfig c;
  c.feature_dim = kv.get_int("feature_dim", d.feature_dim);
  c.model_dim = kv.get_int("model_dim", d.model_dim);
  c.num_heads = kv.get_int("num_heads", d.num_heads);
  c.head_dim = kv.get_int("head_dim", d.head_dim);
  c.ffn_dim = kv.get_int("ffn_dim", d.ffn_dim);
  c.iae_blocks = kv.get_int("iae_blocks", d.iae_blocks);
  c.re_layers = kv.get_int("re_layers", d.re_layers);
  c.pp_layers = kv.get_int("pp_layers", d.pp_layers);
  c.sc_layers = kv.get_int("sc_layers", d.sc_layers);
  c.ctc_hidden = kv.get_int("ctc_hidden", d.ctc_hidden);
  c.input_hop_ms = kv.get_int("input_hop_ms", d.input_hop_ms);
  c.output_frame_ms = kv.get_int("output_frame_ms", d.output_frame_ms);
  c.lookahead_ms = kv.get_int("lookahead_ms", d.lookahead_ms);
  c.conv_kernel = kv.get_int("conv_kernel", d.conv_kernel);
  c.right_context = kv.get_int_list("right_context", d.right_context);
  c.dropout = kv.get_double("dropout", d.dropout);
  c.stage = kv.get_int("stage", d.stage);
  c.validate();
  return c;
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv) { return from_key_values(kv, ModelConfig{}); }

namespace {

std::vector<TransformerLayerParams> init_layers(Rng& rng, const AttentionConfig& cfg, int n) {
  std::vector<TransformerLayerParams> out;
  for (int i = 0; i < n; ++i) out.push_back(init_transformer_layer(rng, cfg));
  return out;
}

}  // namespace

ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const AttentionConfig cfg = config.attention();
  const int d = config.model_dim;
  ModelParams p;
  p.config = config;
  for (int b = 0; b < config.iae_blocks; ++b)
    p.iae.push_back(init_conv_block(rng, cfg, b == 0 ? config.feature_dim : d, config.block_geometry(b)));
  p.ctc_layer = init_transformer_layer(rng, cfg);
  p.ctc_hidden = init_linear(rng, d, config.ctc_hidden);
  p.ctc_out = init_linear(rng, config.ctc_hidden, kCtcClasses);
  if (config.stage == 1) return p;

  p.re_embedding = rng.normal_matrix(ModelConfig::kPhoneVocab, d, 1.0);
  p.re_layers = init_layers(rng, cfg, config.re_layers);
  p.coca = init_coupled_attention(rng, cfg);
  p.pp_layers = init_layers(rng, cfg, config.pp_layers);
  p.pp_hidden = init_linear(rng, d, d);
  p.pp_out = init_linear(rng, d, ModelConfig::kPhoneVocab);
  p.sc_merge = init_linear(rng, d, d);
  p.sc_layers = init_layers(rng, cfg, config.sc_layers);
  p.sc_hidden = init_linear(rng, d, d);
  p.sc_out = init_linear(rng, d, 1);
  return p;
}

// ---------------------------------------------------------------------------
// Parameter container. All integers are little-endian u32, payloads are
// little-endian IEEE doubles.

namespace {

constexpr char kMagic[4] = {'C', 'M', 'D', 'D'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

void put_string(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    const auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string string() { return std::string(bytes(u32())); }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t offset() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      throw LoadError("parameter file truncated at byte " + std::to_string(pos_));
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_params(const ModelParams& p) {
  std::string out(kMagic, 4);
  put_u32(out, kVersion);
  put_string(out, p.config.to_text());
  std::uint32_t count = 0;
  visit_params(p, [&](const std::string&, const Matrix&) { ++count; });
  put_u32(out, count);
  visit_params(p, [&](const std::string& name, const Matrix& m) {
    put_string(out, name);
    put_u32(out, 2);
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Index i = 0; i < m.size(); ++i) put_f64(out, m.data()[i]);
  });
  return out;
}

ModelParams deserialize_params(std::string_view bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw LoadError("not a parameter file (bad magic)");
  r.bytes(4);
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw LoadError("unsupported parameter file version " + std::to_string(version));
  ModelConfig config;
  try {
    config = ModelConfig::from_key_values(KeyValues::parse(r.string(), "parameter file config"));
  } catch (const ConfigError& e) {
    throw LoadError(std::string("parameter file config: ") + e.what());
  }

  std::map<std::string, Matrix> records;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.string();
    const std::uint32_t ndim = r.u32();
    if (ndim != 2) throw LoadError("tensor " + name + " has rank " + std::to_string(ndim) + ", expected 2");
    const std::uint32_t rows = r.u32(), cols = r.u32();
    Matrix m(rows, cols);
    for (Index k = 0; k < m.size(); ++k) m.data()[k] = r.f64();
    records.emplace(std::move(name), std::move(m));
  }
  if (!r.done()) throw LoadError("trailing bytes after tensor records at byte " + std::to_string(r.offset()));

  ModelParams p = init_model(config, 0);
  std::vector<std::string> problems;
  visit_params(p, [&](const std::string& name, Matrix& m) {
    auto it = records.find(name);
    if (it == records.end()) {
      problems.push_back(name + " (missing)");
      return;
    }
    if (it->second.rows() != m.rows() || it->second.cols() != m.cols()) {
      problems.push_back(name + " (shape " + shape_str(it->second) + ", expected " + shape_str(m) + ")");
    } else {
      m = std::move(it->second);
    }
    records.erase(it);
  });
  for (const auto& [name, m] : records) problems.push_back(name + " (unexpected)");
  if (!problems.empty()) {
    std::string msg = "parameter file does not match its config:";
    for (const auto& s : problems) msg += " " + s;
    throw LoadError(msg);
  }
  return p;
}

void save_params(const ModelParams& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path);
  const std::string bytes = serialize_params(p);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw LoadError("write failed for " + path);
}

ModelParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_params(ss.str());
}

void adopt_pretrained(ModelParams& target, const ModelParams& pretrained) {
  std::map<std::string, Matrix*> slots;
  visit_params(target, [&](const std::string& name, Matrix& m) { slots[name] = &m; });
  std::vector<std::string> problems;
  std::vector<std::pair<Matrix*, const Matrix*>> copies;
  visit_params(pretrained, [&](const std::string& name, const Matrix& m) {
    const auto it = slots.find(name);
    if (it == slots.end()) {
      problems.push_back(name + " (absent from target)");
    } else if (it->second->rows() != m.rows() || it->second->cols() != m.cols()) {
      problems.push_back(name + " (shape " + shape_str(m) + ", expected " + shape_str(*it->second) + ")");
    } else {
      copies.emplace_back(it->second, &m);
    }
  });
  if (!problems.empty()) {
    std::string msg = "pretrained parameters do not fit:";
    for (const auto& s : problems) msg += " " + s;
    throw LoadError(msg);
  }
  for (auto [dst, src] : copies) *dst = *src;
}

// ---------------------------------------------------------------------------

Var encode_audio(Tape& tape, const ModelParams& p, const Matrix& features) {
  if (features.cols() != p.config.feature_dim)
    throw ConfigError("features have " + std::to_string(features.cols()) + " dims, model expects " +
                      std::to_string(p.config.feature_dim));
  const AttentionConfig cfg = p.config.attention();
  Var x = tape.constant(features);
  for (const ConvBlockParams& block : p.iae) x = conv_subsample_block(x, block, cfg);
  return x;
}

Var ctc_head(const Var& x, const ModelParams& p) {
  Tape& t = x.tape();
  if (x.rows() == 0) return t.constant(Matrix(0, kCtcClasses));
  const Var h = transformer_layer(x, p.ctc_layer, p.config.attention(), AttentionMask::kCausal);
  return log_softmax(linear(relu(linear(h, p.ctc_hidden)), p.ctc_out));
}

Var re_encode(Tape& tape, const ModelParams& p, std::span<const int> reference) {
  if (p.config.stage != 2) throw ContractError("reference encoder needs a stage-2 model");
  if (reference.empty()) throw ContractError("reference phone sequence is empty");
  const Index m = static_cast<Index>(reference.size());
  Matrix one_hot = Matrix::Zero(m, ModelConfig::kPhoneVocab);
  for (Index i = 0; i < m; ++i) {
    const int id = reference[i];
    if (id < 0 || id > PhoneSet::kErr) throw VocabularyError("reference phone id " + std::to_string(id) + " is not a phone");
    one_hot(i, id) = 1.0;
  }
  const AttentionConfig cfg = p.config.attention();
  Var x = matmul(tape.constant(std::move(one_hot)), tape.param(p.re_embedding));
  x = add(x, tape.constant(sinusoidal_positions(0, m, cfg.model_dim)));
  for (const auto& layer : p.re_layers) x = transformer_layer(x, layer, cfg, AttentionMask::kBidirectional);
  return x;
}

Matrix re_encode(const ModelParams& p, std::span<const int> reference) {
  Tape tape(false);
  return re_encode(tape, p, reference).value();
}

DecoderHeads decoder_heads(const Var& text, const ModelParams& p) {
  const AttentionConfig cfg = p.config.attention();
  Var h = text;
  for (const auto& layer : p.pp_layers) h = transformer_layer(h, layer, cfg, AttentionMask::kBidirectional);
  DecoderHeads out;
  out.pp_log_probs = log_softmax(linear(relu(linear(h, p.pp_hidden)), p.pp_out));
  Var s = add(text, linear(h, p.sc_merge));
  for (const auto& layer : p.sc_layers) s = transformer_layer(s, layer, cfg, AttentionMask::kBidirectional);
  out.sc_logits = linear(relu(linear(s, p.sc_hidden)), p.sc_out);
  out.sc_probs = sigmoid(out.sc_logits);
  return out;
}

ModelOutputs forward(Tape& tape, const ModelParams& p, const Matrix& features, std::span<const int> reference) {
  ModelOutputs out;
  out.encoder = encode_audio(tape, p, features);
  if (p.config.stage == 1) {
    out.ctc_log_probs = ctc_head(out.encoder, p);
    return out;
  }
  out.reference = re_encode(tape, p, reference);
  CoupledAttentionResult co =
      coupled_cross_attention(out.encoder, out.reference, &out.encoder, p.coca, p.config.attention());
  out.speech = co.speech;
  out.scores = std::move(co.scores);
  out.text = *co.text;
  out.ctc_log_probs = ctc_head(add(out.encoder, out.speech), p);
  const DecoderHeads heads = decoder_heads(out.text, p);
  out.pp_log_probs = heads.pp_log_probs;
  out.sc_logits = heads.sc_logits;
  out.sc_probs = heads.sc_probs;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

Matrix append_rows(const Matrix& a, const Matrix& b) {
  if (a.rows() == 0) return b;
  Matrix out(a.rows() + b.rows(), a.cols());
  out << a, b;
  return out;
}

}  // namespace

StreamSession::StreamSession(const ModelParams& p, std::span<const int> reference)
    : p_(&p),
      cfg_(p.config.attention()),
      ctc_layer_(p.ctc_layer, cfg_),
      decoder_(kCtcBlank),
      encoder_(p.config.model_dim) {
  if (p.config.stage == 2) {
    reference_ = re_encode(p, reference);
    attention_.emplace(p.coca, cfg_, reference_);
    scores_.assign(cfg_.num_heads, RowBuffer(reference_.rows()));
  }
  for (int b = 0; b < p.config.iae_blocks; ++b)
    blocks_.emplace_back(p.iae[b], cfg_, b == 0 ? p.config.feature_dim : p.config.model_dim);
}

void StreamSession::consume(const Matrix& frames, StreamEmission& out) {
  const ModelConfig& c = p_->config;
  const Index n = frames.rows();
  out.encoder = frames;
  out.ctc_log_probs.resize(n, kCtcClasses);
  if (attention_) out.speech.resize(n, c.model_dim);
  for (Index i = 0; i < n; ++i) {
    const Index frame_index = encoder_.rows();
    encoder_.append(frames.row(i));
    RowVector input = frames.row(i);
    if (attention_) {
      SpeechAttentionStream::Step step = attention_->step(frames.row(i));
      for (int h = 0; h < cfg_.num_heads; ++h) scores_[h].append(step.score_rows[h]);
      out.speech.row(i) = step.speech;
      input = input + step.speech;
    }
    const RowVector h = ctc_layer_.step(input);
    const RowVector hidden = linear_row(h, p_->ctc_hidden).cwiseMax(0.0);
    const RowVector lp = log_softmax_rows(Matrix(linear_row(hidden, p_->ctc_out)));
    out.ctc_log_probs.row(i) = lp;
    if (const auto phone = decoder_.push(lp)) {
      out.hypothesis_delta.push_back(*phone);
      phone_frames_.push_back(received_);
    }
    latency_ms_.push_back(static_cast<int>((received_ - frame_index * c.subsampling()) * c.input_hop_ms));
  }
}

StreamEmission StreamSession::push_frames(const Eigen::Ref<const Matrix>& features) {
  if (finalized_) throw StateError("push_frames after finalize");
  if (features.cols() != p_->config.feature_dim)
    throw ConfigError("features have " + std::to_string(features.cols()) + " dims, model expects " +
                      std::to_string(p_->config.feature_dim));
  // Frames go in one at a time so every output is released, and timed, at
  // the first input frame that completes its look-ahead.
  StreamEmission out;
  for (Index i = 0; i < features.rows(); ++i) {
    ++received_;
    Matrix x = blocks_.front().push(features.middleRows(i, 1));
    for (std::size_t b = 1; b < blocks_.size() && x.rows() > 0; ++b) x = blocks_[b].push(x);
    if (x.rows() == 0) continue;
    StreamEmission step;
    consume(x, step);
    out.encoder = append_rows(out.encoder, step.encoder);
    out.speech = append_rows(out.speech, step.speech);
    out.ctc_log_probs = append_rows(out.ctc_log_probs, step.ctc_log_probs);
    out.hypothesis_delta.insert(out.hypothesis_delta.end(), step.hypothesis_delta.begin(), step.hypothesis_delta.end());
  }
  if (out.encoder.rows() == 0) {
    out.encoder.resize(0, p_->config.model_dim);
    out.ctc_log_probs.resize(0, kCtcClasses);
    if (attention_) out.speech.resize(0, p_->config.model_dim);
  }
  return out;
}

FinalResult StreamSession::finalize() {
  if (finalized_) throw StateError("session already finalized");
  finalized_ = true;
  Matrix x = blocks_.front().flush();
  for (std::size_t b = 1; b < blocks_.size(); ++b) {
    const Matrix pushed = blocks_[b].push(x);
    x = append_rows(pushed, blocks_[b].flush());
  }
  FinalResult r;
  consume(x, r.tail);
  r.ctc_hypothesis = decoder_.hypothesis();
  if (!attention_) return r;

  Tape tape(false);
  const Var f = tape.constant(encoder_.to_matrix());
  std::vector<Var> scores;
  for (const RowBuffer& s : scores_) scores.push_back(tape.constant(s.to_matrix()));
  const Var text = text_attention_from_scores(scores, f, p_->coca, cfg_);
  const DecoderHeads heads = decoder_heads(text, *p_);
  r.text = text.value();
  r.pp_log_probs = heads.pp_log_probs.value();
  r.sc_probs = heads.sc_probs.value();
  return r;
}

}  // namespace smdd
