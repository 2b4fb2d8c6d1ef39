// src/training.cpp

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
#include "smdd/training.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <thread>

#include "smdd/ctc.hpp"
#include "smdd/numeric.hpp"

namespace smdd {

TargetMode parse_target_mode(std::string_view name) {
  if (name == "mdd" || name == "MDD") return TargetMode::kMdd;
  if (name == "scoring") return TargetMode::kScoring;
  throw ConfigError("mode must be mdd or scoring, got '" + std::string(name) + "'");
}

std::string_view target_mode_name(TargetMode mode) { return mode == TargetMode::kMdd ? "mdd" : "scoring"; }

void LossWeights::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (!(beta >= 0.0) || !(gamma >= 0.0)) throw ConfigError("beta and gamma must be nonnegative");
}

double alpha_weight(double e, const LossWeights& w, TargetMode mode) {
  if (mode == TargetMode::kMdd) return e == 1.0 ? w.alpha : 1.0;
  return e < 1.0 ? w.alpha : 1.0;
}

double total_loss(double ctc, double sc, double pp, const LossWeights& w) { return ctc + w.beta * sc + w.gamma * pp; }

LossValue loss_pp(const Matrix& log_probs, std::span<const int> labels, std::span<const double> e, const LossWeights& w,
                  TargetMode mode) {
  const Index m = static_cast<Index>(labels.size());
  if (log_probs.rows() != m || static_cast<Index>(e.size()) != m)
    throw ContractError("loss_pp: " + std::to_string(m) + " labels, " + std::to_string(e.size()) + " targets, " +
                        shape_str(log_probs) + " predictions");
  LossValue out{0.0, Matrix::Zero(log_probs.rows(), log_probs.cols())};
  if (m == 0) return out;
  for (Index t = 0; t < m; ++t) {
    const int label = labels[t];
    if (label < 0 || label >= log_probs.cols()) throw LabelError("loss_pp: label " + std::to_string(label) + " out of range");
    const double a = alpha_weight(e[t], w, mode);
    out.value -= a * log_probs(t, label);
    out.grad(t, label) = -a / static_cast<double>(m);
  }
  out.value /= static_cast<double>(m);
  return out;
}

namespace {

double bce_term(double s, double e) {
  s = std::clamp(s, kProbClamp, 1.0 - kProbClamp);
  return -(e * std::log(s) + (1.0 - e) * std::log(1.0 - s));
}

}  // namespace

double loss_sc(std::span<const double> probs, std::span<const double> e, const LossWeights& w, TargetMode mode) {
  if (probs.size() != e.size()) throw ContractError("loss_sc: probability and target counts differ");
  if (probs.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t t = 0; t < probs.size(); ++t) total += alpha_weight(e[t], w, mode) * bce_term(probs[t], e[t]);
  return total / static_cast<double>(probs.size());
}

LossValue loss_sc_logits(const Matrix& logits, std::span<const double> e, const LossWeights& w, TargetMode mode) {
  const Index m = static_cast<Index>(e.size());
  if (logits.rows() != m || logits.cols() != 1) throw ContractError("loss_sc_logits: expected " + std::to_string(m) + "x1 logits");
  LossValue out{0.0, Matrix::Zero(m, 1)};
  if (m == 0) return out;
  for (Index t = 0; t < m; ++t) {
    const double s = sigmoid(logits(t, 0));
    const double a = alpha_weight(e[t], w, mode);
    out.value += a * bce_term(s, e[t]);
    out.grad(t, 0) = a * (s - e[t]) / static_cast<double>(m);
  }
  out.value /= static_cast<double>(m);
  return out;
}

void AugmentRates::validate() const {
  if (sub < 0 || del < 0 || ins < 0 || sub + del + ins > 1.0) throw ConfigError("augmentation rates must be in [0, 1] and sum to at most 1");
  if (alphabet < 2 || alphabet > PhoneSet::kNumPhones) throw ConfigError("augmentation alphabet must lie in [2, 39]");
}

std::vector<int> augment_reference(std::span<const int> reference, const AugmentRates& rates, Rng& rng) {
  rates.validate();
  std::vector<int> out;
  out.reserve(reference.size() + 4);
  for (int phone : reference) {
    const double u = rng.uniform();
    if (u < rates.sub) {
      int other = rng.uniform_int(rates.alphabet - 1);
      if (phone >= 0 && phone < rates.alphabet && other >= phone) ++other;
      out.push_back(other);
    } else if (u < rates.sub + rates.del) {
      continue;
    } else if (u < rates.sub + rates.del + rates.ins) {
      out.push_back(phone);
      out.push_back(rng.uniform_int(rates.alphabet));
    } else {
      out.push_back(phone);
    }
  }
  return out;
}

ExampleTargets make_targets(const Utterance& u, TargetMode mode) {
  if (!u.pronounced) throw DataError("utterance " + u.id + ": no pronounced phones");
  ExampleTargets t;
  t.ctc = *u.pronounced;
  t.reference = u.reference;
  if (mode == TargetMode::kMdd) {
    Targets d = derive_targets(u.reference, *u.pronounced);
    t.pp = std::move(d.phones);
    t.e = std::move(d.errors);
  } else {
    if (!u.scores) throw DataError("utterance " + u.id + ": scoring mode needs phone scores");
    t.pp = derive_targets(u.reference, *u.pronounced).phones;
    t.e = normalize_scores(*u.scores);
  }
  return t;
}

ExampleTargets make_augmented_targets(const Utterance& u, std::span<const int> reference) {
  if (!u.pronounced) throw DataError("utterance " + u.id + ": no pronounced phones");
  ExampleTargets t;
  t.ctc = *u.pronounced;
  t.reference.assign(reference.begin(), reference.end());
  Targets d = derive_targets(t.reference, *u.pronounced);
  t.pp = std::move(d.phones);
  t.e = std::move(d.errors);
  return t;
}

// ---------------------------------------------------------------------------

Adam::Adam(std::vector<Matrix*> params, const AdamConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg.lr > 0.0) || cfg.warmup < 0) throw ConfigError("learning rate must be positive and warmup nonnegative");
  for (const Matrix* p : params_) {
    m_.push_back(Matrix::Zero(p->rows(), p->cols()));
    v_.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
}

double Adam::learning_rate(int step) const {
  if (cfg_.warmup == 0 || step <= 0) return cfg_.lr;
  const double s = step, w = cfg_.warmup;
  return cfg_.lr * std::min(s / w, std::sqrt(w / s));
}

void Adam::step(const std::vector<Matrix>& grads) {
  if (grads.size() != params_.size()) throw ContractError("Adam: one gradient per parameter");
  ++step_;
  double scale = 1.0;
  if (cfg_.clip_norm > 0.0) {
    double sq = 0.0;
    for (const Matrix& g : grads) sq += g.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
  }
  const double lr = learning_rate(step_);
  const double c1 = 1.0 - std::pow(cfg_.beta1, step_), c2 = 1.0 - std::pow(cfg_.beta2, step_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * scale * grads[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * (scale * grads[i]).cwiseAbs2();
    params_[i]->array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.eps);
  }
}

// ---------------------------------------------------------------------------

std::string format_step(const StepRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "step=%d ctc=%.6f sc=%.6f pp=%.6f total=%.6f lr=%.6e", r.step, r.ctc, r.sc, r.pp,
                r.total, r.lr);
  return buf;
}

ExampleLoss example_gradients(const ModelParams& p, const ExampleTargets& t, const Matrix& features,
                              const TrainConfig& cfg, std::uint64_t dropout_seed, std::vector<Matrix>* grads) {
  Tape tape;
  Rng dropout_rng(dropout_seed);
  if (p.config.dropout > 0.0) tape.set_dropout(p.config.dropout, &dropout_rng);
  const ModelOutputs o = forward(tape, p, features, t.reference);

  ExampleLoss loss;
  const auto ctc = ctc_loss(o.ctc_log_probs.value(), t.ctc, kCtcBlank);
  loss.ctc = ctc.loss;
  Var total = attach_loss(o.ctc_log_probs, ctc.loss, ctc.grad);
  if (p.config.stage == 2) {
    const LossValue pp = loss_pp(o.pp_log_probs.value(), t.pp, t.e, cfg.weights, cfg.mode);
    const LossValue sc = loss_sc_logits(o.sc_logits.value(), t.e, cfg.weights, cfg.mode);
    loss.pp = pp.value;
    loss.sc = sc.value;
    total = add(total, scale(attach_loss(o.sc_logits, sc.value, sc.grad), cfg.weights.beta));
    total = add(total, scale(attach_loss(o.pp_log_probs, pp.value, pp.grad), cfg.weights.gamma));
  }
  loss.total = p.config.stage == 2 ? total_loss(loss.ctc, loss.sc, loss.pp, cfg.weights) : loss.ctc;
  if (grads) {
    tape.backward(total);
    grads->clear();
    visit_params(p, [&](const std::string&, const Matrix& m) {
      const Matrix* g = tape.param_grad(m);
      grads->push_back(g ? *g : Matrix::Zero(m.rows(), m.cols()));
    });
  }
  return loss;
}

void validate_training_set(std::span<const Utterance> data, const ModelConfig& config, TargetMode mode) {
  if (data.empty()) throw ContractError("training set is empty");
  for (const Utterance& u : data) {
    auto fail = [&u](const std::string& what) { throw DataError("utterance " + u.id + ": " + what); };
    if (!u.pronounced) fail("no pronounced phones");
    if (u.features.cols() != config.feature_dim)
      fail("features have " + std::to_string(u.features.cols()) + " dims, model expects " +
           std::to_string(config.feature_dim));
    for (int id : *u.pronounced)
      if (id < 0 || id >= kCtcBlank) fail("pronounced phone id " + std::to_string(id) + " cannot be a CTC target");
    Index frames = u.features.rows();
    for (int b = 0; b < config.iae_blocks; ++b) frames = (frames + 1) / 2;
    if (frames < ctc_min_frames(*u.pronounced))
      fail(std::to_string(frames) + " encoder frames cannot carry " + std::to_string(u.pronounced->size()) +
           " pronounced phones");
    if (config.stage == 2) {
      if (u.reference.empty()) fail("empty reference");
      if (mode == TargetMode::kScoring && !u.scores) fail("scoring mode needs phone scores");
    }
  }
}

std::vector<StepRecord> train(ModelParams& p, std::span<const Utterance> data, const TrainConfig& cfg,
                              std::ostream* log) {
  validate_training_set(data, p.config, cfg.mode);
  cfg.weights.validate();
  if (cfg.steps < 0 || cfg.batch_size <= 0 || cfg.workers <= 0) throw ConfigError("steps, batch_size and workers must be positive");
  if (cfg.augment_prob < 0.0 || cfg.augment_prob > 1.0) throw ConfigError("augment_prob must lie in [0, 1]");
  if (cfg.augment_prob > 0.0) cfg.augment.validate();

  std::vector<Matrix*> params;
  visit_params(p, [&](const std::string&, Matrix& m) { params.push_back(&m); });
  Adam opt(params, cfg.adam);

  std::vector<ExampleTargets> base;
  for (const Utterance& u : data) {
    if (p.config.stage == 1) {
      ExampleTargets t;
      t.ctc = *u.pronounced;
      base.push_back(std::move(t));
    } else {
      base.push_back(make_targets(u, cfg.mode));
    }
  }
  const bool augment = p.config.stage == 2 && cfg.mode == TargetMode::kMdd && cfg.augment_prob > 0.0;

  Rng rng(Rng::mix(cfg.seed, 0x7472));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  std::vector<StepRecord> records;
  for (int step = 1; step <= cfg.steps; ++step) {
    std::vector<std::size_t> batch;
    std::vector<ExampleTargets> targets;
    for (int b = 0; b < std::min<int>(cfg.batch_size, static_cast<int>(data.size())); ++b) {
      if (cursor == order.size()) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(static_cast<int>(i))]);
        cursor = 0;
      }
      const std::size_t idx = order[cursor++];
      batch.push_back(idx);
      if (augment && rng.uniform() < cfg.augment_prob) {
        const std::vector<int> ref = augment_reference(data[idx].reference, cfg.augment, rng);
        targets.push_back(ref.empty() ? base[idx] : make_augmented_targets(data[idx], ref));
      } else {
        targets.push_back(base[idx]);
      }
    }

    const std::size_t n = batch.size();
    std::vector<std::vector<Matrix>> grads(n);
    std::vector<ExampleLoss> losses(n);
    auto work = [&](std::size_t first) {
      for (std::size_t i = first; i < n; i += static_cast<std::size_t>(cfg.workers)) {
        const std::uint64_t seed = Rng::mix(cfg.seed, static_cast<std::uint64_t>(step) * 1000003u + i);
        losses[i] = example_gradients(p, targets[i], data[batch[i]].features, cfg, seed, &grads[i]);
      }
    };
    if (cfg.workers == 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < cfg.workers; ++w) pool.emplace_back(work, static_cast<std::size_t>(w));
      for (auto& th : pool) th.join();
    }

    // Merged in batch order so the result does not depend on worker count.
    std::vector<Matrix> merged = std::move(grads[0]);
    StepRecord r;
    r.step = step;
    for (std::size_t i = 0; i < n; ++i) {
      if (i > 0)
        for (std::size_t k = 0; k < merged.size(); ++k) merged[k] += grads[i][k];
      r.ctc += losses[i].ctc;
      r.sc += losses[i].sc;
      r.pp += losses[i].pp;
      r.total += losses[i].total;
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (Matrix& g : merged) g *= inv;
    r.ctc *= inv;
    r.sc *= inv;
    r.pp *= inv;
    r.total *= inv;
    r.lr = opt.learning_rate(opt.steps() + 1);
    opt.step(merged);
    records.push_back(r);
    if (log) *log << format_step(r) << '\n';
  }
  return records;
}

ModelParams pretrain_stage1(std::span<const Utterance> data, ModelConfig config, const TrainConfig& cfg,
                            std::ostream* log, std::vector<StepRecord>* records) {
  config.stage = 1;
  ModelParams p = init_model(config, cfg.seed);
  auto r = train(p, data, cfg, log);
  if (records) *records = std::move(r);
  return p;
}

ModelParams finetune_stage2(std::span<const Utterance> data, const ModelParams& stage1, ModelConfig config,
                            const TrainConfig& cfg, std::ostream* log, std::vector<StepRecord>* records) {
  if (stage1.config.stage != 1) throw LoadError("initial parameters are not a stage-1 acoustic model");
  config.stage = 2;
  ModelParams p = init_model(config, Rng::mix(cfg.seed, 2));
  adopt_pretrained(p, stage1);
  auto r = train(p, data, cfg, log);
  if (records) *records = std::move(r);
  return p;
}

}  // namespace smdd
