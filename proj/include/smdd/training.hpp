// smdd/training.hpp

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

#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "smdd/align.hpp"
#include "smdd/common.hpp"
#include "smdd/data_io.hpp"
#include "smdd/model.hpp"
#include "smdd/phones.hpp"
#include "smdd/rng.hpp"

namespace smdd {

/// kMdd: the classifier target is 1 for a mispronounced reference phone.
/// kScoring: the target is the normalized annotation score, 1 = correct.
enum class TargetMode { kMdd, kScoring };

TargetMode parse_target_mode(std::string_view name);
std::string_view target_mode_name(TargetMode mode);

struct LossWeights {
  double alpha = 5.0;  // minority-class weight
  double beta = 1.0;   // classifier loss
  double gamma = 0.5;  // phone predictor loss

  void validate() const;
};

/// alpha for the minority class, 1 otherwise. In kMdd that is e == 1; in
/// kScoring it is any imperfect score, e < 1.
double alpha_weight(double e, const LossWeights& w, TargetMode mode = TargetMode::kMdd);

double total_loss(double ctc, double sc, double pp, const LossWeights& w);

struct LossValue {
  double value = 0.0;
  Matrix grad;
};

/// Weighted cross-entropy over reference positions. `log_probs` is M x V;
/// gradient is with respect to log_probs.
LossValue loss_pp(const Matrix& log_probs, std::span<const int> labels, std::span<const double> e, const LossWeights& w,
                  TargetMode mode = TargetMode::kMdd);

inline constexpr double kProbClamp = 1e-12;

/// Weighted binary cross-entropy on probabilities clamped to
/// [kProbClamp, 1 - kProbClamp].
double loss_sc(std::span<const double> probs, std::span<const double> e, const LossWeights& w,
               TargetMode mode = TargetMode::kMdd);
/// Same value as loss_sc on sigmoid(logits); gradient with respect to the
/// M x 1 logits.
LossValue loss_sc_logits(const Matrix& logits, std::span<const double> e, const LossWeights& w,
                         TargetMode mode = TargetMode::kMdd);

struct AugmentRates {
  double sub = 0.1;
  double del = 0.05;
  double ins = 0.05;
  /// Phones 0..alphabet-1 are used for substitutions and insertions.
  int alphabet = PhoneSet::kNumPhones;

  void validate() const;
};

/// Independent per-position edits: one uniform draw u picks substitute
/// (u < sub), delete (u < sub + del), insert a phone after the position
/// (u < sub + del + ins) or keep. Substitutes differ from the original.
std::vector<int> augment_reference(std::span<const int> reference, const AugmentRates& rates, Rng& rng);

/// Per-reference-position supervision for one utterance.
struct ExampleTargets {
  std::vector<int> ctc;         // pronounced phones
  std::vector<int> reference;   // RE input
  std::vector<int> pp;          // phone or kDel per reference position
  std::vector<double> e;        // classifier targets
};

/// kMdd aligns reference and pronounced phones. kScoring takes e from the
/// normalized scores and needs them to be present.
ExampleTargets make_targets(const Utterance& u, TargetMode mode);
/// Targets after replacing the reference with an augmented copy.
ExampleTargets make_augmented_targets(const Utterance& u, std::span<const int> reference);

struct AdamConfig {
  double lr = 1e-3;
  int warmup = 400;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  /// Global gradient norm cap; 0 disables clipping.
  double clip_norm = 5.0;
};

/// Adam with linear warmup followed by inverse square-root decay.
class Adam {
 public:
  Adam(std::vector<Matrix*> params, const AdamConfig& cfg);

  double learning_rate(int step) const;
  /// Applies one update; `grads` is parallel to the parameter list.
  void step(const std::vector<Matrix>& grads);
  int steps() const { return step_; }

 private:
  std::vector<Matrix*> params_;
  AdamConfig cfg_;
  std::vector<Matrix> m_, v_;
  int step_ = 0;
};

struct TrainConfig {
  int steps = 2000;
  int batch_size = 4;
  AdamConfig adam;
  LossWeights weights;
  TargetMode mode = TargetMode::kMdd;
  /// Probability that an example's reference is replaced by an augmented
  /// copy for one step (stage 2, kMdd only).
  double augment_prob = 0.0;
  AugmentRates augment;
  std::uint64_t seed = 1;
  int workers = 1;
};

struct StepRecord {
  int step = 0;
  double ctc = 0.0, sc = 0.0, pp = 0.0, total = 0.0, lr = 0.0;
};

/// `step=.. ctc=.. sc=.. pp=.. total=.. lr=..`
std::string format_step(const StepRecord& r);

struct ExampleLoss {
  double ctc = 0.0, sc = 0.0, pp = 0.0, total = 0.0;
};

/// Loss of one example with gradients for every parameter, in visit_params
/// order. Stage-1 models use only the CTC term.
ExampleLoss example_gradients(const ModelParams& p, const ExampleTargets& t, const Matrix& features,
                              const TrainConfig& cfg, std::uint64_t dropout_seed, std::vector<Matrix>* grads);

/// Checks that every utterance has what the stage needs and enough frames
/// for its CTC target. Throws DataError naming the utterance.
void validate_training_set(std::span<const Utterance> data, const ModelConfig& config, TargetMode mode);

/// Trains in place for cfg.steps optimizer steps over shuffled mini-batches.
/// Every step is logged to `log` when given.
std::vector<StepRecord> train(ModelParams& p, std::span<const Utterance> data, const TrainConfig& cfg,
                              std::ostream* log);

/// Acoustic model alone: encoder + CTC decoder trained on pronounced phones.
ModelParams pretrain_stage1(std::span<const Utterance> data, ModelConfig config, const TrainConfig& cfg,
                            std::ostream* log, std::vector<StepRecord>* records = nullptr);

/// Full model initialized from `config`, with encoder and CTC decoder copied
/// from `stage1`, trained on the weighted joint objective.
ModelParams finetune_stage2(std::span<const Utterance> data, const ModelParams& stage1, ModelConfig config,
                            const TrainConfig& cfg, std::ostream* log, std::vector<StepRecord>* records = nullptr);

}  // namespace smdd
