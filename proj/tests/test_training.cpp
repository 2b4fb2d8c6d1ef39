// tests/test_training.cpp

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
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "model_fixtures.hpp"
#include "smdd/ctc.hpp"
#include "smdd/numeric.hpp"
#include "smdd/phones.hpp"
#include "smdd/training.hpp"

using namespace smdd;
using namespace smdd::testing;

namespace {

std::vector<Utterance> small_corpus(int n_utts, int vocab, std::uint64_t seed, double mispron = 0.1) {
  SynthConfig c;
  c.n_utts = n_utts;
  c.vocab_size = vocab;
  c.feature_dim = 6;
  c.mispron_rate = mispron;
  const SynthCorpus corpus = synth_corpus(c, seed);
  std::vector<Utterance> out;
  for (std::size_t i = 0; i < corpus.entries.size(); ++i) {
    Utterance u;
    u.id = corpus.entries[i].id;
    u.text = corpus.entries[i].text;
    u.features = corpus.features[i];
    u.reference = corpus.lexicon.lookup(u.text);
    u.pronounced = PhoneSet::instance().parse(*corpus.entries[i].pronounced);
    u.scores = corpus.entries[i].scores;
    out.push_back(std::move(u));
  }
  return out;
}

TrainConfig quick_config(int steps) {
  TrainConfig t;
  t.steps = steps;
  t.batch_size = 2;
  t.adam.lr = 3e-3;
  t.adam.warmup = 20;
  return t;
}

}  // namespace

TEST_CASE("loss weights") {
  const LossWeights w;
  CHECK(w.alpha == 5.0);
  CHECK(w.beta == 1.0);
  CHECK(w.gamma == 0.5);
  CHECK(total_loss(1.0, 0.5, 2.0, w) == 2.5);
  CHECK(total_loss(1.25, 3.0, 7.0, LossWeights{5.0, 0.0, 0.0}) == 1.25);
  CHECK(alpha_weight(1.0, w) == 5.0);
  CHECK(alpha_weight(0.0, w) == 1.0);
  CHECK(alpha_weight(1.0, LossWeights{1.0, 1.0, 0.5}) == 1.0);
  CHECK(alpha_weight(0.5, w, TargetMode::kScoring) == 5.0);
  CHECK(alpha_weight(0.0, w, TargetMode::kScoring) == 5.0);
  CHECK(alpha_weight(1.0, w, TargetMode::kScoring) == 1.0);
  CHECK_THROWS_AS((LossWeights{0.0, 1.0, 1.0}.validate()), ConfigError);
  CHECK(parse_target_mode("scoring") == TargetMode::kScoring);
  CHECK_THROWS_AS(parse_target_mode("grading"), ConfigError);
}

TEST_CASE("phone predictor loss") {
  const LossWeights w;
  const int v = ModelConfig::kPhoneVocab;
  const Matrix uniform = Matrix::Constant(3, v, -std::log(static_cast<double>(v)));
  const std::vector<int> labels{4, PhoneSet::kDel, 0};
  CHECK(loss_pp(uniform, labels, std::vector<double>(3, 0.0), w).value == doctest::Approx(std::log(v)).epsilon(1e-14));

  Matrix sharp = Matrix::Constant(3, v, -50.0);
  for (int t = 0; t < 3; ++t) sharp(t, labels[t]) = 0.0;
  CHECK(loss_pp(log_softmax_rows(sharp), labels, std::vector<double>(3, 1.0), w).value < 1e-15);

  Rng rng(3);
  const Matrix lp = log_softmax_rows(rng.normal_matrix(4, v));
  const std::vector<int> l4{1, 7, 40, 7};
  const std::vector<double> e{1, 0, 1, 0};
  const double expected = -(5 * lp(0, 1) + lp(1, 7) + 5 * lp(2, 40) + lp(3, 7)) / 4;
  const LossValue r = loss_pp(lp, l4, e, w);
  CHECK(std::abs(r.value - expected) < 1e-12);
  // Reordering positions leaves the mean unchanged.
  Matrix perm(4, v);
  perm << lp.row(2), lp.row(0), lp.row(3), lp.row(1);
  CHECK(std::abs(loss_pp(perm, std::vector<int>{40, 1, 7, 7}, std::vector<double>{1, 1, 0, 0}, w).value - expected) <
        1e-14);

  Matrix probe = lp;
  for (Index i = 0; i < probe.size(); i += 13) {
    const double saved = probe.data()[i];
    probe.data()[i] = saved + 1e-6;
    const double up = loss_pp(probe, l4, e, w).value;
    probe.data()[i] = saved - 1e-6;
    const double down = loss_pp(probe, l4, e, w).value;
    probe.data()[i] = saved;
    CHECK(std::abs((up - down) / 2e-6 - r.grad.data()[i]) < 1e-7);
  }
  CHECK_THROWS_AS(loss_pp(lp, std::vector<int>{1, 7, 41, 7}, e, w), LabelError);
  CHECK_THROWS_AS(loss_pp(lp, std::vector<int>{1, 7}, e, w), ContractError);
}

TEST_CASE("state classifier loss") {
  const LossWeights w;
  CHECK(loss_sc(std::vector<double>{0.5, 0.5}, std::vector<double>{0, 0}, w) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(loss_sc(std::vector<double>{0.5}, std::vector<double>{0.5}, w, TargetMode::kScoring) ==
        doctest::Approx(5 * std::log(2.0)).epsilon(1e-14));
  CHECK(loss_sc(std::vector<double>{0.5}, std::vector<double>{0.5}, LossWeights{1, 1, 0.5}, TargetMode::kScoring) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(loss_sc(std::vector<double>{1.0, 0.0}, std::vector<double>{1, 0}, w) < 1e-10);
  CHECK(std::isfinite(loss_sc(std::vector<double>{0.0, 1.0}, std::vector<double>{1, 0}, w)));

  Rng rng(5);
  const Matrix z = rng.normal_matrix(5, 1, 2.0);
  const std::vector<double> e{1, 0, 0, 1, 0};
  std::vector<double> s(5);
  for (int i = 0; i < 5; ++i) s[i] = sigmoid(z(i, 0));
  const LossValue r = loss_sc_logits(z, e, w);
  CHECK(std::abs(r.value - loss_sc(s, e, w)) < 1e-14);
  double direct = 0;
  for (int i = 0; i < 5; ++i) direct -= (e[i] ? 5.0 : 1.0) * (e[i] * std::log(s[i]) + (1 - e[i]) * std::log(1 - s[i]));
  CHECK(std::abs(r.value - direct / 5) < 1e-12);
  Matrix probe = z;
  for (Index i = 0; i < 5; ++i) {
    probe(i, 0) = z(i, 0) + 1e-6;
    const double up = loss_sc_logits(probe, e, w).value;
    probe(i, 0) = z(i, 0) - 1e-6;
    const double down = loss_sc_logits(probe, e, w).value;
    probe(i, 0) = z(i, 0);
    CHECK(std::abs((up - down) / 2e-6 - r.grad(i, 0)) < 1e-7);
  }
}

TEST_CASE("reference augmentation") {
  const std::vector<int> ref{1, 2, 3, 4, 5, 6, 7, 8};
  Rng rng(1);
  CHECK(augment_reference(ref, AugmentRates{0, 0, 0}, rng) == ref);
  CHECK(augment_reference(ref, AugmentRates{0, 1, 0}, rng).empty());
  CHECK(augment_reference(std::vector<int>{}, AugmentRates{}, rng).empty());
  const auto all_sub = augment_reference(ref, AugmentRates{1, 0, 0}, rng);
  REQUIRE(all_sub.size() == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(all_sub[i] != ref[i]);
  const auto all_ins = augment_reference(ref, AugmentRates{0, 0, 1}, rng);
  CHECK(all_ins.size() == 2 * ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(all_ins[2 * i] == ref[i]);

  Rng a(77), b(77);
  const AugmentRates rates;
  CHECK(augment_reference(ref, rates, a) == augment_reference(ref, rates, b));
  CHECK_THROWS_AS(augment_reference(ref, AugmentRates{0.6, 0.3, 0.3}, a), ConfigError);

  // Long-run edit frequencies.
  Rng r(8);
  const std::vector<int> one{3};
  int kept = 0, deleted = 0, inserted = 0, substituted = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto out = augment_reference(one, rates, r);
    if (out.empty()) ++deleted;
    else if (out.size() == 2) ++inserted;
    else if (out[0] == 3) ++kept;
    else ++substituted;
  }
  CHECK(std::abs(substituted / double(n) - 0.1) < 0.01);
  CHECK(std::abs(deleted / double(n) - 0.05) < 0.008);
  CHECK(std::abs(inserted / double(n) - 0.05) < 0.008);
}

TEST_CASE("learning-rate schedule and optimizer") {
  Matrix x = Matrix::Constant(1, 2, 3.0);
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.warmup = 10;
  Adam opt({&x}, cfg);
  CHECK(opt.learning_rate(1) == doctest::Approx(0.01));
  CHECK(opt.learning_rate(10) == doctest::Approx(0.1));
  CHECK(opt.learning_rate(40) == doctest::Approx(0.05));
  for (int i = 0; i < 500; ++i) opt.step({2.0 * x});
  CHECK(x.cwiseAbs().maxCoeff() < 1e-2);
}

TEST_CASE("joint objective gradient is the weighted sum of its parts") {
  const ModelParams p = tiny_model(40);
  const auto data = small_corpus(1, 6, 4, 0.5);
  const ExampleTargets t = make_targets(data[0], TargetMode::kMdd);
  auto grads_for = [&](double beta, double gamma) {
    TrainConfig cfg;
    cfg.weights = LossWeights{5.0, beta, gamma};
    std::vector<Matrix> g;
    const ExampleLoss l = example_gradients(p, t, data[0].features, cfg, 0, &g);
    CHECK(l.total == doctest::Approx(l.ctc + beta * l.sc + gamma * l.pp).epsilon(1e-14));
    return g;
  };
  const auto g0 = grads_for(0, 0), gs = grads_for(1, 0), gp = grads_for(0, 1), gm = grads_for(1.7, 0.3);
  double worst = 0, scale = 0;
  for (std::size_t k = 0; k < g0.size(); ++k) {
    const Matrix expect = g0[k] + 1.7 * (gs[k] - g0[k]) + 0.3 * (gp[k] - g0[k]);
    if (expect.size()) {
      worst = std::max(worst, (gm[k] - expect).cwiseAbs().maxCoeff());
      scale = std::max(scale, expect.cwiseAbs().maxCoeff());
    }
  }
  CHECK(worst <= 1e-10 * scale);

  // Finite differences of the total loss.
  ModelParams q = p;
  TrainConfig cfg;
  std::vector<Matrix> g;
  example_gradients(q, t, data[0].features, cfg, 0, &g);
  std::vector<Matrix*> params;
  visit_params(q, [&](const std::string&, Matrix& m) { params.push_back(&m); });
  for (std::size_t k : {std::size_t{0}, params.size() / 2, params.size() - 1}) {
    Matrix& m = *params[k];
    for (Index i = 0; i < std::min<Index>(m.size(), 4); ++i) {
      const double saved = m.data()[i];
      m.data()[i] = saved + 1e-5;
      const double up = example_gradients(q, t, data[0].features, cfg, 0, nullptr).total;
      m.data()[i] = saved - 1e-5;
      const double down = example_gradients(q, t, data[0].features, cfg, 0, nullptr).total;
      m.data()[i] = saved;
      const double numeric = (up - down) / 2e-5;
      CHECK(std::abs(numeric - g[k].data()[i]) <= 1e-4 * std::max(1.0, std::abs(numeric)));
    }
  }
}

TEST_CASE("training set validation") {
  const ModelConfig c = tiny_config(2);
  CHECK_THROWS_AS(validate_training_set(std::vector<Utterance>{}, c, TargetMode::kMdd), ContractError);
  auto data = small_corpus(2, 5, 1);
  CHECK_NOTHROW(validate_training_set(data, c, TargetMode::kMdd));
  auto short_audio = data;
  short_audio[1].features = short_audio[1].features.topRows(4);
  CHECK_THROWS_AS(validate_training_set(short_audio, c, TargetMode::kMdd), DataError);
  auto no_scores = data;
  no_scores[0].scores.reset();
  CHECK_NOTHROW(validate_training_set(no_scores, c, TargetMode::kMdd));
  CHECK_THROWS_AS(validate_training_set(no_scores, c, TargetMode::kScoring), DataError);
  auto wrong_dim = data;
  wrong_dim[0].features = Matrix::Zero(40, 3);
  CHECK_THROWS_AS(validate_training_set(wrong_dim, c, TargetMode::kMdd), DataError);
}

TEST_CASE("one utterance is memorized by the acoustic model") {
  const auto data = small_corpus(1, 4, 12, 0.0);
  std::vector<StepRecord> rec;
  ModelConfig c = tiny_config(1);
  c.model_dim = 16;
  c.head_dim = 8;
  const ModelParams am = pretrain_stage1(data, c, quick_config(500), nullptr, &rec);
  REQUIRE(rec.size() == 500);
  CHECK(rec.back().ctc < 0.01);
  CHECK(rec.back().sc == 0.0);
  StreamSession s(am, std::vector<int>{});
  s.push_frames(data[0].features);
  CHECK(s.finalize().ctc_hypothesis == *data[0].pronounced);
}

TEST_CASE("stage two starts where stage one stopped") {
  const auto data = small_corpus(3, 5, 21);
  const ModelConfig c = tiny_config(2);
  const ModelParams am = pretrain_stage1(data, c, quick_config(20), nullptr);
  const ModelParams joint = finetune_stage2(data, am, c, quick_config(0), nullptr);
  TrainConfig cfg;
  for (const Utterance& u : data) {
    const ExampleTargets t = make_targets(u, TargetMode::kMdd);
    const double before = example_gradients(am, t, u.features, cfg, 0, nullptr).ctc;
    const double after = example_gradients(joint, t, u.features, cfg, 0, nullptr).ctc;
    CHECK(std::abs(before - after) < 1e-12 * std::max(1.0, before));
  }
  CHECK_THROWS_AS(finetune_stage2(data, joint, c, quick_config(1), nullptr), LoadError);
  ModelConfig wider = c;
  wider.ctc_hidden = 20;
  CHECK_THROWS_AS(finetune_stage2(data, am, wider, quick_config(1), nullptr), LoadError);

  TrainConfig scoring = quick_config(3);
  scoring.mode = TargetMode::kScoring;
  CHECK_NOTHROW(finetune_stage2(data, am, c, scoring, nullptr));
}

TEST_CASE("training is reproducible and independent of worker count") {
  const auto data = small_corpus(5, 5, 2);
  ModelConfig c = tiny_config(1);
  c.dropout = 0.1;
  TrainConfig cfg = quick_config(6);
  cfg.batch_size = 3;
  std::ostringstream log1, log2, log3;
  const ModelParams a = pretrain_stage1(data, c, cfg, &log1);
  const ModelParams b = pretrain_stage1(data, c, cfg, &log2);
  cfg.workers = 3;
  const ModelParams d = pretrain_stage1(data, c, cfg, &log3);
  CHECK(log1.str() == log2.str());
  CHECK(log1.str() == log3.str());
  CHECK(serialize_params(a) == serialize_params(b));
  CHECK(serialize_params(a) == serialize_params(d));
  CHECK(log1.str().rfind("step=1 ctc=", 0) == 0);

  TrainConfig aug = quick_config(4);
  aug.augment_prob = 1.0;
  const ModelParams am = pretrain_stage1(data, tiny_config(1), quick_config(2), nullptr);
  std::ostringstream l1, l2;
  finetune_stage2(data, am, tiny_config(2), aug, &l1);
  finetune_stage2(data, am, tiny_config(2), aug, &l2);
  CHECK(l1.str() == l2.str());
}
