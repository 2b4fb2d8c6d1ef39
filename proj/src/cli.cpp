// src/cli.cpp

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
#include "smdd/cli.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <fstream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "smdd/align.hpp"
#include "smdd/ctc.hpp"
#include "smdd/gradcheck.hpp"
#include "smdd/phones.hpp"
#include "smdd/rng.hpp"
#include "smdd/tensor.hpp"

namespace smdd {

namespace {

const std::vector<std::string> kTrainKeys{"steps", "batch_size", "lr",      "warmup",  "clip_norm", "alpha",  "beta",
                                          "gamma", "mode",       "augment_prob", "aug_sub", "aug_del", "aug_ins", "workers"};
const std::vector<std::string> kSynthKeys{"n_utts", "vocab_size", "frames_per_phone", "mispron_rate", "blend_rate",
                                          "noise",  "n_words"};
const std::vector<std::string> kRunKeys{"threshold", "chunk_frames", "seed"};

KeyValues subset(const KeyValues& kv, const std::vector<std::string>& keys) {
  KeyValues out;
  for (const auto& [k, v] : kv.values())
    if (std::find(keys.begin(), keys.end(), k) != keys.end()) out.set(k, v);
  return out;
}

}  // namespace

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> all = ModelConfig::keys();
  for (const auto* group : {&kTrainKeys, &kSynthKeys, &kRunKeys}) all.insert(all.end(), group->begin(), group->end());
  return all;
}

RunConfig RunConfig::resolve(const KeyValues& kv, const ModelConfig& model_defaults) {
  kv.check_known(keys());
  RunConfig rc;
  rc.model = ModelConfig::from_key_values(subset(kv, ModelConfig::keys()), model_defaults);

  const std::string seed = kv.get_string("seed", "1");
  const auto [end, ec] = std::from_chars(seed.data(), seed.data() + seed.size(), rc.seed);
  if (ec != std::errc() || end != seed.data() + seed.size()) throw ConfigError("seed must be a nonnegative integer, got '" + seed + "'");
  rc.threshold = kv.get_double("threshold", rc.threshold);
  if (!(rc.threshold >= 0.0 && rc.threshold <= 1.0)) throw ConfigError("threshold must lie in [0, 1]");
  rc.chunk_frames = kv.get_int("chunk_frames", rc.chunk_frames);
  if (rc.chunk_frames <= 0) throw ConfigError("chunk_frames must be positive");

  TrainConfig& t = rc.train;
  t.steps = kv.get_int("steps", t.steps);
  t.batch_size = kv.get_int("batch_size", t.batch_size);
  t.adam.lr = kv.get_double("lr", t.adam.lr);
  t.adam.warmup = kv.get_int("warmup", t.adam.warmup);
  t.adam.clip_norm = kv.get_double("clip_norm", t.adam.clip_norm);
  t.weights.alpha = kv.get_double("alpha", t.weights.alpha);
  t.weights.beta = kv.get_double("beta", t.weights.beta);
  t.weights.gamma = kv.get_double("gamma", t.weights.gamma);
  t.mode = parse_target_mode(kv.get_string("mode", "mdd"));
  t.augment_prob = kv.get_double("augment_prob", t.augment_prob);
  t.augment.sub = kv.get_double("aug_sub", t.augment.sub);
  t.augment.del = kv.get_double("aug_del", t.augment.del);
  t.augment.ins = kv.get_double("aug_ins", t.augment.ins);
  t.workers = kv.get_int("workers", t.workers);
  t.seed = rc.seed;
  t.weights.validate();
  t.augment.validate();
  if (t.steps < 0 || t.batch_size <= 0 || t.workers <= 0) throw ConfigError("steps, batch_size and workers must be positive");
  if (!(t.adam.lr > 0.0) || t.adam.warmup < 0) throw ConfigError("lr must be positive and warmup nonnegative");
  if (t.augment_prob < 0.0 || t.augment_prob > 1.0) throw ConfigError("augment_prob must lie in [0, 1]");

  SynthConfig& s = rc.synth;
  s.n_utts = kv.get_int("n_utts", s.n_utts);
  s.vocab_size = kv.get_int("vocab_size", s.vocab_size);
  s.frames_per_phone = kv.get_int("frames_per_phone", s.frames_per_phone);
  s.feature_dim = rc.model.feature_dim;
  s.mispron_rate = kv.get_double("mispron_rate", s.mispron_rate);
  s.blend_rate = kv.get_double("blend_rate", s.blend_rate);
  s.noise = kv.get_double("noise", s.noise);
  s.n_words = kv.get_int("n_words", s.n_words);
  s.validate();
  return rc;
}

// ---------------------------------------------------------------------------

namespace {

void ratio_line(std::string& out, const char* name, const Ratio& r) {
  out += std::string(name) + "\t" + format_double(r.value) + (r.defined ? "" : "\tundefined") + "\n";
}

}  // namespace

std::string metrics_report(const MddCounts& c, std::optional<double> per, long speaker_insertions) {
  std::string out;
  out += "ta\t" + std::to_string(c.ta) + "\n";
  out += "fr\t" + std::to_string(c.fr) + "\n";
  out += "fa\t" + std::to_string(c.fa) + "\n";
  out += "tr\t" + std::to_string(c.tr()) + "\n";
  out += "tr_correct_diag\t" + std::to_string(c.tr_correct_diag) + "\n";
  out += "tr_error_diag\t" + std::to_string(c.tr_error_diag) + "\n";
  ratio_line(out, "precision", precision(c));
  ratio_line(out, "recall", recall(c));
  ratio_line(out, "f1", f1(c));
  if (per) out += "per\t" + format_double(*per) + "\n";
  out += "speaker_insertions\t" + std::to_string(speaker_insertions) + "\n";
  return out;
}

std::string metrics_summary_json(const MddCounts& c, std::optional<double> per, long speaker_insertions) {
  nlohmann::ordered_json j;
  j["ta"] = c.ta;
  j["fr"] = c.fr;
  j["fa"] = c.fa;
  j["tr"] = c.tr();
  j["tr_correct_diag"] = c.tr_correct_diag;
  j["tr_error_diag"] = c.tr_error_diag;
  for (const auto& [name, r] : {std::pair{"precision", precision(c)}, {"recall", recall(c)}, {"f1", f1(c)}}) {
    j[name] = r.value;
    j[std::string(name) + "_defined"] = r.defined;
  }
  if (per) j["per"] = *per;
  j["speaker_insertions"] = speaker_insertions;
  return j.dump(2) + "\n";
}

std::string format_decisions(std::span<const int> decisions) { return PhoneSet::instance().format(decisions); }

std::vector<int> parse_decisions(std::string_view text) {
  const PhoneSet& ps = PhoneSet::instance();
  std::vector<int> out;
  std::istringstream in{std::string(text)};
  std::string tok;
  while (in >> tok) out.push_back(tok == "serr" ? PhoneSet::kSerr : ps.id(tok));
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<double> threshold, alpha, beta, gamma;
  std::optional<std::string> mode;
  std::optional<int> chunk_frames;
};

KeyValues gather_settings(const CommonOptions& o) {
  KeyValues kv;
  if (!o.config_path.empty()) kv = KeyValues::load(o.config_path);
  for (const std::string& s : o.overrides) kv.set_assignment(s);
  if (o.seed) kv.set("seed", std::to_string(*o.seed));
  if (o.threshold) kv.set("threshold", format_double(*o.threshold));
  if (o.alpha) kv.set("alpha", format_double(*o.alpha));
  if (o.beta) kv.set("beta", format_double(*o.beta));
  if (o.gamma) kv.set("gamma", format_double(*o.gamma));
  if (o.mode) kv.set("mode", *o.mode);
  if (o.chunk_frames) kv.set("chunk_frames", std::to_string(*o.chunk_frames));
  return kv;
}

RunConfig resolve_for_model(const CommonOptions& o, const ModelParams& p) {
  const RunConfig rc = RunConfig::resolve(gather_settings(o), p.config);
  if (rc.model.to_text() != p.config.to_text()) throw ConfigError("model settings conflict with the loaded parameters");
  return rc;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << text;
}

std::optional<Lexicon> maybe_lexicon(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return Lexicon::load(path);
}

std::vector<Utterance> load_manifest(const std::string& manifest, const std::optional<Lexicon>& lex) {
  return load_corpus(manifest, lex ? &*lex : nullptr);
}

// Shared by live streaming and the posterior injection hook.
struct UtteranceReport {
  std::string id;
  std::vector<int> reference;
  std::vector<int> hypothesis;
  std::optional<std::vector<double>> sc;
};

nlohmann::ordered_json finish_report(const UtteranceReport& r, double threshold, bool fusion, std::ostream& out) {
  const PhoneSet& ps = PhoneSet::instance();
  out << "ctc\t" << r.id << "\t" << ps.format(r.hypothesis) << "\n";
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["hypothesis"] = ps.format(r.hypothesis);
  if (r.reference.empty()) return j;
  j["reference"] = ps.format(r.reference);
  std::optional<std::span<const double>> sc;
  if (fusion && r.sc) {
    sc = std::span<const double>(*r.sc);
    const auto fused = fuse(r.reference, r.hypothesis, *sc, threshold);
    out << "fusion\t" << r.id << "\t" << ps.format(fusion_phones(fused)) << "\n";
    j["fusion"] = ps.format(fusion_phones(fused));
  }
  const auto decisions = reference_decisions(r.reference, r.hypothesis, sc, threshold);
  out << "decisions\t" << r.id << "\t" << format_decisions(decisions) << "\n";
  j["decisions"] = format_decisions(decisions);
  if (r.sc) j["sc"] = *r.sc;
  return j;
}

int cmd_pretrain(const CommonOptions& o, const std::string& manifest, const std::string& lexicon,
                 const std::string& out_path, const std::string& log_path, std::ostream& out) {
  const RunConfig rc = RunConfig::resolve(gather_settings(o));
  const auto data = load_manifest(manifest, maybe_lexicon(lexicon));
  std::ostringstream log;
  const ModelParams p = pretrain_stage1(data, rc.model, rc.train, &log);
  save_params(p, out_path);
  if (log_path.empty()) out << log.str();
  else write_text(log_path, log.str());
  out << "saved\t" << out_path << "\n";
  return 0;
}

int cmd_finetune(const CommonOptions& o, const std::string& init, const std::string& manifest,
                 const std::string& lexicon, const std::string& out_path, const std::string& log_path,
                 std::ostream& out) {
  const ModelParams am = load_params(init);
  ModelConfig defaults = am.config;
  defaults.stage = 2;
  const RunConfig rc = RunConfig::resolve(gather_settings(o), defaults);
  const auto data = load_manifest(manifest, maybe_lexicon(lexicon));
  std::ostringstream log;
  const ModelParams p = finetune_stage2(data, am, rc.model, rc.train, &log);
  save_params(p, out_path);
  if (log_path.empty()) out << log.str();
  else write_text(log_path, log.str());
  out << "saved\t" << out_path << "\n";
  return 0;
}

int cmd_stream(const CommonOptions& o, const std::string& model_path, const std::string& manifest,
               const std::string& lexicon, const std::string& inject, bool no_fusion, const std::string& out_path,
               std::ostream& out) {
  const PhoneSet& ps = PhoneSet::instance();
  std::string decisions;
  if (!inject.empty()) {
    // Replays stored CTC log-posteriors and classifier outputs through the
    // greedy decoder and the fusion rule.
    const RunConfig rc = RunConfig::resolve(gather_settings(o));
    const std::filesystem::path base = std::filesystem::path(inject).parent_path();
    std::ifstream in(inject);
    if (!in) throw DataError("cannot open " + inject);
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const auto j = nlohmann::json::parse(line);
      UtteranceReport r;
      r.id = j.at("id").get<std::string>();
      r.reference = ps.parse(j.at("reference").get<std::string>());
      if (j.contains("sc")) r.sc = j["sc"].get<std::vector<double>>();
      const std::filesystem::path post = j.at("posteriors").get<std::string>();
      const Matrix lp = read_features((post.is_absolute() ? post : base / post).string());
      if (lp.cols() != kCtcClasses) throw DataError("utterance " + r.id + ": posteriors need " + std::to_string(kCtcClasses) + " columns");
      out << "utt\t" << r.id << "\n";
      GreedyCtcDecoder dec(kCtcBlank);
      for (Index t = 0; t < lp.rows(); ++t)
        if (const auto phone = dec.push(lp.row(t)))
          out << "phone\t" << r.id << "\t" << (t + 1) * rc.model.output_frame_ms << "\t" << ps.name(*phone) << "\n";
      r.hypothesis = dec.hypothesis();
      decisions += finish_report(r, rc.threshold, !no_fusion, out).dump() + "\n";
    }
  } else {
    const ModelParams p = load_params(model_path);
    const RunConfig rc = resolve_for_model(o, p);
    const auto data = load_manifest(manifest, maybe_lexicon(lexicon));
    for (const Utterance& u : data) {
      if (u.features.cols() != p.config.feature_dim)
        throw ConfigError("utterance " + u.id + ": features have " + std::to_string(u.features.cols()) +
                          " dims, model expects " + std::to_string(p.config.feature_dim));
      out << "utt\t" << u.id << "\n";
      StreamSession s(p, p.config.stage == 2 ? std::span<const int>(u.reference) : std::span<const int>());
      std::size_t printed = 0;
      auto print_new = [&] {
        for (; printed < s.hypothesis().size(); ++printed)
          out << "phone\t" << u.id << "\t" << s.phone_emission_frames()[printed] * p.config.input_hop_ms << "\t"
              << ps.name(s.hypothesis()[printed]) << "\n";
      };
      for (Index at = 0; at < u.features.rows(); at += rc.chunk_frames) {
        s.push_frames(u.features.middleRows(at, std::min<Index>(rc.chunk_frames, u.features.rows() - at)));
        print_new();
      }
      const FinalResult f = s.finalize();
      print_new();
      UtteranceReport r;
      r.id = u.id;
      r.hypothesis = f.ctc_hypothesis;
      if (p.config.stage == 2) {
        r.reference = u.reference;
        r.sc = std::vector<double>(f.sc_probs.data(), f.sc_probs.data() + f.sc_probs.size());
      }
      decisions += finish_report(r, rc.threshold, !no_fusion, out).dump() + "\n";
    }
  }
  if (!out_path.empty()) write_text(out_path, decisions);
  return 0;
}

int cmd_evaluate(const std::string& decisions_path, const std::string& manifest, const std::string& lexicon,
                 const std::string& counts_text, const std::string& out_path, std::ostream& out) {
  MddCounts counts;
  std::optional<double> per;
  long insertions = 0;
  if (!counts_text.empty()) {
    std::vector<long> v;
    std::stringstream ss(counts_text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        v.push_back(std::stol(tok));
      } catch (const std::exception&) {
        throw ConfigError("--counts expects integers, got '" + tok + "'");
      }
    }
    if (v.size() != 4 && v.size() != 5) throw ConfigError("--counts expects TA,FR,FA,TR or TA,FR,FA,TR_correct,TR_error");
    for (long x : v)
      if (x < 0) throw ConfigError("--counts values must be nonnegative");
    counts = MddCounts{v[0], v[1], v[2], v[3], v.size() == 5 ? v[4] : 0};
  } else {
    if (decisions_path.empty() || manifest.empty()) throw ConfigError("evaluate needs --decisions and --manifest, or --counts");
    const auto data = load_manifest(manifest, maybe_lexicon(lexicon));
    std::map<std::string, const Utterance*> by_id;
    for (const Utterance& u : data) by_id[u.id] = &u;
    std::ifstream in(decisions_path);
    if (!in) throw DataError("cannot open " + decisions_path);
    std::vector<std::vector<int>> truths, hyps;
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const auto j = nlohmann::json::parse(line);
      const std::string id = j.at("id").get<std::string>();
      const auto it = by_id.find(id);
      if (it == by_id.end()) throw DataError("utterance " + id + ": not in the manifest");
      const Utterance& u = *it->second;
      if (!u.pronounced) throw DataError("utterance " + id + ": manifest has no pronounced phones");
      hyps.push_back(PhoneSet::instance().parse(j.at("hypothesis").get<std::string>()));
      truths.push_back(*u.pronounced);
      if (!j.contains("decisions")) continue;
      const std::vector<int> decisions = parse_decisions(j["decisions"].get<std::string>());
      if (decisions.size() != u.reference.size())
        throw DataError("utterance " + id + ": " + std::to_string(decisions.size()) + " decisions for " +
                        std::to_string(u.reference.size()) + " reference phones");
      counts += classify_outcomes(u.reference, derive_targets(u.reference, *u.pronounced).phones, decisions);
      for (const EditOp& op : needleman_wunsch(u.reference, *u.pronounced).ops) insertions += op.kind == EditKind::kInsert;
    }
    if (!truths.empty()) per = phone_error_rate(truths, hyps);
  }
  out << metrics_report(counts, per, insertions);
  if (!out_path.empty()) write_text(out_path, metrics_summary_json(counts, per, insertions));
  return 0;
}

int cmd_score(const CommonOptions& o, const std::string& model_path, const std::string& manifest,
              const std::string& lexicon, const std::string& out_path, std::ostream& out) {
  const ModelParams p = load_params(model_path);
  if (p.config.stage != 2) throw ConfigError("score needs a stage-2 model");
  resolve_for_model(o, p);
  const auto data = load_manifest(manifest, maybe_lexicon(lexicon));
  std::vector<double> predicted, reference;
  nlohmann::ordered_json utts = nlohmann::ordered_json::array();
  for (const Utterance& u : data) {
    if (!u.scores) throw DataError("utterance " + u.id + ": no phone scores");
    StreamSession s(p, u.reference);
    s.push_frames(u.features);
    const FinalResult f = s.finalize();
    const std::vector<double> ref = normalize_scores(*u.scores);
    out << u.id << "\t";
    nlohmann::ordered_json scores = nlohmann::ordered_json::array();
    for (Index i = 0; i < f.sc_probs.rows(); ++i) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%s%.4f", i ? " " : "", f.sc_probs(i, 0));
      out << buf;
      predicted.push_back(f.sc_probs(i, 0));
      reference.push_back(ref[i]);
      scores.push_back(f.sc_probs(i, 0));
    }
    out << "\n";
    utts.push_back({{"id", u.id}, {"scores", scores}});
  }
  const Eigen::Map<const Eigen::VectorXd> pv(predicted.data(), static_cast<Index>(predicted.size()));
  const Eigen::Map<const Eigen::VectorXd> rv(reference.data(), static_cast<Index>(reference.size()));
  const double r = pcc(Eigen::VectorXd(pv), Eigen::VectorXd(rv));
  out << "pcc\t" << format_double(r) << "\n";
  if (!out_path.empty()) {
    nlohmann::ordered_json j;
    j["pcc"] = r;
    j["pairs"] = predicted.size();
    j["utterances"] = utts;
    write_text(out_path, j.dump(2) + "\n");
  }
  return 0;
}

int cmd_synth(const CommonOptions& o, const std::string& dir, std::ostream& out) {
  const RunConfig rc = RunConfig::resolve(gather_settings(o));
  const SynthCorpus corpus = synth_corpus(rc.synth, rc.seed);
  write_synth_corpus(corpus, dir);
  out << "wrote\t" << corpus.entries.size() << "\tutterances\t" << dir << "\n";
  return 0;
}

int cmd_selftest(const std::string& model_path, std::ostream& out) {
  bool ok = true;
  for (const SelfCheck& c : run_selftest(model_path)) {
    out << (c.passed ? "PASS\t" : "FAIL\t") << c.name;
    if (!c.detail.empty()) out << "\t" << c.detail;
    out << "\n";
    ok = ok && c.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Streaming mispronunciation detection and diagnosis", "smdd"};
  app.require_subcommand(1);

  CommonOptions common;
  auto add_common = [&common](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "key = value settings file")->check(CLI::ExistingFile);
    sub->add_option("--set", common.overrides, "override one setting, key=value");
    sub->add_option("--seed", common.seed, "random seed");
  };
  auto add_weights = [&common](CLI::App* sub) {
    sub->add_option("--alpha", common.alpha, "minority-class weight");
    sub->add_option("--beta", common.beta, "classifier loss weight");
    sub->add_option("--gamma", common.gamma, "phone predictor loss weight");
    sub->add_option("--mode", common.mode, "mdd or scoring");
  };

  std::string manifest, lexicon, out_path, log_path, init, model, inject, decisions, counts;
  bool no_fusion = false;

  CLI::App* pretrain = app.add_subcommand("pretrain", "train the stage-1 acoustic model");
  add_common(pretrain);
  add_weights(pretrain);
  pretrain->add_option("--manifest", manifest, "training manifest")->required();
  pretrain->add_option("--lexicon", lexicon, "pronunciation lexicon");
  pretrain->add_option("--out", out_path, "parameter file to write")->required();
  pretrain->add_option("--log", log_path, "training log file (default: stdout)");

  CLI::App* finetune = app.add_subcommand("finetune", "train the full model from stage-1 weights");
  add_common(finetune);
  add_weights(finetune);
  finetune->add_option("--init", init, "stage-1 parameter file")->required();
  finetune->add_option("--manifest", manifest, "training manifest")->required();
  finetune->add_option("--lexicon", lexicon, "pronunciation lexicon");
  finetune->add_option("--out", out_path, "parameter file to write")->required();
  finetune->add_option("--log", log_path, "training log file (default: stdout)");

  CLI::App* stream = app.add_subcommand("stream", "decode feature files frame by frame");
  add_common(stream);
  stream->add_option("--model", model, "parameter file");
  stream->add_option("--manifest", manifest, "utterances to decode");
  stream->add_option("--lexicon", lexicon, "pronunciation lexicon");
  stream->add_option("--threshold", common.threshold, "classifier probability threshold");
  stream->add_option("--chunk-frames", common.chunk_frames, "input frames per push");
  stream->add_flag("--no-fusion", no_fusion, "report CTC decisions without the classifier");
  stream->add_option("--inject", inject, "JSONL of stored posteriors and classifier outputs (testing)");
  stream->add_option("--out", out_path, "decisions JSONL to write");

  CLI::App* evaluate = app.add_subcommand("evaluate", "detection and diagnosis metrics");
  evaluate->add_option("--decisions", decisions, "decisions JSONL from stream");
  evaluate->add_option("--manifest", manifest, "ground-truth manifest");
  evaluate->add_option("--lexicon", lexicon, "pronunciation lexicon");
  evaluate->add_option("--counts", counts, "TA,FR,FA,TR counts instead of decisions");
  evaluate->add_option("--out", out_path, "JSON summary to write");

  CLI::App* score = app.add_subcommand("score", "phone-level pronunciation scores and correlation");
  add_common(score);
  score->add_option("--model", model, "scoring-mode parameter file")->required();
  score->add_option("--manifest", manifest, "manifest with phone scores")->required();
  score->add_option("--lexicon", lexicon, "pronunciation lexicon");
  score->add_option("--out", out_path, "JSON summary to write");

  CLI::App* synth = app.add_subcommand("synth", "write a synthetic corpus");
  add_common(synth);
  synth->add_option("--out", out_path, "output directory")->required();

  CLI::App* selftest = app.add_subcommand("selftest", "internal consistency checks");
  selftest->add_option("--model", model, "parameter file that must load");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (pretrain->parsed()) return cmd_pretrain(common, manifest, lexicon, out_path, log_path, out);
    if (finetune->parsed()) return cmd_finetune(common, init, manifest, lexicon, out_path, log_path, out);
    if (stream->parsed()) {
      if (inject.empty() && (model.empty() || manifest.empty())) {
        err << "stream needs --model and --manifest, or --inject\n";
        return 2;
      }
      return cmd_stream(common, model, manifest, lexicon, inject, no_fusion, out_path, out);
    }
    if (evaluate->parsed()) return cmd_evaluate(decisions, manifest, lexicon, counts, out_path, out);
    if (score->parsed()) return cmd_score(common, model, manifest, lexicon, out_path, out);
    if (synth->parsed()) return cmd_synth(common, out_path, out);
    if (selftest->parsed()) return cmd_selftest(model, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

// ---------------------------------------------------------------------------

namespace {

ModelParams selftest_model(std::uint64_t seed) {
  ModelConfig c;
  c.feature_dim = 6;
  c.model_dim = 8;
  c.num_heads = 2;
  c.head_dim = 4;
  c.ffn_dim = 16;
  c.ctc_hidden = 12;
  c.dropout = 0.0;
  ModelParams p = init_model(c, seed);
  Rng rng(seed + 1);
  p.coca.wo_speech = rng.normal_matrix(p.coca.wo_speech.rows(), p.coca.wo_speech.cols()) * 0.3;
  return p;
}

int edit_cost(const std::vector<int>& a, const std::vector<int>& b, std::size_t i, std::size_t j) {
  if (i == a.size()) return static_cast<int>(b.size() - j);
  if (j == b.size()) return static_cast<int>(a.size() - i);
  return std::min({edit_cost(a, b, i + 1, j + 1) + (a[i] != b[j]), edit_cost(a, b, i + 1, j) + 1,
                   edit_cost(a, b, i, j + 1) + 1});
}

// Sum over every frame labelling that collapses to the target.
double path_probability(const Matrix& lp, const std::vector<int>& target, int blank) {
  const Index frames = lp.rows(), classes = lp.cols();
  std::vector<int> path(frames, 0);
  double total = 0.0;
  while (true) {
    if (collapse_ctc(path, blank) == target) {
      double lsum = 0.0;
      for (Index t = 0; t < frames; ++t) lsum += lp(t, path[t]);
      total += std::exp(lsum);
    }
    Index t = 0;
    while (t < frames && ++path[t] == classes) path[t++] = 0;
    if (t == frames) return total;
  }
}

void all_sequences_up_to(int length, int alphabet, std::vector<std::vector<int>>& out) {
  out.assign(1, {});
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (static_cast<int>(out[k].size()) == length) continue;
    for (int c = 0; c < alphabet; ++c) {
      std::vector<int> next = out[k];
      next.push_back(c);
      out.push_back(next);
    }
  }
}

}  // namespace

std::vector<SelfCheck> run_selftest(const std::string& params_path) {
  std::vector<SelfCheck> checks;
  auto run = [&checks](const std::string& name, const std::function<std::string()>& body) {
    SelfCheck c{name, false, ""};
    try {
      c.detail = body();
      c.passed = c.detail.empty();
    } catch (const std::exception& e) {
      c.detail = e.what();
    }
    checks.push_back(c);
  };
  const PhoneSet& ps = PhoneSet::instance();

  run("metrics", [] {
    const double a = f1(MddCounts{24517, 1197, 2102, 2189, 0}).value;
    const double b = f1(MddCounts{24273, 1467, 1783, 2483, 0}).value;
    if (std::abs(a - 0.5703) > 1e-4 || std::abs(b - 0.6044) > 1e-4)
      return "f1 " + format_double(a) + ", " + format_double(b);
    return std::string();
  });

  run("fusion", [&ps] {
    const std::vector<int> ref = ps.parse("W EH N T T UW B EH D");
    const std::vector<int> hyp = ps.parse("SH IY W EH N T T UW B EH");
    const std::vector<double> sc{0, 0, 0, 0.63, 0, 0.4, 0, 0.92, 0.44};
    const std::string got = ps.format(fusion_phones(fuse(ref, hyp, sc, 0.5)));
    return got == "SH IY W EH N serr T UW B serr" ? std::string() : "got " + got;
  });

  run("alignment", [] {
    std::vector<std::vector<int>> seqs;
    all_sequences_up_to(4, 3, seqs);
    for (const auto& a : seqs)
      for (const auto& b : seqs)
        if (needleman_wunsch(a, b).total_cost != edit_cost(a, b, 0, 0)) return std::string("cost differs from exhaustive search");
    return std::string();
  });

  run("ctc", [] {
    Rng rng(41);
    for (int trial = 0; trial < 100; ++trial) {
      const int classes = 2 + rng.uniform_int(3), blank = classes - 1;
      const Index frames = 1 + rng.uniform_int(5);
      std::vector<int> target(rng.uniform_int(3));
      for (int& y : target) y = rng.uniform_int(blank);
      if (ctc_min_frames(target) > frames) continue;
      Matrix lp = rng.normal_matrix(frames, classes);
      for (Index t = 0; t < frames; ++t) {
        const double m = lp.row(t).maxCoeff();
        lp.row(t).array() -= m + std::log((lp.row(t).array() - m).exp().sum());
      }
      const double expect = -std::log(path_probability(lp, target, blank));
      const double got = ctc_loss(lp, target, blank).loss;
      if (std::abs(got - expect) > 1e-9) return "loss " + format_double(got) + " vs " + format_double(expect);
    }
    return std::string();
  });

  run("gradients", [] {
    ModelParams p = selftest_model(31);
    Rng rng(32);
    const Matrix x = rng.normal_matrix(14, p.config.feature_dim);
    const std::vector<int> ref{3, 8, 12};
    const Matrix w_ctc = rng.normal_matrix(4, kCtcClasses);
    const Matrix w_pp = rng.normal_matrix(3, ModelConfig::kPhoneVocab);
    const Matrix w_sc = rng.normal_matrix(3, 1);
    auto build = [&](Tape& t) {
      const ModelOutputs o = forward(t, p, x, ref);
      return add(add(sum(mul(o.ctc_log_probs, t.constant(w_ctc))), sum(mul(o.pp_log_probs, t.constant(w_pp)))),
                 sum(mul(o.sc_probs, t.constant(w_sc))));
    };
    std::vector<Matrix*> targets;
    visit_params(p, [&targets](const std::string&, Matrix& m) { targets.push_back(&m); });
    const GradCheckResult r = check_gradients(build, targets);
    return r.max_rel_error < 1e-4 ? std::string() : "relative error " + format_double(r.max_rel_error);
  });

  run("streaming", [] {
    const ModelParams p = selftest_model(11);
    Rng rng(5);
    const Matrix feats = rng.normal_matrix(37, p.config.feature_dim);
    const std::vector<int> ref{3, 7, 12};
    Tape tape(false);
    const ModelOutputs off = forward(tape, p, feats, ref);
    StreamSession s(p, ref);
    Matrix ctc(0, kCtcClasses);
    auto take = [&ctc](const StreamEmission& e) {
      Matrix next(ctc.rows() + e.ctc_log_probs.rows(), kCtcClasses);
      next << ctc, e.ctc_log_probs;
      ctc = next;
    };
    for (Index at = 0; at < feats.rows(); at += 3)
      take(s.push_frames(feats.middleRows(at, std::min<Index>(3, feats.rows() - at))));
    const FinalResult f = s.finalize();
    take(f.tail);
    const Matrix& ref_lp = off.ctc_log_probs.value();
    const Matrix& ref_sc = off.sc_probs.value();
    if (ctc.rows() != ref_lp.rows() || f.sc_probs.rows() != ref_sc.rows()) return std::string("shape mismatch");
    const double d = std::max((ctc - ref_lp).cwiseAbs().maxCoeff(), (f.sc_probs - ref_sc).cwiseAbs().maxCoeff());
    if (d > 1e-8) return "max difference " + format_double(d);
    for (int ms : s.emission_latency_ms())
      if (ms > p.config.lookahead_ms + p.config.output_frame_ms) return "latency " + std::to_string(ms) + " ms";
    return std::string();
  });

  if (!params_path.empty()) {
    run("load " + params_path, [&params_path] {
      load_params(params_path).config.validate();
      return std::string();
    });
  }
  return checks;
}

}  // namespace smdd
