// tests/test_cli.cpp

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

#include <filesystem>
#include <fstream>
#include <sstream>

#include "smdd/cli.hpp"
#include "smdd/phones.hpp"

using namespace smdd;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "smdd");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch_dir(const char* name) {
  const fs::path d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::string line_with(const std::string& text, const std::string& prefix) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(prefix, 0) == 0) return line;
  return "";
}

// Log posteriors whose greedy decode is `phones`: each phone for one frame,
// then a blank frame.
Matrix posteriors_for(const std::vector<int>& phones) {
  Matrix lp = Matrix::Constant(2 * static_cast<Index>(phones.size()), kCtcClasses, std::log(0.01 / (kCtcClasses - 1)));
  for (std::size_t i = 0; i < phones.size(); ++i) {
    lp(2 * i, phones[i]) = std::log(0.99);
    lp(2 * i + 1, kCtcBlank) = std::log(0.99);
  }
  return lp;
}

const std::vector<std::string> kTiny{"--set", "feature_dim=6", "--set", "model_dim=8",  "--set", "num_heads=2",
                                     "--set", "head_dim=4",    "--set", "ffn_dim=16",   "--set", "ctc_hidden=12",
                                     "--set", "dropout=0",     "--set", "n_utts=4",     "--set", "warmup=5"};

std::vector<std::string> with_tiny(std::vector<std::string> args) {
  args.insert(args.end(), kTiny.begin(), kTiny.end());
  return args;
}

}  // namespace

TEST_CASE("usage errors") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"bogus"}).code == 2);
  const Run r = cli({"finetune", "--manifest", "m.jsonl", "--out", "x.bin"});
  CHECK(r.code == 2);
  CHECK(r.err.find("--init") != std::string::npos);
  CHECK(cli({"stream"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("settings precedence and validation") {
  const fs::path d = scratch_dir("smdd_cli_settings");
  std::ofstream(d / "run.conf") << "alpha = 2\nbeta = 3\nthreshold = 0.2\n";
  KeyValues kv = KeyValues::load((d / "run.conf").string());
  kv.set_assignment("beta=4");
  const RunConfig rc = RunConfig::resolve(kv);
  CHECK(rc.train.weights.alpha == 2.0);
  CHECK(rc.train.weights.beta == 4.0);
  CHECK(rc.threshold == 0.2);
  CHECK(rc.synth.feature_dim == rc.model.feature_dim);

  KeyValues bad;
  bad.set("threshold", "1.5");
  CHECK_THROWS_AS(RunConfig::resolve(bad), ConfigError);
  KeyValues unknown;
  unknown.set("bogus", "1");
  CHECK_THROWS_AS(RunConfig::resolve(unknown), ConfigError);
  KeyValues seed;
  seed.set("seed", "-3");
  CHECK_THROWS_AS(RunConfig::resolve(seed), ConfigError);

  const Run r = cli({"synth", "--out", (d / "c").string(), "--set", "bogus=1"});
  CHECK(r.code == 1);
  CHECK(r.err.find("bogus") != std::string::npos);
}

TEST_CASE("evaluate from counts") {
  const Run r = cli({"evaluate", "--counts", "24517,1197,2102,2189"});
  REQUIRE(r.code == 0);
  const MddCounts c{24517, 1197, 2102, 2189, 0};
  CHECK(line_with(r.out, "f1\t") == "f1\t" + format_double(f1(c).value));
  CHECK(line_with(r.out, "precision\t") == "precision\t" + format_double(precision(c).value));
  CHECK(std::abs(f1(c).value - 0.5703) < 1e-4);
  CHECK(r.out == metrics_report(c, std::nullopt, 0));
  CHECK(cli({"evaluate", "--counts", "1,2,x,4"}).code == 1);
  CHECK(cli({"evaluate", "--counts", "1,2,3"}).code == 1);
}

TEST_CASE("decision tokens") {
  const auto& ps = PhoneSet::instance();
  const std::vector<int> d{ps.id("AA"), PhoneSet::kSerr, PhoneSet::kDel, ps.id("B")};
  CHECK(format_decisions(d) == "AA serr <del> B");
  CHECK(parse_decisions(format_decisions(d)) == d);
}

TEST_CASE("stream with injected posteriors") {
  const auto& ps = PhoneSet::instance();
  const fs::path d = scratch_dir("smdd_cli_inject");
  write_features(posteriors_for(ps.parse("SH IY W EH N T T UW B EH")), (d / "table.cmft").string());
  write_features(Matrix(0, kCtcClasses), (d / "silent.cmft").string());
  std::ofstream(d / "inject.jsonl")
      << R"({"id": "u1", "reference": "W EH N T T UW B EH D", "posteriors": "table.cmft", "sc": [0, 0, 0, 0.63, 0, 0.4, 0, 0.92, 0.44]})"
      << "\n"
      << R"({"id": "u2", "reference": "AA B", "posteriors": "silent.cmft", "sc": [0.9, 0.1]})" << "\n";

  const Run r = cli({"stream", "--inject", (d / "inject.jsonl").string(), "--out", (d / "dec.jsonl").string()});
  REQUIRE(r.code == 0);
  CHECK(line_with(r.out, "fusion\tu1") == "fusion\tu1\tSH IY W EH N serr T UW B serr");
  CHECK(line_with(r.out, "ctc\tu1") == "ctc\tu1\tSH IY W EH N T T UW B EH");
  CHECK(line_with(r.out, "phone\tu1") == "phone\tu1\t40\tSH");
  CHECK(line_with(r.out, "ctc\tu2") == "ctc\tu2\t");
  CHECK(line_with(r.out, "fusion\tu2") == "fusion\tu2\tserr");
  CHECK(slurp(d / "dec.jsonl").find("\"decisions\":\"W EH N serr T UW B serr <del>\"") != std::string::npos);

  const Run ctc_only = cli({"stream", "--inject", (d / "inject.jsonl").string(), "--no-fusion"});
  CHECK(line_with(ctc_only.out, "fusion\t").empty());
  CHECK(line_with(ctc_only.out, "decisions\tu1") == "decisions\tu1\tW EH N T T UW B EH <del>");

  const Run strict = cli({"stream", "--inject", (d / "inject.jsonl").string(), "--threshold", "0.95"});
  CHECK(line_with(strict.out, "fusion\tu1") == "fusion\tu1\tSH IY W EH N T T UW B EH");
}

TEST_CASE("synth, pretrain, finetune, stream, evaluate, score") {
  const fs::path d = scratch_dir("smdd_cli_pipeline");
  const std::string corpus = (d / "corpus").string(), manifest = corpus + "/manifest.jsonl",
                    lexicon = corpus + "/lexicon.txt";
  REQUIRE(cli(with_tiny({"synth", "--out", corpus, "--set", "blend_rate=0.2"})).code == 0);

  const Run pre = cli(with_tiny({"pretrain", "--manifest", manifest, "--lexicon", lexicon, "--out",
                                 (d / "am.bin").string(), "--set", "steps=20"}));
  REQUIRE(pre.code == 0);
  CHECK(load_params((d / "am.bin").string()).config.stage == 1);
  CHECK(line_with(pre.out, "step=20 ").size() > 0);

  CHECK(cli({"finetune", "--init", (d / "missing.bin").string(), "--manifest", manifest, "--out", "x"}).code == 1);
  auto finetune = [&](const std::string& out, const std::string& log) {
    return cli(with_tiny({"finetune", "--init", (d / "am.bin").string(), "--manifest", manifest, "--lexicon", lexicon,
                          "--out", (d / out).string(), "--log", (d / log).string(), "--set", "steps=10",
                          "--mode", "scoring"}));
  };
  REQUIRE(finetune("full.bin", "a.log").code == 0);
  REQUIRE(finetune("again.bin", "b.log").code == 0);
  CHECK(slurp(d / "full.bin") == slurp(d / "again.bin"));
  CHECK(slurp(d / "a.log") == slurp(d / "b.log"));
  const ModelParams full = load_params((d / "full.bin").string());
  CHECK(full.config.stage == 2);
  CHECK(full.config.model_dim == 8);

  auto stream = [&](const std::string& chunk, const std::string& out) {
    return cli({"stream", "--model", (d / "full.bin").string(), "--manifest", manifest, "--lexicon", lexicon,
                "--chunk-frames", chunk, "--out", (d / out).string()});
  };
  const Run s1 = stream("1", "d1.jsonl"), s7 = stream("7", "d7.jsonl");
  REQUIRE(s1.code == 0);
  CHECK(line_with(s1.out, "fusion\t").size() > 0);
  CHECK(slurp(d / "d1.jsonl") == slurp(d / "d7.jsonl"));

  const Run ev = cli({"evaluate", "--decisions", (d / "d1.jsonl").string(), "--manifest", manifest, "--lexicon", lexicon,
                      "--out", (d / "m.json").string()});
  REQUIRE(ev.code == 0);
  CHECK(line_with(ev.out, "per\t").size() > 0);
  CHECK(slurp(d / "m.json").find("\"f1\"") != std::string::npos);

  const Run sc = cli({"score", "--model", (d / "full.bin").string(), "--manifest", manifest, "--lexicon", lexicon});
  CHECK(sc.code == 0);
  CHECK(line_with(sc.out, "pcc\t").size() > 0);
  CHECK(cli({"score", "--model", (d / "am.bin").string(), "--manifest", manifest, "--lexicon", lexicon}).code == 1);

  CHECK(cli({"stream", "--model", (d / "full.bin").string(), "--manifest", manifest, "--lexicon", lexicon, "--set",
             "model_dim=16"})
            .code == 1);
  const std::string other = (d / "other").string();
  REQUIRE(cli({"synth", "--out", other, "--set", "feature_dim=5", "--set", "n_utts=2"}).code == 0);
  const Run wrong_dim =
      cli({"stream", "--model", (d / "full.bin").string(), "--manifest", other + "/manifest.jsonl", "--lexicon",
           other + "/lexicon.txt"});
  CHECK(wrong_dim.code == 1);
  CHECK(wrong_dim.err.find("dims") != std::string::npos);
}

TEST_CASE("selftest") {
  const Run r = cli({"selftest"});
  CHECK(r.code == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(r.out.find("PASS\tstreaming") != std::string::npos);

  const fs::path d = scratch_dir("smdd_cli_selftest");
  std::ofstream(d / "broken.bin") << "CMDD garbage";
  const Run broken = cli({"selftest", "--model", (d / "broken.bin").string()});
  CHECK(broken.code == 1);
  CHECK(broken.out.find("FAIL\tload") != std::string::npos);
}
