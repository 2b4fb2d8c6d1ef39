// smdd/cli.hpp

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

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "smdd/config.hpp"
#include "smdd/data_io.hpp"
#include "smdd/metrics.hpp"
#include "smdd/model.hpp"
#include "smdd/training.hpp"

namespace smdd {

/// Everything a subcommand may read from `key = value` settings.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SynthConfig synth;
  double threshold = 0.5;
  int chunk_frames = 4;
  std::uint64_t seed = 1;

  static std::vector<std::string> keys();
  /// Unknown keys and out-of-range values raise ConfigError before any work.
  static RunConfig resolve(const KeyValues& kv, const ModelConfig& model_defaults = ModelConfig{});
};

/// Formats the report printed by `evaluate`: one `name<TAB>value` line per
/// metric.
std::string metrics_report(const MddCounts& counts, std::optional<double> per, long speaker_insertions);
/// Machine-readable counterpart of metrics_report.
std::string metrics_summary_json(const MddCounts& counts, std::optional<double> per, long speaker_insertions);

/// Decision tokens per reference position: phone names, "<del>" or "serr".
std::string format_decisions(std::span<const int> decisions);
std::vector<int> parse_decisions(std::string_view text);

/// Entry point of the `smdd` tool. Returns the process exit status: 0 on
/// success, 1 on a failed check or runtime error, 2 on a usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

struct SelfCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Quick internal consistency checks behind `smdd selftest`. When
/// `params_path` is non-empty the file must load.
std::vector<SelfCheck> run_selftest(const std::string& params_path);

}  // namespace smdd
