// smdd/data_io.hpp

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

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smdd/common.hpp"

namespace smdd {

/// Word -> pronunciations. Words are stored lowercase; lookups use the first
/// listed pronunciation.
class Lexicon {
 public:
  /// One entry per line: `WORD PH1 PH2 ...`. Repeated words add alternatives.
  static Lexicon parse(std::string_view text, const std::string& source = "lexicon");
  static Lexicon load(const std::string& path);

  void add(std::string_view word, std::vector<int> phones);
  bool contains(std::string_view word) const;
  const std::vector<std::vector<int>>& pronunciations(std::string_view word) const;

  /// Concatenated pronunciations of the whitespace-separated prompt with
  /// punctuation stripped. Throws DataError naming every unknown word.
  std::vector<int> lookup(std::string_view prompt) const;

  std::string to_text() const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, std::vector<std::vector<int>>, std::less<>> entries_;
};

/// Lowercase words of a prompt, punctuation removed (apostrophes kept).
std::vector<std::string> prompt_words(std::string_view prompt);

// "CMFT" feature container: magic, u32 version, u32 frames, u32 dim, then
// float32 values row by row, all little-endian.
void write_features(const Matrix& features, const std::string& path);
Matrix read_features(const std::string& path);
std::string encode_features(const Matrix& features);
Matrix decode_features(std::string_view bytes);

/// Raw phone scores {0, 1, 2} -> {0, 0.5, 1}.
std::vector<double> normalize_scores(std::span<const int> raw);

/// One line of a JSONL manifest.
///   id          string, required
///   features    path of a CMFT file, relative to the manifest directory
///   text        prompt, converted through the lexicon when `reference` is
///               absent
///   reference   optional space-separated phones overriding the lexicon
///   pronounced  optional space-separated phones actually spoken
///   scores      optional raw per-reference-phone scores in {0, 1, 2}
struct ManifestEntry {
  std::string id;
  std::string features;
  std::string text;
  std::optional<std::string> reference;
  std::optional<std::string> pronounced;
  std::optional<std::vector<int>> scores;
};

std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(std::span<const ManifestEntry> entries, const std::string& path);
std::string manifest_line(const ManifestEntry& e);

/// A manifest entry resolved against a lexicon and its feature file.
struct Utterance {
  std::string id;
  std::string text;
  Matrix features;
  std::vector<int> reference;
  std::optional<std::vector<int>> pronounced;
  std::optional<std::vector<int>> scores;  // raw scale
};

/// Loads every entry and validates phones, score ranges and lengths before
/// returning; the first problem raises DataError naming the utterance.
std::vector<Utterance> load_corpus(const std::string& manifest_path, const Lexicon* lexicon);

/// TIMIT 61-symbol to 39-phone folding. Lines are `src dst`; dst "-" drops
/// the symbol. Targets are checked against the phone set.
std::map<std::string, std::string> load_phone_map(const std::string& path);
/// Folds a 61-symbol transcription; unmapped symbols raise DataError.
std::vector<int> fold_phones(std::span<const std::string> symbols, const std::map<std::string, std::string>& map);

struct SynthConfig {
  int n_utts = 20;
  int vocab_size = 8;
  int frames_per_phone = 8;
  int feature_dim = 16;
  double mispron_rate = 0.1;
  /// Fraction of correctly pronounced phones whose features are mixed half
  /// and half with another phone; they carry raw score 1.
  double blend_rate = 0.0;
  double noise = 0.1;
  int n_words = 12;
  int min_word_phones = 2;
  int max_word_phones = 4;
  int min_utt_words = 2;
  int max_utt_words = 3;

  void validate() const;
};

struct SynthCorpus {
  Lexicon lexicon;
  std::vector<ManifestEntry> entries;
  std::vector<Matrix> features;  // parallel to entries
};

/// Each phone owns a random template vector; a spoken phone is
/// frames_per_phone noisy copies of it. Mispronunciations come from
/// augment_reference at mispron_rate (60% substitutions, 20% deletions, 20%
/// insertions).
SynthCorpus synth_corpus(const SynthConfig& config, std::uint64_t seed);
/// Writes manifest.jsonl, lexicon.txt and feats/<id>.cmft under `dir`.
void write_synth_corpus(const SynthCorpus& corpus, const std::string& dir);

}  // namespace smdd
