// src/data_io.cpp

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
#include "smdd/data_io.hpp"

#include <bit>
#include <cctype>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "smdd/align.hpp"
#include "smdd/phones.hpp"
#include "smdd/rng.hpp"
#include "smdd/training.hpp"

namespace smdd {

namespace {

std::string read_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(std::string("cannot open ") + what + " " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path);
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t start = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

Lexicon Lexicon::parse(std::string_view text, const std::string& source) {
  const PhoneSet& ps = PhoneSet::instance();
  Lexicon lex;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    const auto fields = split_ws(line);
    if (fields.empty() || fields[0].front() == '#') continue;
    if (fields.size() < 2)
      throw DataError(source + ":" + std::to_string(line_no) + ": word '" + std::string(fields[0]) + "' has no phones");
    std::vector<int> phones;
    for (std::size_t i = 1; i < fields.size(); ++i) {
      if (!ps.contains(fields[i]) || ps.id(fields[i]) >= PhoneSet::kNumPhones)
        throw DataError(source + ":" + std::to_string(line_no) + ": unknown phone '" + std::string(fields[i]) + "'");
      phones.push_back(ps.id(fields[i]));
    }
    lex.add(fields[0], std::move(phones));
  }
  return lex;
}

Lexicon Lexicon::load(const std::string& path) { return parse(read_file(path, "lexicon"), path); }

void Lexicon::add(std::string_view word, std::vector<int> phones) {
  entries_[lowercase(word)].push_back(std::move(phones));
}

bool Lexicon::contains(std::string_view word) const { return entries_.find(lowercase(word)) != entries_.end(); }

const std::vector<std::vector<int>>& Lexicon::pronunciations(std::string_view word) const {
  const auto it = entries_.find(lowercase(word));
  if (it == entries_.end()) throw DataError("word not in lexicon: " + std::string(word));
  return it->second;
}

std::vector<std::string> prompt_words(std::string_view prompt) {
  std::vector<std::string> words;
  for (std::string_view token : split_ws(prompt)) {
    std::string w;
    for (char c : token)
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '\'') w.push_back(c);
    if (!w.empty()) words.push_back(lowercase(w));
  }
  return words;
}

std::vector<int> Lexicon::lookup(std::string_view prompt) const {
  std::vector<int> phones;
  std::string missing;
  for (const std::string& w : prompt_words(prompt)) {
    const auto it = entries_.find(w);
    if (it == entries_.end()) {
      missing += missing.empty() ? w : ", " + w;
      continue;
    }
    const auto& first = it->second.front();
    phones.insert(phones.end(), first.begin(), first.end());
  }
  if (!missing.empty()) throw DataError("words not in lexicon: " + missing);
  return phones;
}

std::string Lexicon::to_text() const {
  const PhoneSet& ps = PhoneSet::instance();
  std::string out;
  for (const auto& [word, prons] : entries_) {
    for (const auto& p : prons) {
      std::string upper = word;
      for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      out += upper + " " + ps.format(p) + "\n";
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kFeatMagic[4] = {'C', 'M', 'F', 'T'};
constexpr std::uint32_t kFeatVersion = 1;
constexpr std::size_t kFeatHeader = 16;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::string_view b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + i])) << (8 * i);
  return v;
}

}  // namespace

std::string encode_features(const Matrix& features) {
  std::string out(kFeatMagic, 4);
  put_u32(out, kFeatVersion);
  put_u32(out, static_cast<std::uint32_t>(features.rows()));
  put_u32(out, static_cast<std::uint32_t>(features.cols()));
  out.reserve(kFeatHeader + 4 * features.size());
  for (Index i = 0; i < features.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(features.data()[i])));
  return out;
}

Matrix decode_features(std::string_view b) {
  if (b.size() < 4 || std::memcmp(b.data(), kFeatMagic, 4) != 0)
    throw FormatError("feature file: bad magic at byte 0");
  if (b.size() < kFeatHeader) throw FormatError("feature file: header truncated at byte " + std::to_string(b.size()));
  const std::uint32_t version = get_u32(b, 4);
  if (version != kFeatVersion) throw FormatError("feature file: unsupported version " + std::to_string(version) + " at byte 4");
  const std::uint64_t frames = get_u32(b, 8), dim = get_u32(b, 12);
  const std::uint64_t expected = kFeatHeader + 4 * frames * dim;
  if (b.size() < expected)
    throw FormatError("feature file: payload truncated at byte " + std::to_string(b.size()) + ", expected " +
                      std::to_string(expected) + " bytes");
  if (b.size() > expected) throw FormatError("feature file: trailing data at byte " + std::to_string(expected));
  Matrix m(static_cast<Index>(frames), static_cast<Index>(dim));
  for (Index i = 0; i < m.size(); ++i)
    m.data()[i] = std::bit_cast<float>(get_u32(b, kFeatHeader + 4 * static_cast<std::size_t>(i)));
  return m;
}

void write_features(const Matrix& features, const std::string& path) { write_file(path, encode_features(features)); }

Matrix read_features(const std::string& path) {
  try {
    return decode_features(read_file(path, "feature file"));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

std::vector<double> normalize_scores(std::span<const int> raw) {
  std::vector<double> out;
  out.reserve(raw.size());
  for (int s : raw) {
    if (s < 0 || s > 2) throw DataError("phone score " + std::to_string(s) + " outside {0, 1, 2}");
    out.push_back(s / 2.0);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string manifest_line(const ManifestEntry& e) {
  nlohmann::ordered_json j;
  j["id"] = e.id;
  j["features"] = e.features;
  j["text"] = e.text;
  if (e.reference) j["reference"] = *e.reference;
  if (e.pronounced) j["pronounced"] = *e.pronounced;
  if (e.scores) j["scores"] = *e.scores;
  return j.dump();
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  const std::string text = read_file(path, "manifest");
  std::vector<ManifestEntry> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (split_ws(line).empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    if (!j.is_object()) throw DataError(where + ": expected a JSON object");
    static const std::set<std::string> known{"id", "features", "text", "reference", "pronounced", "scores"};
    for (const auto& item : j.items())
      if (!known.count(item.key())) throw DataError(where + ": unknown field '" + item.key() + "'");
    try {
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      e.features = j.at("features").get<std::string>();
      e.text = j.value("text", std::string());
      if (j.contains("reference")) e.reference = j["reference"].get<std::string>();
      if (j.contains("pronounced")) e.pronounced = j["pronounced"].get<std::string>();
      if (j.contains("scores")) e.scores = j["scores"].get<std::vector<int>>();
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  return out;
}

void write_manifest(std::span<const ManifestEntry> entries, const std::string& path) {
  std::string text;
  for (const auto& e : entries) text += manifest_line(e) + "\n";
  write_file(path, text);
}

std::vector<Utterance> load_corpus(const std::string& manifest_path, const Lexicon* lexicon) {
  const PhoneSet& ps = PhoneSet::instance();
  const std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
  std::vector<Utterance> out;
  std::set<std::string> seen;
  for (const ManifestEntry& e : read_manifest(manifest_path)) {
    auto fail = [&e](const std::string& what) { throw DataError("utterance " + e.id + ": " + what); };
    if (!seen.insert(e.id).second) fail("duplicate id");
    Utterance u;
    u.id = e.id;
    u.text = e.text;
    auto parse_phones = [&](const std::string& s, const char* field) {
      try {
        std::vector<int> ids = ps.parse(s);
        for (int id : ids)
          if (id == PhoneSet::kDel) fail(std::string(field) + " contains the deletion marker");
        return ids;
      } catch (const VocabularyError& err) {
        fail(std::string(field) + ": " + err.what());
      }
      return std::vector<int>{};
    };
    if (e.reference) {
      u.reference = parse_phones(*e.reference, "reference");
    } else {
      if (!lexicon) fail("no reference phones and no lexicon given");
      try {
        u.reference = lexicon->lookup(e.text);
      } catch (const DataError& err) {
        fail(err.what());
      }
    }
    if (e.pronounced) u.pronounced = parse_phones(*e.pronounced, "pronounced");
    if (e.scores) {
      for (int s : *e.scores)
        if (s < 0 || s > 2) fail("score " + std::to_string(s) + " outside {0, 1, 2}");
      if (e.scores->size() != u.reference.size())
        fail(std::to_string(e.scores->size()) + " scores for " + std::to_string(u.reference.size()) +
             " reference phones");
      u.scores = *e.scores;
    }
    const std::filesystem::path feat = e.features;
    try {
      u.features = read_features((feat.is_absolute() ? feat : base / feat).string());
    } catch (const Error& err) {
      fail(err.what());
    }
    out.push_back(std::move(u));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> load_phone_map(const std::string& path) {
  const PhoneSet& ps = PhoneSet::instance();
  std::map<std::string, std::string> map;
  std::istringstream in(read_file(path, "phone map"));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto f = split_ws(line);
    if (f.empty() || f[0].front() == '#') continue;
    const std::string where = path + ":" + std::to_string(line_no);
    if (f.size() != 2) throw DataError(where + ": expected 'source target'");
    if (f[1] != "-" && !ps.contains(f[1])) throw DataError(where + ": target '" + std::string(f[1]) + "' is not a phone");
    if (!map.emplace(std::string(f[0]), std::string(f[1])).second)
      throw DataError(where + ": duplicate source '" + std::string(f[0]) + "'");
  }
  return map;
}

std::vector<int> fold_phones(std::span<const std::string> symbols, const std::map<std::string, std::string>& map) {
  const PhoneSet& ps = PhoneSet::instance();
  std::vector<int> out;
  for (const std::string& s : symbols) {
    const auto it = map.find(lowercase(s));
    if (it == map.end()) throw DataError("symbol '" + s + "' has no mapping");
    if (it->second != "-") out.push_back(ps.id(it->second));
  }
  return out;
}

// ---------------------------------------------------------------------------

void SynthConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("synth config: " + what);
  };
  require(vocab_size >= 2 && vocab_size <= PhoneSet::kNumPhones, "vocab_size must lie in [2, 39]");
  require(n_utts > 0 && frames_per_phone > 0 && feature_dim > 0 && n_words > 0, "sizes must be positive");
  require(min_word_phones > 0 && min_word_phones <= max_word_phones, "bad word length range");
  require(min_utt_words > 0 && min_utt_words <= max_utt_words, "bad utterance length range");
  require(mispron_rate >= 0.0 && mispron_rate <= 1.0, "mispron_rate must lie in [0, 1]");
  require(blend_rate >= 0.0 && blend_rate <= 1.0, "blend_rate must lie in [0, 1]");
  require(noise > 0.0, "noise must be positive");
}

SynthCorpus synth_corpus(const SynthConfig& c, std::uint64_t seed) {
  c.validate();
  const PhoneSet& ps = PhoneSet::instance();
  Rng rng(seed);

  // Templates are redrawn until every pair is at least four noise deviations
  // apart per dimension on average.
  const double min_distance = 4.0 * c.noise * std::sqrt(static_cast<double>(c.feature_dim));
  Matrix templates;
  for (int attempt = 0;; ++attempt) {
    if (attempt == 100) throw ConfigError("synth config: cannot separate phone templates; raise feature_dim");
    templates = rng.normal_matrix(c.vocab_size, c.feature_dim, 1.0);
    double closest = std::numeric_limits<double>::infinity();
    for (int a = 0; a < c.vocab_size; ++a)
      for (int b = a + 1; b < c.vocab_size; ++b) closest = std::min(closest, (templates.row(a) - templates.row(b)).norm());
    if (closest >= min_distance) break;
  }

  SynthCorpus corpus;
  std::vector<std::string> words;
  for (int w = 0; w < c.n_words; ++w) {
    std::vector<int> phones(c.min_word_phones + rng.uniform_int(c.max_word_phones - c.min_word_phones + 1));
    for (int& p : phones) p = rng.uniform_int(c.vocab_size);
    char name[16];
    std::snprintf(name, sizeof name, "w%03d", w);
    words.push_back(name);
    corpus.lexicon.add(name, std::move(phones));
  }

  const AugmentRates rates{0.6 * c.mispron_rate, 0.2 * c.mispron_rate, 0.2 * c.mispron_rate, c.vocab_size};
  for (int u = 0; u < c.n_utts; ++u) {
    const int n_words = c.min_utt_words + rng.uniform_int(c.max_utt_words - c.min_utt_words + 1);
    std::string text;
    for (int w = 0; w < n_words; ++w) text += (w ? " " : "") + words[rng.uniform_int(c.n_words)];
    const std::vector<int> reference = corpus.lexicon.lookup(text);
    const std::vector<int> pronounced = augment_reference(reference, rates, rng);

    // Raw scores follow the alignment: mispronounced 0, blended 1, clean 2.
    const Targets targets = derive_targets(reference, pronounced);
    std::vector<int> scores(reference.size());
    std::vector<int> blend_with(pronounced.size(), -1);
    for (const EditOp& op : needleman_wunsch(reference, pronounced).ops) {
      if (op.kind == EditKind::kMatch && c.blend_rate > 0.0 && rng.uniform() < c.blend_rate) {
        int other = rng.uniform_int(c.vocab_size - 1);
        if (other >= pronounced[*op.hyp_index]) ++other;
        blend_with[*op.hyp_index] = other;
        scores[*op.ref_index] = 1;
      } else if (op.ref_index) {
        scores[*op.ref_index] = targets.errors[*op.ref_index] > 0 ? 0 : 2;
      }
    }

    Matrix feats(static_cast<Index>(pronounced.size()) * c.frames_per_phone, c.feature_dim);
    for (std::size_t i = 0; i < pronounced.size(); ++i) {
      RowVector center = templates.row(pronounced[i]);
      if (blend_with[i] >= 0) center = 0.5 * (center + templates.row(blend_with[i]));
      for (int f = 0; f < c.frames_per_phone; ++f) {
        const Index row = static_cast<Index>(i) * c.frames_per_phone + f;
        for (int d = 0; d < c.feature_dim; ++d) feats(row, d) = center(d) + c.noise * rng.normal();
      }
    }

    char id[16];
    std::snprintf(id, sizeof id, "utt%04d", u);
    ManifestEntry e;
    e.id = id;
    e.features = "feats/" + e.id + ".cmft";
    e.text = text;
    e.pronounced = ps.format(pronounced);
    e.scores = scores;
    corpus.entries.push_back(std::move(e));
    // Stored at the container's precision so in-memory and on-disk corpora agree.
    corpus.features.push_back(feats.cast<float>().cast<double>());
  }
  return corpus;
}

void write_synth_corpus(const SynthCorpus& corpus, const std::string& dir) {
  const std::filesystem::path root(dir);
  std::filesystem::create_directories(root / "feats");
  write_file((root / "lexicon.txt").string(), corpus.lexicon.to_text());
  write_manifest(corpus.entries, (root / "manifest.jsonl").string());
  for (std::size_t i = 0; i < corpus.entries.size(); ++i)
    write_features(corpus.features[i], (root / corpus.entries[i].features).string());
}

}  // namespace smdd
