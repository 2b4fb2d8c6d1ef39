// tests/test_align.cpp

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

#include <functional>

#include "smdd/align.hpp"
#include "smdd/phones.hpp"
#include "smdd/rng.hpp"

using namespace smdd;

namespace {

const PhoneSet& ps = PhoneSet::instance();

std::vector<int> P(const char* s) { return ps.parse(s); }

// Exhaustive search over edit scripts: at each step consume a pair, a ref
// symbol, or a hyp symbol. Exponential, fine for length <= 5.
int brute_edit_cost(const std::vector<int>& a, const std::vector<int>& b, std::size_t i = 0, std::size_t j = 0) {
  if (i == a.size()) return static_cast<int>(b.size() - j);
  if (j == b.size()) return static_cast<int>(a.size() - i);
  return std::min({brute_edit_cost(a, b, i + 1, j + 1) + (a[i] == b[j] ? 0 : 1), brute_edit_cost(a, b, i + 1, j) + 1,
                   brute_edit_cost(a, b, i, j + 1) + 1});
}

void check_alignment_shape(const AlignmentResult& r, const std::vector<int>& ref, const std::vector<int>& hyp) {
  Index next_ref = 0, next_hyp = 0;
  int cost = 0;
  for (const EditOp& op : r.ops) {
    switch (op.kind) {
      case EditKind::kMatch:
      case EditKind::kSubstitute:
        REQUIRE(op.ref_index);
        REQUIRE(op.hyp_index);
        CHECK((ref[*op.ref_index] == hyp[*op.hyp_index]) == (op.kind == EditKind::kMatch));
        break;
      case EditKind::kInsert:
        CHECK_FALSE(op.ref_index);
        REQUIRE(op.hyp_index);
        break;
      case EditKind::kDelete:
        REQUIRE(op.ref_index);
        CHECK_FALSE(op.hyp_index);
        break;
    }
    if (op.kind != EditKind::kMatch) ++cost;
    if (op.ref_index) CHECK(*op.ref_index == next_ref++);
    if (op.hyp_index) CHECK(*op.hyp_index == next_hyp++);
  }
  CHECK(next_ref == static_cast<Index>(ref.size()));
  CHECK(next_hyp == static_cast<Index>(hyp.size()));
  CHECK(cost == r.total_cost);
}

}  // namespace

TEST_CASE("needleman-wunsch") {
  const auto ref = P("W EH N T T UW B EH D");
  CHECK(needleman_wunsch(ref, ref).total_cost == 0);
  for (const EditOp& op : needleman_wunsch(ref, ref).ops) CHECK(op.kind == EditKind::kMatch);

  const auto pronounced = P("SH IY W EH N T T UW B EY D");
  const AlignmentResult r = needleman_wunsch(ref, pronounced);
  CHECK(r.total_cost == 3);
  check_alignment_shape(r, ref, pronounced);
  int ins = 0, subs = 0;
  for (const EditOp& op : r.ops) {
    ins += op.kind == EditKind::kInsert;
    subs += op.kind == EditKind::kSubstitute;
  }
  CHECK(ins == 2);
  CHECK(subs == 1);
  CHECK(r.ops[0] == EditOp{EditKind::kInsert, std::nullopt, 0});
  CHECK(r.ops[1] == EditOp{EditKind::kInsert, std::nullopt, 1});
  CHECK(r.ops[9] == EditOp{EditKind::kSubstitute, 7, 9});

  CHECK(needleman_wunsch(std::vector<int>{}, std::vector<int>{}).ops.empty());
  CHECK(needleman_wunsch(std::vector<int>{}, P("B EH")).total_cost == 2);
}

TEST_CASE("needleman-wunsch properties on random pairs") {
  Rng rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<int> a(rng.uniform_int(6)), b(rng.uniform_int(6));
    for (int& x : a) x = rng.uniform_int(3);
    for (int& x : b) x = rng.uniform_int(3);
    const AlignmentResult ab = needleman_wunsch(a, b), ba = needleman_wunsch(b, a);
    CHECK(ab.total_cost == brute_edit_cost(a, b));
    CHECK(ab.total_cost == ba.total_cost);
    check_alignment_shape(ab, a, b);
    const auto again = needleman_wunsch(a, b);
    CHECK(again.ops == ab.ops);
  }
}

TEST_CASE("derive targets") {
  const auto ref = P("W EH N T T UW B EH D");
  Targets same = derive_targets(ref, ref);
  CHECK(same.phones == ref);
  CHECK(same.errors == std::vector<double>(9, 0.0));

  const Targets t = derive_targets(ref, P("SH IY W EH N T T UW B EY D"));
  REQUIRE(t.phones.size() == 9);
  for (std::size_t i = 0; i < 9; ++i) CHECK(t.errors[i] == (i == 7 ? 1.0 : 0.0));
  CHECK(t.phones[7] == ps.id("EY"));

  const Targets del = derive_targets(P("B EH D"), P("B EH"));
  CHECK(del.phones == std::vector<int>{ps.id("B"), ps.id("EH"), PhoneSet::kDel});
  CHECK(del.errors == std::vector<double>{0, 0, 1});
}

TEST_CASE("ctc collapse") {
  const int blank = 9;
  CHECK(collapse_ctc(std::vector<int>{9, 9, 9}, blank).empty());
  CHECK(collapse_ctc(std::vector<int>{1, 1, 9, 1}, blank) == std::vector<int>{1, 1});

  // Two-pass reference: merge repeats, then remove blanks.
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> labels(rng.uniform_int(12));
    for (int& l : labels) l = rng.uniform_int(4) == 0 ? blank : rng.uniform_int(3);
    std::vector<int> merged;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (i == 0 || labels[i] != labels[i - 1]) merged.push_back(labels[i]);
    std::vector<int> expected;
    for (int l : merged)
      if (l != blank) expected.push_back(l);
    CHECK(collapse_ctc(labels, blank) == expected);

    GreedyCtcDecoder dec(blank);
    for (int l : labels) {
      RowVector row = RowVector::Constant(10, -5.0);
      row(l) = 0.0;
      dec.push(row);
    }
    CHECK(dec.hypothesis() == expected);
  }
}

TEST_CASE("fusion reproduces the worked example") {
  const auto ref = P("W EH N T T UW B EH D");
  const auto ctc = P("SH IY W EH N T T UW B EH");
  const std::vector<double> sc{0.0, 0.0, 0.0, 0.63, 0.0, 0.4, 0.0, 0.92, 0.44};
  const auto fused = fuse(ref, ctc, sc, 0.5);
  CHECK(ps.format(fusion_phones(fused)) == "SH IY W EH N serr T UW B serr");
  CHECK(fused[0].source == DecisionSource::kCtc);
  CHECK_FALSE(fused[0].ref_index);
  CHECK(fused[5].source == DecisionSource::kClassifierOverride);
  CHECK(fused[5].ref_index == 3);

  CHECK(fusion_phones(fuse(ref, ctc, std::vector<double>(9, 0.0))) == ctc);
  CHECK(ps.format(fusion_phones(fuse(ref, ctc, std::vector<double>(9, 1.0)))) ==
        "SH IY serr serr serr serr serr serr serr serr serr");
  CHECK_THROWS_AS(fuse(ref, ctc, std::vector<double>(3, 0.0)), ContractError);

  const auto dec = reference_decisions(ref, ctc, std::span<const double>(sc), 0.5);
  CHECK(dec[8] == PhoneSet::kDel);
  CHECK(dec[7] == PhoneSet::kSerr);
  CHECK(dec[3] == PhoneSet::kSerr);
  CHECK(reference_decisions(ref, ctc, std::nullopt)[7] == ps.id("EH"));
}

TEST_CASE("fusion invariants on random cases") {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> ref(1 + rng.uniform_int(7)), hyp(rng.uniform_int(8));
    for (int& x : ref) x = rng.uniform_int(4);
    for (int& x : hyp) x = rng.uniform_int(4);
    std::vector<double> sc(ref.size());
    for (double& p : sc) p = rng.uniform();

    // Reference positions the CTC alignment deleted never come back as phones.
    std::vector<bool> deleted(ref.size(), false);
    for (const EditOp& op : needleman_wunsch(ref, hyp).ops)
      if (op.kind == EditKind::kDelete) deleted[*op.ref_index] = true;

    std::size_t previous_serr = ref.size() + 1;
    for (double thr : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      const auto fused = fuse(ref, hyp, sc, thr);
      std::size_t serr = 0;
      for (const FusionToken& t : fused) {
        if (t.phone == PhoneSet::kSerr) {
          ++serr;
          CHECK(t.source == DecisionSource::kClassifierOverride);
        } else if (t.ref_index) {
          CHECK_FALSE(deleted[*t.ref_index]);
        }
      }
      CHECK(serr <= previous_serr);
      previous_serr = serr;
    }
  }
}
