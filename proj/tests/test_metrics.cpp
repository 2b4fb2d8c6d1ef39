// tests/test_metrics.cpp

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

#include "smdd/metrics.hpp"
#include "smdd/phones.hpp"
#include "smdd/rng.hpp"

using namespace smdd;

namespace {

MddCounts counts(long ta, long fr, long fa, long tr) { return MddCounts{ta, fr, fa, tr, 0}; }

double pct(const Ratio& r) { return 100.0 * r.value; }

}  // namespace

TEST_CASE("precision, recall and F1 from published counts") {
  const MddCounts streaming = counts(24517, 1197, 2102, 2189);
  CHECK(std::abs(pct(precision(streaming)) - 64.65) <= 0.01);
  CHECK(std::abs(pct(recall(streaming)) - 51.01) <= 0.01);
  CHECK(std::abs(pct(f1(streaming)) - 57.03) <= 0.01);

  const MddCounts ssl = counts(24273, 1467, 1783, 2483);
  CHECK(std::abs(pct(f1(ssl)) - 60.44) <= 0.01);

  const MddCounts perfect = counts(10, 0, 0, 4);
  CHECK(precision(perfect).value == 1.0);
  CHECK(recall(perfect).value == 1.0);
  CHECK(f1(perfect).value == 1.0);

  const MddCounts none = counts(10, 0, 0, 0);
  CHECK_FALSE(precision(none).defined);
  CHECK(precision(none).value == 0.0);
  CHECK_FALSE(f1(none).defined);
}

TEST_CASE("metric bounds") {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const MddCounts c{rng.uniform_int(50), rng.uniform_int(50), rng.uniform_int(50), rng.uniform_int(50),
                      rng.uniform_int(50)};
    const Ratio p = precision(c), r = recall(c), f = f1(c);
    for (const Ratio& x : {p, r, f}) {
      CHECK(x.value >= 0.0);
      CHECK(x.value <= 1.0);
    }
    CHECK(f.value <= std::max(p.value, r.value) + 1e-15);
  }
}

TEST_CASE("outcome classification") {
  const auto& ps = PhoneSet::instance();
  const auto ref = ps.parse("W EH N T B EH D");
  const auto truth = ps.parse("W EH N T B EY <del>");

  const MddCounts exact = classify_outcomes(ref, truth, truth);
  CHECK(exact == MddCounts{5, 0, 0, 2, 0});

  const MddCounts accept_all = classify_outcomes(ref, truth, ref);
  CHECK(accept_all.fa == 2);
  CHECK(accept_all.ta == 5);

  std::vector<int> decision = ps.parse("W EH N AA B AA D");
  decision[3] = PhoneSet::kSerr;
  CHECK(classify_outcomes(ref, truth, decision) == MddCounts{4, 1, 1, 0, 1});

  const auto unclear_truth = ps.parse("W err");
  const std::vector<int> serr{ps.id("W"), PhoneSet::kSerr};
  CHECK(classify_outcomes(ps.parse("W EH"), unclear_truth, serr).tr_correct_diag == 1);

  CHECK_THROWS_AS(classify_outcomes(ref, truth, ps.parse("W")), ContractError);

  // Additivity and agreement with a position-by-position reference.
  Rng rng(9);
  MddCounts summed;
  std::vector<int> all_ref, all_truth, all_dec;
  for (int utt = 0; utt < 30; ++utt) {
    const int n = 1 + rng.uniform_int(8);
    std::vector<int> r(n), t(n), d(n);
    MddCounts expected;
    for (int i = 0; i < n; ++i) {
      r[i] = rng.uniform_int(3);
      t[i] = rng.uniform_int(3) == 0 ? rng.uniform_int(3) : r[i];
      d[i] = rng.uniform_int(3) == 0 ? PhoneSet::kSerr : (rng.uniform_int(2) ? t[i] : rng.uniform_int(3));
      if (t[i] == r[i] && d[i] == r[i]) ++expected.ta;
      else if (t[i] == r[i]) ++expected.fr;
      else if (d[i] == r[i]) ++expected.fa;
      else if (d[i] == t[i]) ++expected.tr_correct_diag;
      else ++expected.tr_error_diag;
    }
    const MddCounts got = classify_outcomes(r, t, d);
    CHECK(got == expected);
    summed += got;
    all_ref.insert(all_ref.end(), r.begin(), r.end());
    all_truth.insert(all_truth.end(), t.begin(), t.end());
    all_dec.insert(all_dec.end(), d.begin(), d.end());
  }
  CHECK(classify_outcomes(all_ref, all_truth, all_dec) == summed);
}

TEST_CASE("phone error rate") {
  const auto& ps = PhoneSet::instance();
  const std::vector<std::vector<int>> ref{ps.parse("B EH D")};
  CHECK(phone_error_rate(ref, ref) == 0.0);
  const std::vector<std::vector<int>> hyp{ps.parse("B EY")};
  CHECK(phone_error_rate(ref, hyp) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  // Relabeling the alphabet leaves PER unchanged.
  const std::vector<std::vector<int>> ref2{ps.parse("AA AE AH")}, hyp2{ps.parse("AA AO")};
  CHECK(phone_error_rate(ref2, hyp2) == phone_error_rate(ref, hyp));

  const std::vector<std::vector<int>> empty{{}};
  CHECK_THROWS_AS(phone_error_rate(empty, empty), ContractError);
}

TEST_CASE("pearson correlation") {
  Eigen::VectorXd ref(6);
  ref << 0, 0.5, 1, 1, 0.5, 0;
  CHECK(pcc(ref, ref) == doctest::Approx(1.0).epsilon(1e-15));
  const Eigen::VectorXd inv = (1.0 - ref.array()).matrix();
  CHECK(pcc(inv, ref) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK_THROWS_AS(pcc(Eigen::VectorXd::Constant(6, 0.3), ref), UndefinedCorrelationError);
  CHECK_THROWS_AS(pcc(Eigen::VectorXd::Constant(1, 0.3), Eigen::VectorXd::Constant(1, 0.3)), ContractError);

  Rng rng(12);
  Eigen::VectorXd p(100), r(100);
  for (int i = 0; i < 100; ++i) {
    r(i) = 0.5 * rng.uniform_int(3);
    p(i) = 0.6 * r(i) + 0.3 * rng.uniform();
  }
  // Two-pass covariance over standard deviations.
  double mp = 0, mr = 0;
  for (int i = 0; i < 100; ++i) {
    mp += p(i) / 100;
    mr += r(i) / 100;
  }
  double cov = 0, vp = 0, vr = 0;
  for (int i = 0; i < 100; ++i) {
    cov += (p(i) - mp) * (r(i) - mr);
    vp += (p(i) - mp) * (p(i) - mp);
    vr += (r(i) - mr) * (r(i) - mr);
  }
  const double expected = cov / std::sqrt(vp * vr);
  CHECK(std::abs(pcc(p, r) - expected) < 1e-12);

  const Eigen::VectorXd affine = (3.0 * p.array() + 2.0).matrix();
  CHECK(std::abs(pcc(affine, r) - expected) < 1e-12);

  const Eigen::VectorXf pf = p.cast<float>(), rf = r.cast<float>();
  CHECK(std::abs(pcc(pf, rf) - static_cast<float>(expected)) < 1e-5f);
}
