// Copyright 2026 The kgdial Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "kgdial/error.hpp"
#include "kgdial/evalmetrics.hpp"
#include "kgdial/rng.hpp"
#include "kgdial/textsim.hpp"
#include "oracles.hpp"

using namespace kgdial;
using eval::Tokens;

namespace {

Tokens random_sentence(Rng& rng, std::size_t max_len) {
  static const std::vector<std::string> words = {"the", "cat", "sat", "on", "mat", "a", "dog"};
  Tokens t(1 + rng.uniform(max_len));
  for (auto& w : t) w = words[rng.uniform(words.size())];
  return t;
}

}  // namespace

TEST_CASE("precision recall f1") {
  auto r = eval::precision_recall_f1({true, true, true, true}, {true, false, true, false});
  CHECK(r.precision == doctest::Approx(0.5));
  CHECK(r.recall == doctest::Approx(1.0));
  CHECK(r.f1 == doctest::Approx(2.0 / 3.0));
  auto none = eval::precision_recall_f1({false, false}, {false, true});
  CHECK(none.precision == 0.0);
  CHECK(none.f1 == 0.0);
  CHECK_THROWS_AS(eval::precision_recall_f1({true}, {true, false}), ValidationError);
}

TEST_CASE("rank metrics match hand enumeration") {
  std::vector<eval::Rank> ranks = {1, 3, std::nullopt, 6, 2};
  // reciprocal ranks inside top 5: 1, 1/3, 0, 0, 1/2
  CHECK(eval::mrr_at_k(ranks, 5) == doctest::Approx((1.0 + 1.0 / 3 + 0.5) / 5));
  CHECK(eval::recall_at_k(ranks, 1) == doctest::Approx(0.2));
  CHECK(eval::recall_at_k(ranks, 5) == doctest::Approx(0.6));
  std::vector<eval::Rank> all_first = {1, 1, 1};
  CHECK(eval::mrr_at_k(all_first, 5) == 1.0);
}

TEST_CASE("frozen bleu and rouge values") {
  Tokens cand = {"the", "the", "the"};
  Tokens ref = {"the", "cat"};
  // clipped unigram precision 1/3, no brevity penalty since c > r
  CHECK(eval::bleu_n(cand, ref, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  Tokens short_c = {"the"};
  CHECK(eval::bleu_n(short_c, ref, 1) == doctest::Approx(std::exp(1.0 - 2.0)).epsilon(1e-12));
  Tokens a = {"police", "killed", "the", "gunman"};
  Tokens b = {"police", "kill", "the", "gunman"};
  // LCS 3 -> P = R = 3/4
  CHECK(eval::rouge_l(a, b) == doctest::Approx(0.75));
  Tokens c = {"a", "b", "c", "d", "e"};
  Tokens d = {"a", "b", "x", "d", "e"};
  CHECK(eval::rouge_l(c, d) == doctest::Approx(0.8));
  CHECK(eval::bleu_n({}, ref, 4) == 0.0);
  CHECK_THROWS_AS(eval::bleu_n(cand, ref, 5), ValidationError);
}

TEST_CASE("bleu and rouge agree with direct-formula oracles") {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    Tokens c = random_sentence(rng, 8);
    Tokens r = random_sentence(rng, 8);
    for (std::size_t n = 1; n <= 4; ++n) {
      CHECK(std::abs(eval::bleu_n(c, r, n) - oracle::bleu(c, r, n)) < 1e-9);
    }
    CHECK(std::abs(eval::rouge_n(c, r, 1) - oracle::rouge_n(c, r, 1)) < 1e-9);
    CHECK(std::abs(eval::rouge_n(c, r, 2) - oracle::rouge_n(c, r, 2)) < 1e-9);
    CHECK(std::abs(eval::rouge_l(c, r) - oracle::rouge_l(c, r)) < 1e-9);
  }
}

TEST_CASE("identical sentences score 1 everywhere") {
  Tokens s = {"the", "hotel", "has", "free", "wifi", "."};
  for (std::size_t n = 1; n <= 4; ++n) CHECK(eval::bleu_n(s, s, n) == doctest::Approx(1.0));
  CHECK(eval::rouge_n(s, s, 1) == doctest::Approx(1.0));
  CHECK(eval::rouge_n(s, s, 2) == doctest::Approx(1.0));
  CHECK(eval::rouge_l(s, s) == doctest::Approx(1.0));
  auto rep = eval::generation_report({s, s}, {s, s});
  CHECK(*rep.bleu_4 == doctest::Approx(1.0));
  CHECK(*rep.rouge_l == doctest::Approx(1.0));
}

TEST_CASE("corpus bleu pools counts") {
  std::vector<Tokens> cands = {{"a", "b"}, {"c", "d", "e"}};
  std::vector<Tokens> refs = {{"a", "b"}, {"c", "x", "e"}};
  // unigram: 4 of 5 clipped matches, equal lengths
  CHECK(eval::corpus_bleu(cands, refs, 1) == doctest::Approx(0.8));
}

TEST_CASE("metric report json omits unset fields") {
  eval::MetricReport r;
  r.f1 = 0.5;
  auto j = r.to_json();
  CHECK(j.size() == 1);
  CHECK(j["f1"] == 0.5);
}
