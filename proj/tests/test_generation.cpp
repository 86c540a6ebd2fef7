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

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "kgdial/error.hpp"
#include "kgdial/formatting.hpp"
#include "kgdial/generation.hpp"

using namespace kgdial;
using namespace kgdial::generation;
using nn::Matrix;
using nn::Tensor;

namespace {

const std::vector<std::string>& texts() {
  static const std::vector<std::string> t = {
      "i am looking for a hotel in the north .", "the avalon is a nice hotel .",
      "is there wifi ?",                          "yes , wifi is free with the code .",
      "anything else i can do for you ?",         "what about parking ?"};
  return t;
}

nn::ModelConfig tiny(std::size_t k = 3) {
  nn::ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_layers = 2;
  c.d_ff = 32;
  c.max_seq = 64;
  c.latent_k = k;
  c.init_std = 0.3;
  c.seed = 9;
  return c;
}

nn::MiniModel tiny_model(std::size_t k = 3) {
  nn::MiniModel m(tiny(k), nn::build_vocab(texts()));
  add_generation_heads(m);
  return m;
}

std::vector<Turn> history() {
  return {{Speaker::kUser, "i am looking for a hotel in the north ."},
          {Speaker::kSystem, "the avalon is a nice hotel ."},
          {Speaker::kUser, "is there wifi ?"}};
}

// "kq42z" is not in the vocabulary.
const std::string kAnswer = "Free wifi is available with the code kq42z.";
const std::string kResponse = "yes , wifi is free with the code kq42z . anything else i can do for you ?";

double row_sum(const Matrix& m, Eigen::Index r) { return m.row(r).sum(); }

void zero(nn::MiniModel& m, const std::string& name) {
  m.parameter(name).mutable_value().setZero();
}

}  // namespace

TEST_CASE("generation input layout") {
  const auto g = format_generation_input(kAnswer, history(), kResponse);
  CHECK(g.tokens.front() == kBosTok);
  CHECK(g.tokens[1] == "free");
  CHECK(g.knowledge == nn::Span{0, 10});
  CHECK(g.tokens[g.context.begin] == kSp1Tok);
  CHECK(g.tokens[g.response.begin] == kSp2Tok);
  CHECK(g.tokens.back() == kEosTok);
  CHECK(g.closed);
  CHECK(g.response.end == g.tokens.size());
  CHECK(g.breaks.size() == 3);
  std::vector<std::string> speakers;
  for (std::size_t b : g.breaks) speakers.push_back(g.tokens[b]);
  CHECK(speakers == std::vector<std::string>{kSp1Tok, kSp2Tok, kSp1Tok});
  const auto bare = format_generation_input(kAnswer, history());
  CHECK_FALSE(bare.has_response());
  CHECK(bare.tokens.size() == g.response.begin);
}

TEST_CASE("extended vocabulary covers knowledge OOV tokens") {
  const auto m = tiny_model();
  const auto g = format_generation_input(kAnswer, history(), kResponse);
  const auto ext = extend_vocab(m.vocab(), g);
  REQUIRE(ext.oov.size() == 2);  // "available", "kq42z"
  CHECK(ext.id(m.vocab(), "kq42z") >= static_cast<int>(m.vocab().size()));
  CHECK(ext.token(m.vocab(), ext.id(m.vocab(), "kq42z")) == "kq42z");
  CHECK(ext.id(m.vocab(), "wifi") == m.vocab().id("wifi"));
  CHECK(ext.id(m.vocab(), "zzz") == nn::Vocab::kUnk);
}

TEST_CASE("latent branches enforce their input contracts") {
  const auto m = tiny_model();
  const auto with = format_generation_input(kAnswer, history(), kResponse);
  const auto without = format_generation_input(kAnswer, history());
  CHECK_THROWS_AS(prior_z(m, with), ValidationError);
  CHECK_THROWS_AS(posterior_z(m, without), ValidationError);
}

TEST_CASE("every distribution sums to one") {
  auto m = tiny_model();
  Rng rng(4);
  const auto& words = m.vocab().tokens();
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<std::string> resp;
    for (std::size_t i = 0, n = 1 + rng.uniform(6); i < n; ++i) {
      resp.push_back(words[nn::Vocab::kNumSpecials + rng.uniform(words.size() - nn::Vocab::kNumSpecials)]);
    }
    const auto in = with_response(format_generation_input(kAnswer, history()), resp, true);
    const auto ext = extend_vocab(m.vocab(), in);
    const auto lp = latent_pair(m, in);
    CHECK(std::abs(lp.posterior.value().sum() - 1.0) < 1e-12);
    CHECK(std::abs(lp.prior.value().sum() - 1.0) < 1e-12);
    const auto out = decode_step(m, in, ext, latent_vector(m, rng.uniform(3)), true);
    REQUIRE(out.p_att.defined());
    for (Eigen::Index r = 0; r < out.mixed.rows(); ++r) {
      CHECK(std::abs(row_sum(out.p_lang.value(), r) - 1.0) < 1e-12);
      CHECK(std::abs(row_sum(out.p_att.value(), r) - 1.0) < 1e-12);
      CHECK(std::abs(row_sum(out.mixed.value(), r) - 1.0) < 1e-12);
      const double g = out.gate.value()(r, 0);
      CHECK(g > 0.0);
      CHECK(g < 1.0);
      // OOV copy: the fact token has mass only through the copy path
      const int fact = ext.id(m.vocab(), "kq42z");
      CHECK(out.mixed.value()(r, fact) > 0.0);
    }
  }
}

TEST_CASE("prior never sees the response") {
  auto m = tiny_model();
  const auto base = format_generation_input(kAnswer, history());
  const Matrix ref = prior_z(m, base).value();
  Rng rng(12);
  const auto& words = m.vocab().tokens();
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::string> resp;
    for (std::size_t i = 0, n = 1 + rng.uniform(8); i < n; ++i) {
      resp.push_back(words[nn::Vocab::kNumSpecials + rng.uniform(words.size() - nn::Vocab::kNumSpecials)]);
    }
    const auto in = with_response(base, resp, true);
    const Matrix p = latent_pair(m, in).prior.value();
    CHECK((p - ref).cwiseAbs().maxCoeff() < 1e-12);
    if (trial > 0) {
      // same length, different tokens: bit-identical
      auto other = resp;
      other.back() = words[nn::Vocab::kNumSpecials];
      CHECK(latent_pair(m, with_response(base, other, true)).prior.value() == p);
    }
  }
}

TEST_CASE("kld values") {
  auto q = Tensor::constant(Matrix{{1.0, 0.0}});
  auto p = Tensor::constant(Matrix{{0.5, 0.5}});
  CHECK(kld_loss(q, p).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(kld_loss(p, p).item() == 0.0);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    Matrix a(1, 5), b(1, 5);
    for (int j = 0; j < 5; ++j) {
      a(0, j) = rng.uniform_real();
      b(0, j) = rng.uniform_real() + 1e-3;
    }
    a /= a.sum();
    b /= b.sum();
    CHECK(kld_loss(Tensor::constant(a), Tensor::constant(b)).item() >= -1e-15);
  }
}

TEST_CASE("nll and bow on uniform distributions") {
  Matrix u = Matrix::Constant(2, 4, 0.25);
  std::vector<int> t = {1, 3};
  CHECK(nll_loss(Tensor::constant(u), t).item() == doctest::Approx(2 * std::log(4.0)));
  Matrix det = Matrix::Zero(2, 4);
  det(0, 1) = det(1, 3) = 1.0;
  CHECK(nll_loss(Tensor::constant(det), t).item() == 0.0);

  auto m = tiny_model();
  zero(m, "gen.bow.w");
  zero(m, "gen.bow.b");
  const double v = static_cast<double>(m.vocab().size());
  const auto h = latent_vector(m, 0);
  std::vector<int> one = {m.vocab().id("wifi")};
  CHECK(bow_loss(m, h, one).item() == doctest::Approx(std::log(v)));
  auto m2 = tiny_model();
  std::vector<int> seq = {m2.vocab().id("yes"), m2.vocab().id("wifi"), m2.vocab().id("free")};
  std::vector<int> perm = {seq[2], seq[0], seq[1]};
  CHECK(bow_loss(m2, latent_vector(m2, 1), seq).item() ==
        doctest::Approx(bow_loss(m2, latent_vector(m2, 1), perm).item()).epsilon(1e-14));
}

TEST_CASE("zero decoder weights give a uniform vocabulary distribution") {
  auto m = tiny_model();
  for (const char* n : {"gen.dec.w2", "gen.dec.b2", "gen.dec.w3", "gen.dec.b3"}) zero(m, n);
  Matrix h = Matrix::Random(3, 16);
  const Matrix p = decoder_vocab_distribution(m, Tensor::constant(h)).value();
  CHECK((p.array() - 1.0 / static_cast<double>(m.vocab().size())).abs().maxCoeff() < 1e-15);
}

TEST_CASE("knowledge attention maps positions to token types") {
  // positions: <bos> open 9 am <resp>
  Matrix a(5, 5);
  a.setZero();
  a.row(4) << 0.2, 0.4, 0.2, 0.2, 0.0;
  std::vector<Tensor> heads = {Tensor::constant(a), Tensor::constant(a)};
  const Matrix p =
      knowledge_attention_distribution(heads, 4, 1, {1, 4}, {10, 11, 12}, 13).value();
  CHECK(p(0, 10) == doctest::Approx(0.5));
  CHECK(p(0, 11) == doctest::Approx(0.25));
  CHECK(p(0, 12) == doctest::Approx(0.25));
  CHECK(p.sum() == doctest::Approx(1.0));

  // duplicate token at two positions
  Matrix b = Matrix::Zero(4, 4);
  b.row(3) << 0.2, 0.5, 0.3, 0.0;
  const Matrix d = knowledge_attention_distribution({Tensor::constant(b)}, 3, 1, {0, 3},
                                                    {7, 8, 7}, 9)
                       .value();
  CHECK(d(0, 7) == doctest::Approx(0.5));
  CHECK(d(0, 8) == doctest::Approx(0.5));

  // punctuation removed before renormalizing
  const Matrix e = knowledge_attention_distribution({Tensor::constant(b)}, 3, 1, {0, 3},
                                                    {7, -1, 8}, 9)
                       .value();
  CHECK(e(0, 7) == doctest::Approx(0.4));
  CHECK(e(0, 8) == doctest::Approx(0.6));

  // all punctuation: no distribution
  CHECK_FALSE(knowledge_attention_distribution({Tensor::constant(b)}, 3, 1, {0, 3},
                                               {-1, -1, -1}, 9)
                  .defined());
  // vanished mass on content falls back to uniform
  Matrix c = Matrix::Zero(4, 4);
  c.row(3) << 0.0, 1.0, 0.0, 0.0;
  const Matrix f = knowledge_attention_distribution({Tensor::constant(c)}, 3, 1, {0, 3},
                                                    {7, -1, 8}, 9)
                       .value();
  CHECK(f(0, 7) == doctest::Approx(0.5));
  CHECK(f(0, 8) == doctest::Approx(0.5));
}

TEST_CASE("copy gate") {
  auto m = tiny_model();
  zero(m, "gen.gate.w");
  zero(m, "gen.gate.b");
  Matrix h = Matrix::Random(4, 16);
  Matrix k = Matrix::Random(1, 16);
  const Matrix g = copy_gate(m, Tensor::constant(h), Tensor::constant(k)).value();
  CHECK((g.array() - 0.5).abs().maxCoeff() == 0.0);
  auto m2 = tiny_model();
  const Matrix g2 = copy_gate(m2, Tensor::constant(h), Tensor::constant(k)).value();
  CHECK(g2.minCoeff() > 0.0);
  CHECK(g2.maxCoeff() < 1.0);
  // mean of one knowledge row is that row
  CHECK(nn::mean_rows(Tensor::constant(k)).value() == k);
}

TEST_CASE("mixture of generation and copy") {
  Matrix lang{{0.5, 0.3, 0.2}};
  Matrix att{{0.0, 0.0, 0.4, 0.6}};  // id 3 is an OOV knowledge token
  auto mix = [&](double g) {
    return mixed_distribution(Tensor::constant(lang), Tensor::constant(att),
                              Tensor::constant(Matrix::Constant(1, 1, g)), 4)
        .value();
  };
  const Matrix one = mix(1.0);
  CHECK(one(0, 0) == 0.5);
  CHECK(one(0, 3) == 0.0);
  const Matrix zero_g = mix(0.0);
  CHECK(zero_g(0, 2) == 0.4);
  CHECK(zero_g(0, 3) == 0.6);
  const Matrix half = mix(0.5);
  CHECK(half(0, 3) == doctest::Approx(0.3));
  CHECK(half.sum() == doctest::Approx(1.0));
  Matrix att2{{0.0, 0.0, 0.7, 0.3}};
  const Matrix oov = mixed_distribution(Tensor::constant(lang), Tensor::constant(att2),
                                        Tensor::constant(Matrix::Constant(1, 1, 0.5)), 4)
                         .value();
  CHECK(oov(0, 3) == doctest::Approx(0.15));
  const Matrix no_copy =
      mixed_distribution(Tensor::constant(lang), Tensor(), Tensor::constant(Matrix::Ones(1, 1)), 4)
          .value();
  CHECK(no_copy(0, 0) == 0.5);
  CHECK(no_copy(0, 3) == 0.0);
}

TEST_CASE("norm and total loss arithmetic") {
  CHECK(norm_loss(Tensor::constant(Matrix{{0.5}, {0.5}})).item() == 0.5);
  const auto total = total_loss(Tensor::scalar(2), Tensor::scalar(1), Tensor::scalar(0.5),
                                Tensor::scalar(0.5), LossWeights{});
  CHECK(total.item() == 4.0);
  LossWeights no_norm;
  no_norm.norm = 0.0;
  CHECK(total_loss(Tensor::scalar(2), Tensor::scalar(1), Tensor::scalar(0.5),
                   Tensor::scalar(0.5), no_norm)
            .item() == 3.5);
  const auto j = LossWeights{}.to_json();
  CHECK(LossWeights::from_json(j).nll == 1.0);
}

TEST_CASE("each loss passes a finite-difference check") {
  auto m = tiny_model();
  const auto ex = make_example(m.vocab(), kAnswer, history(), kResponse);
  using Pick = Tensor GenerationLosses::*;
  for (Pick part : {&GenerationLosses::nll, &GenerationLosses::bow, &GenerationLosses::kld,
                    &GenerationLosses::norm, &GenerationLosses::total}) {
    const auto r = nn::grad_check(m, [&] { return generation_losses(m, ex, true).*part; }, 3, 5);
    CHECK(r.checked > 0);
    INFO(r.worst_parameter);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("response split") {
  auto s = split_response("sure , wifi is free with the code kq42z . anything else ?",
                          "Free wifi with the code kq42z.");
  CHECK(s.knowledge == "sure, wifi is free with the code kq42z.");
  CHECK(s.greeting == "anything else?");
  auto all = split_response("wifi is free . the code is kq42z .", "Free wifi with the code kq42z.");
  CHECK(all.knowledge == "wifi is free. the code is kq42z.");
  CHECK(all.greeting.empty());
  auto one = split_response("goodbye !", "Free wifi.");
  CHECK(one.knowledge.empty());
  CHECK(one.greeting == "goodbye!");
}

TEST_CASE("examples target the response and <eos>") {
  auto m = tiny_model();
  const auto full = make_example(m.vocab(), kAnswer, history(), kResponse);
  CHECK(full.targets.back() == nn::Vocab::kEos);
  CHECK(full.targets.size() == full.input.response.size() - 1);
  CHECK(full.scored_from == 0);
  const int fact = full.ext.id(m.vocab(), "kq42z");
  CHECK(std::find(full.targets.begin(), full.targets.end(), fact) != full.targets.end());

  const auto greet = make_example(m.vocab(), kAnswer, history(), kResponse, Part::kGreeting);
  CHECK(greet.targets == full.targets);
  CHECK(greet.scored_from == 10);
  CHECK(greet.bow_targets.size() == 8);
  const auto know = make_example(m.vocab(), kAnswer, history(), kResponse, Part::kKnowledge);
  CHECK(know.targets.size() == 11);
}

TEST_CASE("rerank arithmetic and tie handling") {
  CHECK(rerank_score(0.8, 0.7, 0.9, {}) == doctest::Approx(0.6));
  auto emb = [](const std::string& t) -> std::span<const double> {
    static std::map<std::string, std::vector<double>> table;
    auto& v = table[t];
    if (v.empty()) {
      Rng rng(std::hash<std::string>{}(t));
      v.resize(8);
      for (auto& x : v) x = rng.normal();
    }
    return v;
  };
  const std::string answer = "The hotel has free wifi.";
  auto hyp = [](std::vector<std::string> toks, double lp) {
    GenerationHypothesis h;
    h.tokens = toks;
    h.knowledge_tokens = toks;
    h.log_prob = lp;
    return h;
  };
  std::vector<GenerationHypothesis> single = {hyp({"free", "wifi"}, -3.0)};
  CHECK(postprocess_rerank(single, answer, emb) == 0);
  CHECK(single[0].s_nll == 1.0);

  std::vector<GenerationHypothesis> hs = {hyp({"the", "hotel", "has", "free", "wifi", "."}, -1.0),
                                          hyp({"wifi", "costs", "nothing"}, -2.0),
                                          hyp({"no", "idea"}, -5.0)};
  postprocess_rerank(hs, answer, emb);
  CHECK(hs[0].s_jwd == 1.0);
  CHECK(hs[0].s_bert == doctest::Approx(1.0));
  CHECK(hs[0].s_nll == 1.0);
  CHECK(hs[2].s_nll == 0.0);
  CHECK(hs[1].s_nll == doctest::Approx(0.75));
  RerankWeights only_nll{1.0, 0.0, 0.0};
  CHECK(postprocess_rerank(hs, answer, emb, only_nll) == 0);
  CHECK_THROWS_AS(
      [&] {
        std::vector<GenerationHypothesis> none;
        postprocess_rerank(none, answer, emb);
      }(),
      ValidationError);
}

TEST_CASE("decoding scorer") {
  auto m = tiny_model();
  CHECK_THROWS_AS(ModelScorer(m, format_generation_input(kAnswer, history()), 0), NotTrainedError);
  m.mark_trained(kHead);
  m.mark_trained(kCopyHead);
  ModelScorer s(m, format_generation_input(kAnswer, history()), 1);
  const auto step = s.next({});
  REQUIRE(step.log_probs.size() == s.vocab_size());
  for (int id = 0; id < nn::Vocab::kNumSpecials; ++id) {
    if (id == nn::Vocab::kEos) {
      CHECK(std::isfinite(step.log_probs[static_cast<std::size_t>(id)]));
    } else {
      CHECK(std::isinf(step.log_probs[static_cast<std::size_t>(id)]));
    }
  }
  CHECK(std::isfinite(step.log_probs[static_cast<std::size_t>(s.ext().id(m.vocab(), "kq42z"))]));
  CHECK(step.gate > 0.0);
  CHECK(step.gate < 1.0);

  DecodeConfig cfg;
  cfg.max_len = 6;
  const auto hyps = decode_candidates(m, format_generation_input(kAnswer, history()), cfg);
  CHECK(hyps.size() == 8);
  const auto res = generate(m, &m, kAnswer, history(), cfg);
  CHECK(res.candidates.size() == 8);
  const auto j = res.to_json();
  CHECK(j["candidates"].size() == 8);
  CHECK(j["response"] == res.candidates[res.chosen].text());
}
