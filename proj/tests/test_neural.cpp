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
#include <filesystem>
#include <vector>

#include "kgdial/corpus.hpp"
#include "kgdial/error.hpp"
#include "kgdial/neural.hpp"

using namespace kgdial;
using namespace kgdial::nn;

namespace {

ModelConfig tiny_config(std::uint64_t seed = 3) {
  ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_layers = 2;
  c.d_ff = 32;
  c.max_seq = 32;
  c.latent_k = 3;
  c.seed = seed;
  c.init_std = 0.2;
  return c;
}

Vocab letters() { return build_vocab({"a b c d e f g h i j k l"}, 1); }

std::vector<int> random_ids(Rng& rng, std::size_t n, std::size_t vocab) {
  std::vector<int> ids(n);
  for (auto& i : ids) {
    i = static_cast<int>(Vocab::kNumSpecials + rng.uniform(vocab - Vocab::kNumSpecials));
  }
  return ids;
}

}  // namespace

TEST_CASE("vocabulary construction") {
  const auto v = build_vocab({"a a b"}, 2);
  CHECK(v.contains("a"));
  CHECK_FALSE(v.contains("b"));
  CHECK(v.id("b") == Vocab::kUnk);
  for (std::size_t i = 0; i < Vocab::special_tokens().size(); ++i) {
    CHECK(v.token(static_cast<int>(i)) == Vocab::special_tokens()[i]);
  }
  CHECK(v.id("<bos>") == Vocab::kBos);
  CHECK_THROWS_AS(build_vocab({}, 1), ValidationError);

  SyntheticSpec spec;
  std::vector<std::string> texts;
  for (const auto& d : generate_synthetic_corpus(spec).dialogues) {
    for (const auto& t : d.turns) texts.push_back(t.text);
  }
  std::vector<std::string> texts2;
  for (const auto& d : generate_synthetic_corpus(spec).dialogues) {
    for (const auto& t : d.turns) texts2.push_back(t.text);
  }
  CHECK(build_vocab(texts, 1) == build_vocab(texts2, 1));
  // bijective over regular entries
  const auto big = build_vocab(texts, 1);
  for (std::size_t i = 0; i < big.size(); ++i) {
    CHECK(big.id(big.token(static_cast<int>(i))) == static_cast<int>(i));
  }
}

TEST_CASE("mask construction") {
  SUBCASE("trapezoidal") {
    MaskSpec s{MaskKind::kTrapezoidal, {0, 1}, {1, 3}, {3, 5}};
    const Mask m = build_mask(s, 5);
    // context row sees nothing of the response
    CHECK(m(2, 3) == 0);
    CHECK(m(2, 4) == 0);
    CHECK(m(0, 2) == 1);
    // response row 3 sees all of knowledge+context, itself, not row 4
    CHECK(m(3, 0) == 1);
    CHECK(m(3, 2) == 1);
    CHECK(m(3, 3) == 1);
    CHECK(m(3, 4) == 0);
    CHECK(m(4, 3) == 1);
  }
  SUBCASE("causal") {
    const Mask m = build_mask({MaskKind::kCausal, {}, {}, {}}, 3);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) CHECK(m(i, j) == (j <= i ? 1 : 0));
    }
  }
  SUBCASE("bidirectional") {
    CHECK(build_mask({MaskKind::kBidirectional, {}, {}, {}}, 4).minCoeff() == 1);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(build_mask({MaskKind::kBidirectional, {0, 3}, {2, 4}, {}}, 4),
                    ValidationError);
    CHECK_THROWS_AS(build_mask({MaskKind::kTrapezoidal, {0, 2}, {2, 4}, {}}, 4),
                    ValidationError);
    CHECK_THROWS_AS(build_mask({MaskKind::kBidirectional, {0, 2}, {3, 4}, {}}, 4),
                    ValidationError);
  }
}

TEST_CASE("forward surfaces normalized attention") {
  MiniModel model(tiny_config(), letters());
  Rng rng(5);
  ModelInput in{random_ids(rng, 9, model.vocab().size()),
                {MaskKind::kTrapezoidal, {0, 3}, {3, 6}, {6, 9}},
                {}};
  const auto out = model.forward(in);
  CHECK(out.hidden.rows() == 9);
  CHECK(out.hidden.cols() == 16);
  REQUIRE(out.attention.size() == 2);
  const Mask m = build_mask(in.mask, 9);
  for (const auto& layer : out.attention) {
    REQUIRE(layer.size() == 2);
    for (const auto& a : layer) {
      for (int i = 0; i < 9; ++i) {
        CHECK(std::abs(a.value().row(i).sum() - 1.0) < 1e-6);
        for (int j = 0; j < 9; ++j) {
          if (!m(i, j)) CHECK(a.value()(i, j) == 0.0);
        }
      }
    }
  }
  CHECK_FALSE(out.truncated);
}

TEST_CASE("trapezoidal mask hides the response from knowledge and context") {
  MiniModel model(tiny_config(), letters());
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    ModelInput in{random_ids(rng, 10, model.vocab().size()),
                  {MaskKind::kTrapezoidal, {0, 3}, {3, 7}, {7, 10}},
                  {}};
    const Matrix h1 = model.forward(in).hidden.value();
    in.ids[7 + rng.uniform(3)] = static_cast<int>(Vocab::kNumSpecials + rng.uniform(12));
    const Matrix h2 = model.forward(in).hidden.value();
    CHECK(h1.topRows(7) == h2.topRows(7));
  }
}

TEST_CASE("causal outputs ignore later tokens") {
  MiniModel model(tiny_config(), letters());
  Rng rng(2);
  ModelInput in{random_ids(rng, 8, model.vocab().size()), {MaskKind::kCausal, {}, {}, {}}, {}};
  const Matrix h1 = model.forward(in).hidden.value();
  in.ids[5] = in.ids[5] == 8 ? 9 : 8;
  const Matrix h2 = model.forward(in).hidden.value();
  CHECK(h1.topRows(5) == h2.topRows(5));
  CHECK(h1.row(5) != h2.row(5));
}

TEST_CASE("over-length input drops the oldest context utterances") {
  auto cfg = tiny_config();
  cfg.max_seq = 10;
  MiniModel model(cfg, letters());
  std::vector<int> ids = {7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18};
  ModelInput in{ids, {MaskKind::kTrapezoidal, {0, 2}, {2, 10}, {10, 12}}, {2, 5, 8}};
  const auto out = model.forward(in);
  CHECK(out.truncated);
  CHECK(out.dropped == 3);  // a whole utterance [2, 5)
  CHECK(out.ids == std::vector<int>{7, 8, 12, 13, 14, 15, 16, 17, 18});
  CHECK(out.mask.knowledge == Span{0, 2});
  CHECK(out.mask.context == Span{2, 7});
  CHECK(out.mask.response == Span{7, 9});

  ModelInput no_breaks{ids, {MaskKind::kTrapezoidal, {0, 2}, {2, 10}, {10, 12}}, {}};
  CHECK(model.forward(no_breaks).dropped == 2);

  ModelInput hopeless{ids, {MaskKind::kTrapezoidal, {0, 9}, {9, 10}, {10, 12}}, {}};
  CHECK_THROWS_AS(model.forward(hopeless), ValidationError);
}

namespace {

// 32 random sequences, each with a random binary label, classified from
// the first hidden state.
struct MemorizeTask {
  std::vector<std::vector<int>> seqs;
  std::vector<double> labels;

  explicit MemorizeTask(std::size_t vocab) {
    Rng rng(21);
    for (int i = 0; i < 32; ++i) {
      seqs.push_back(random_ids(rng, 6, vocab));
      labels.push_back(static_cast<double>(i % 2));
    }
  }

  Tensor loss(MiniModel& m, std::size_t i) const {
    ModelInput in{seqs[i], {MaskKind::kBidirectional, {}, {}, {}}, {}};
    auto h = slice_rows(m.forward(in).hidden, 0, 1);
    auto z = add(matmul(h, m.parameter("probe.w")), m.parameter("probe.b"));
    const double y[] = {labels[i]};
    return bce_with_logits(z, y);
  }
};

double mean_loss(MiniModel& m, const MemorizeTask& task) {
  NoGradGuard g;
  double s = 0;
  for (std::size_t i = 0; i < task.seqs.size(); ++i) s += task.loss(m, i).item();
  return s / static_cast<double>(task.seqs.size());
}

}  // namespace

TEST_CASE("training memorizes a small set and is deterministic") {
  auto run = [](double lr, std::uint64_t* checksum_out) {
    MiniModel m(tiny_config(), letters());
    m.add_parameter("probe.w", 16, 1, Init::kNormal);
    m.add_parameter("probe.b", 1, 1, Init::kZeros);
    MemorizeTask task(m.vocab().size());
    const double before = mean_loss(m, task);
    TrainConfig cfg;
    cfg.adam.lr = lr;
    cfg.steps = 200;
    cfg.batch_size = 8;
    cfg.seed = 4;
    const std::uint64_t initial = m.checksum();
    auto res = train(m, task.seqs.size(),
                     [&](std::size_t i, Rng&) { return task.loss(m, i); }, cfg);
    CHECK(res.loss_curve.size() == 200);
    *checksum_out = m.checksum();
    if (lr == 0.0) CHECK(m.checksum() == initial);
    return std::make_pair(before, mean_loss(m, task));
  };
  std::uint64_t c1 = 0;
  std::uint64_t c2 = 0;
  std::uint64_t c0 = 0;
  const auto [before, after] = run(3e-3, &c1);
  CHECK(after < 0.1 * before);
  run(3e-3, &c2);
  CHECK(c1 == c2);
  run(0.0, &c0);
}

TEST_CASE("non-finite loss aborts with the example index") {
  MiniModel m(tiny_config(), letters());
  TrainConfig cfg;
  cfg.steps = 3;
  cfg.batch_size = 1;
  try {
    train(m, 2, [](std::size_t, Rng&) { return Tensor::scalar(std::nan("")); }, cfg);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("step 0") != std::string::npos);
    CHECK(std::string(e.what()).find("example") != std::string::npos);
  }
}

TEST_CASE("gradient check on the encoder") {
  MiniModel m(tiny_config(), letters());
  m.add_parameter("probe.w", 16, 1, Init::kNormal);
  m.add_parameter("probe.b", 1, 1, Init::kZeros);
  MemorizeTask task(m.vocab().size());
  const auto r = grad_check(m, [&]() { return task.loss(m, 3); }, 3, 1);
  CHECK(r.checked > 0);
  CHECK(r.max_rel_error < 1e-4);

  const auto c = grad_check(m, [&]() {
    return add(scale(sum(m.parameter("probe.b")), 0.0), Tensor::scalar(2.0));
  }, 2, 1);
  CHECK(c.max_rel_error == 0.0);
}

TEST_CASE("checkpoints round trip and reject mismatches") {
  MiniModel m(tiny_config(), letters());
  m.add_parameter("latent.z", 3, 16, Init::kNormal);
  m.mark_trained("latent");
  const auto dir = std::filesystem::temp_directory_path() / "kgdial_ckpt_test";
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "m.json", m, {{"task", "unit"}});
  const auto loaded = load_checkpoint(dir / "m.json");
  CHECK(loaded.model.checksum() == m.checksum());
  CHECK(loaded.model.vocab() == m.vocab());
  CHECK(loaded.model.is_trained("latent"));
  CHECK(loaded.meta["task"] == "unit");
  CHECK_THROWS_AS(loaded.model.require_trained("detection"), NotTrainedError);

  auto other = tiny_config();
  other.d_model = 32;
  CHECK_THROWS_AS(load_checkpoint(dir / "m.json", &other), CheckpointError);
  other = tiny_config();
  other.latent_k = 5;
  CHECK_THROWS_AS(load_checkpoint(dir / "m.json", &other), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(dir / "absent.json"), CheckpointError);
}
