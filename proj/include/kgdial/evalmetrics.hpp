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


// Objective metrics for the three subtasks: binary precision/recall/F1,
// rank metrics, and single-reference BLEU / ROUGE over token lists.

#ifndef KGDIAL_EVALMETRICS_HPP_
#define KGDIAL_EVALMETRICS_HPP_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace kgdial::eval {

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Throws ValidationError when the lists differ in length.
PRF precision_recall_f1(const std::vector<bool>& pred, const std::vector<bool>& gold);

// 1-based rank of the gold item per query; nullopt when it was not ranked.
using Rank = std::optional<std::size_t>;

double mrr_at_k(std::span<const Rank> ranks, std::size_t k);
double recall_at_k(std::span<const Rank> ranks, std::size_t k);

using Tokens = std::vector<std::string>;

struct BleuOptions {
  bool add_one_smoothing = false;  // applied to n >= 2 precisions
};

// Sentence-level BLEU-n: geometric mean of clipped n-gram precisions 1..n
// with the brevity penalty. Empty candidate -> 0.
double bleu_n(const Tokens& candidate, const Tokens& reference, std::size_t n,
              const BleuOptions& opts = {});

// Corpus-level BLEU-n (pooled n-gram counts and lengths).
double corpus_bleu(const std::vector<Tokens>& candidates,
                   const std::vector<Tokens>& references, std::size_t n,
                   const BleuOptions& opts = {});

// n-gram overlap F1. Empty reference -> 0.
double rouge_n(const Tokens& candidate, const Tokens& reference, std::size_t n);
// LCS-based F1 (beta = 1).
double rouge_l(const Tokens& candidate, const Tokens& reference);
std::size_t lcs_length(const Tokens& a, const Tokens& b);

// Flat report; unset fields are omitted from JSON.
struct MetricReport {
  std::optional<double> precision, recall, f1;
  std::optional<double> mrr_at_5, recall_at_1, recall_at_5;
  std::optional<double> bleu_1, bleu_2, bleu_3, bleu_4;
  std::optional<double> rouge_1, rouge_2, rouge_l;

  nlohmann::json to_json() const;
};

// Averaged sentence-level ROUGE and corpus BLEU over aligned lists.
MetricReport generation_report(const std::vector<Tokens>& candidates,
                               const std::vector<Tokens>& references);

}  // namespace kgdial::eval

#endif  // KGDIAL_EVALMETRICS_HPP_
