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


#include "kgdial/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "kgdial/error.hpp"

namespace kgdial::eval {

PRF precision_recall_f1(const std::vector<bool>& pred, const std::vector<bool>& gold) {
  if (pred.size() != gold.size()) {
    throw ValidationError("precision_recall_f1: prediction and gold lengths differ");
  }
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] && gold[i]) ++tp;
    if (pred[i] && !gold[i]) ++fp;
    if (!pred[i] && gold[i]) ++fn;
  }
  PRF out;
  out.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  out.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  const double s = out.precision + out.recall;
  out.f1 = s > 0 ? 2 * out.precision * out.recall / s : 0.0;
  return out;
}

double mrr_at_k(std::span<const Rank> ranks, std::size_t k) {
  if (ranks.empty()) return 0.0;
  double total = 0;
  for (const auto& r : ranks) {
    if (r && *r >= 1 && *r <= k) total += 1.0 / static_cast<double>(*r);
  }
  return total / static_cast<double>(ranks.size());
}

double recall_at_k(std::span<const Rank> ranks, std::size_t k) {
  if (ranks.empty()) return 0.0;
  double hits = 0;
  for (const auto& r : ranks) {
    if (r && *r >= 1 && *r <= k) ++hits;
  }
  return hits / static_cast<double>(ranks.size());
}

namespace {

using Counts = std::map<std::vector<std::string>, std::size_t>;

Counts ngrams(const Tokens& t, std::size_t n) {
  Counts c;
  if (t.size() < n) return c;
  for (std::size_t i = 0; i + n <= t.size(); ++i) {
    ++c[std::vector<std::string>(t.begin() + static_cast<std::ptrdiff_t>(i),
                                 t.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return c;
}

// (clipped matches, candidate n-gram total)
std::pair<std::size_t, std::size_t> overlap(const Tokens& cand, const Tokens& ref,
                                            std::size_t n) {
  const Counts cc = ngrams(cand, n);
  const Counts rc = ngrams(ref, n);
  std::size_t hit = 0, total = 0;
  for (const auto& [g, c] : cc) {
    total += c;
    auto it = rc.find(g);
    if (it != rc.end()) hit += std::min(c, it->second);
  }
  return {hit, total};
}

double combine(const std::vector<std::pair<double, double>>& counts, double cand_len,
               double ref_len, const BleuOptions& opts) {
  if (cand_len == 0) return 0.0;
  double log_sum = 0;
  const double n = static_cast<double>(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    double hit = counts[i].first;
    double total = counts[i].second;
    if (opts.add_one_smoothing && i > 0) {
      hit += 1;
      total += 1;
    }
    if (hit == 0 || total == 0) return 0.0;
    log_sum += std::log(hit / total) / n;
  }
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return bp * std::exp(log_sum);
}

void check_order(std::size_t n) {
  if (n < 1 || n > 4) throw ValidationError("BLEU order must lie in 1..4");
}

}  // namespace

double bleu_n(const Tokens& candidate, const Tokens& reference, std::size_t n,
              const BleuOptions& opts) {
  check_order(n);
  std::vector<std::pair<double, double>> counts;
  for (std::size_t k = 1; k <= n; ++k) {
    auto [hit, total] = overlap(candidate, reference, k);
    counts.emplace_back(static_cast<double>(hit), static_cast<double>(total));
  }
  return combine(counts, static_cast<double>(candidate.size()),
                 static_cast<double>(reference.size()), opts);
}

double corpus_bleu(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references,
                   std::size_t n, const BleuOptions& opts) {
  check_order(n);
  if (candidates.size() != references.size()) {
    throw ValidationError("corpus_bleu: candidate and reference counts differ");
  }
  std::vector<std::pair<double, double>> counts(n, {0.0, 0.0});
  double cand_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    cand_len += static_cast<double>(candidates[i].size());
    ref_len += static_cast<double>(references[i].size());
    for (std::size_t k = 1; k <= n; ++k) {
      auto [hit, total] = overlap(candidates[i], references[i], k);
      counts[k - 1].first += static_cast<double>(hit);
      counts[k - 1].second += static_cast<double>(total);
    }
  }
  return combine(counts, cand_len, ref_len, opts);
}

double rouge_n(const Tokens& candidate, const Tokens& reference, std::size_t n) {
  if (n == 0) throw ValidationError("ROUGE order must be positive");
  if (reference.empty() || candidate.empty()) return 0.0;
  auto [hit, cand_total] = overlap(candidate, reference, n);
  const std::size_t ref_total = reference.size() >= n ? reference.size() - n + 1 : 0;
  if (hit == 0 || cand_total == 0 || ref_total == 0) return 0.0;
  const double p = static_cast<double>(hit) / static_cast<double>(cand_total);
  const double r = static_cast<double>(hit) / static_cast<double>(ref_total);
  return 2 * p * r / (p + r);
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const Tokens& candidate, const Tokens& reference) {
  if (reference.empty() || candidate.empty()) return 0.0;
  const double l = static_cast<double>(lcs_length(candidate, reference));
  if (l == 0) return 0.0;
  const double p = l / static_cast<double>(candidate.size());
  const double r = l / static_cast<double>(reference.size());
  return 2 * p * r / (p + r);
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  auto put = [&j](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  put("precision", precision);
  put("recall", recall);
  put("f1", f1);
  put("mrr@5", mrr_at_5);
  put("recall@1", recall_at_1);
  put("recall@5", recall_at_5);
  put("bleu-1", bleu_1);
  put("bleu-2", bleu_2);
  put("bleu-3", bleu_3);
  put("bleu-4", bleu_4);
  put("rouge-1", rouge_1);
  put("rouge-2", rouge_2);
  put("rouge-l", rouge_l);
  return j;
}

MetricReport generation_report(const std::vector<Tokens>& candidates,
                               const std::vector<Tokens>& references) {
  if (candidates.size() != references.size()) {
    throw ValidationError("generation_report: candidate and reference counts differ");
  }
  MetricReport r;
  r.bleu_1 = corpus_bleu(candidates, references, 1);
  r.bleu_2 = corpus_bleu(candidates, references, 2);
  r.bleu_3 = corpus_bleu(candidates, references, 3);
  r.bleu_4 = corpus_bleu(candidates, references, 4);
  double r1 = 0, r2 = 0, rl = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    r1 += rouge_n(candidates[i], references[i], 1);
    r2 += rouge_n(candidates[i], references[i], 2);
    rl += eval::rouge_l(candidates[i], references[i]);
  }
  const double n = candidates.empty() ? 1.0 : static_cast<double>(candidates.size());
  r.rouge_1 = r1 / n;
  r.rouge_2 = r2 / n;
  r.rouge_l = rl / n;
  return r;
}

}  // namespace kgdial::eval
