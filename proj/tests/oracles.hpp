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

// Independent reference implementations used only by tests. They are written
// for clarity, not speed, and share no code with the library.

#ifndef KGDIAL_TESTS_ORACLES_HPP_
#define KGDIAL_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace oracle {

// Full-table Wagner-Fischer.
inline std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::vector<std::size_t>> t(a.size() + 1,
                                          std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) t[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) t[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = t[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      t[i][j] = std::min({t[i - 1][j] + 1, t[i][j - 1] + 1, sub});
    }
  }
  return t[a.size()][b.size()];
}

inline double lev_ratio(const std::string& a, const std::string& b) {
  if (a.empty() && b.empty()) return 1.0;
  const double m = static_cast<double>(std::max(a.size(), b.size()));
  return 1.0 - static_cast<double>(edit_distance(a, b)) / m;
}

inline double jaro(const std::string& s1, const std::string& s2) {
  if (s1.empty() && s2.empty()) return 1.0;
  if (s1.empty() || s2.empty()) return 0.0;
  const long window =
      std::max(0L, static_cast<long>(std::max(s1.size(), s2.size())) / 2 - 1);
  std::vector<bool> used(s2.size(), false);
  std::string m1;
  std::vector<std::size_t> pos2;
  for (std::size_t i = 0; i < s1.size(); ++i) {
    for (std::size_t j = 0; j < s2.size(); ++j) {
      const long gap = static_cast<long>(i) - static_cast<long>(j);
      if (!used[j] && std::labs(gap) <= window && s1[i] == s2[j]) {
        used[j] = true;
        m1.push_back(s1[i]);
        break;
      }
    }
  }
  std::string m2;
  for (std::size_t j = 0; j < s2.size(); ++j) {
    if (used[j]) m2.push_back(s2[j]);
  }
  const double m = static_cast<double>(m1.size());
  if (m == 0) return 0.0;
  double half = 0;
  for (std::size_t k = 0; k < m1.size(); ++k) {
    if (m1[k] != m2[k]) half += 1;
  }
  const double t = half / 2.0;
  return (m / s1.size() + m / s2.size() + (m - t) / m) / 3.0;
}

inline double jaro_winkler(const std::string& a, const std::string& b) {
  const double j = jaro(a, b);
  std::size_t l = 0;
  while (l < 4 && l < a.size() && l < b.size() && a[l] == b[l]) ++l;
  return j + static_cast<double>(l) * 0.1 * (1.0 - j);
}

// ---- n-gram metrics ----

using Tokens = std::vector<std::string>;

inline std::map<Tokens, int> ngram_counts(const Tokens& t, std::size_t n) {
  std::map<Tokens, int> c;
  for (std::size_t i = 0; i + n <= t.size(); ++i) {
    c[Tokens(t.begin() + static_cast<long>(i), t.begin() + static_cast<long>(i + n))]++;
  }
  return c;
}

inline double clipped_precision(const Tokens& cand, const Tokens& ref, std::size_t n) {
  auto cc = ngram_counts(cand, n);
  auto rc = ngram_counts(ref, n);
  double hit = 0, total = 0;
  for (auto& [g, c] : cc) {
    total += c;
    auto it = rc.find(g);
    hit += std::min(c, it == rc.end() ? 0 : it->second);
  }
  return total == 0 ? 0.0 : hit / total;
}

// Sentence BLEU-N, uniform weights, no smoothing, brevity penalty.
inline double bleu(const Tokens& cand, const Tokens& ref, std::size_t max_n) {
  if (cand.empty()) return 0.0;
  double log_sum = 0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    const double p = clipped_precision(cand, ref, n);
    if (p == 0) return 0.0;
    log_sum += std::log(p) / static_cast<double>(max_n);
  }
  const double c = static_cast<double>(cand.size());
  const double r = static_cast<double>(ref.size());
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum);
}

inline double rouge_n(const Tokens& cand, const Tokens& ref, std::size_t n) {
  auto cc = ngram_counts(cand, n);
  auto rc = ngram_counts(ref, n);
  double overlap = 0, nc = 0, nr = 0;
  for (auto& [g, c] : cc) {
    nc += c;
    auto it = rc.find(g);
    if (it != rc.end()) overlap += std::min(c, it->second);
  }
  for (auto& [g, c] : rc) nr += c;
  if (nc == 0 || nr == 0 || overlap == 0) return 0.0;
  const double p = overlap / nc, r = overlap / nr;
  return 2 * p * r / (p + r);
}

// Longest common subsequence by exhaustive recursion with memo.
inline std::size_t lcs(const Tokens& a, const Tokens& b, std::size_t i, std::size_t j,
                       std::map<std::pair<std::size_t, std::size_t>, std::size_t>& memo) {
  if (i == a.size() || j == b.size()) return 0;
  auto key = std::make_pair(i, j);
  if (auto it = memo.find(key); it != memo.end()) return it->second;
  std::size_t best = a[i] == b[j] ? 1 + lcs(a, b, i + 1, j + 1, memo)
                                   : std::max(lcs(a, b, i + 1, j, memo), lcs(a, b, i, j + 1, memo));
  memo[key] = best;
  return best;
}

inline double rouge_l(const Tokens& cand, const Tokens& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  const double l = static_cast<double>(lcs(cand, ref, 0, 0, memo));
  if (l == 0) return 0.0;
  const double p = l / cand.size(), r = l / ref.size();
  return 2 * p * r / (p + r);
}

}  // namespace oracle

#endif  // KGDIAL_TESTS_ORACLES_HPP_
