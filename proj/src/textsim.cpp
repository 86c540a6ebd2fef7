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

#include "kgdial/textsim.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string_view>

namespace kgdial::textsim {

namespace {

bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

bool is_punct_char(unsigned char c) {
  return c < 0x80 && !is_space(c) && !std::isalnum(c) && c >= 0x21;
}

char lower(unsigned char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a')
                                : static_cast<char>(c);
}

constexpr std::string_view kStopwords[] = {
    "a",     "about", "am",    "an",    "and",   "any",   "are",   "as",
    "at",    "be",    "been",  "but",   "by",    "can",   "could", "do",
    "does",  "for",   "from",  "had",   "has",   "have",  "how",   "i",
    "if",    "in",    "is",    "it",    "its",   "me",    "my",    "no",
    "not",   "of",    "on",    "or",    "our",   "please", "so",   "that",
    "the",   "their", "there", "they",  "this",  "to",    "us",    "was",
    "we",    "were",  "what",  "when",  "where", "which", "will",  "with",
    "would", "yes",   "you",   "your",  "else",  "anything", "help"};

}  // namespace

TokenSeq tokenize(std::string_view text) {
  TokenSeq out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_space(c) || c < 0x20) {
      ++i;
      continue;
    }
    if (is_punct_char(c)) {
      out.tokens.emplace_back(1, static_cast<char>(c));
      out.offsets.push_back({i, i + 1});
      ++i;
      continue;
    }
    std::size_t j = i;
    std::string word;
    while (j < n) {
      const auto d = static_cast<unsigned char>(text[j]);
      if (is_space(d) || d < 0x20 || is_punct_char(d)) break;
      word.push_back(lower(d));
      ++j;
    }
    out.tokens.push_back(std::move(word));
    out.offsets.push_back({i, j});
    i = j;
  }
  return out;
}

std::vector<std::string> tokens_of(std::string_view text) {
  return tokenize(text).tokens;
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string out;
  bool glue_next = false;
  for (const auto& tok : tokens) {
    const bool closing = tok.size() == 1 &&
                         std::string_view(".,!?;:)]}%").find(tok[0]) !=
                             std::string_view::npos;
    if (!out.empty() && !closing && !glue_next) out.push_back(' ');
    out += tok;
    glue_next = tok.size() == 1 && (tok[0] == '(' || tok[0] == '[' ||
                                    tok[0] == '{' || tok[0] == '$');
  }
  return out;
}

bool is_punctuation(std::string_view token) {
  return token.size() == 1 &&
         is_punct_char(static_cast<unsigned char>(token[0]));
}

bool is_stopword(std::string_view token) {
  return std::find(std::begin(kStopwords), std::end(kStopwords), token) !=
         std::end(kStopwords);
}

bool is_content_token(std::string_view token) {
  return !token.empty() && !is_punctuation(token) && !is_stopword(token);
}

std::size_t levenshtein_distance(std::string_view a, std::string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> prev(b.size() + 1);
  std::vector<std::size_t> curr(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 0; i < a.size(); ++i) {
    curr[0] = i + 1;
    for (std::size_t j = 0; j < b.size(); ++j) {
      const std::size_t substitution = prev[j] + (a[i] == b[j] ? 0 : 1);
      curr[j + 1] = std::min({prev[j + 1] + 1, curr[j] + 1, substitution});
    }
    prev.swap(curr);
  }
  return prev[b.size()];
}

double levenshtein_ratio(std::string_view a, std::string_view b) {
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein_distance(a, b)) /
                   static_cast<double>(longest);
}

double jaro(std::string_view a, std::string_view b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;

  const std::size_t longest = std::max(a.size(), b.size());
  const std::size_t window = longest / 2 > 0 ? longest / 2 - 1 : 0;

  std::vector<char> a_matched(a.size(), 0);
  std::vector<char> b_matched(b.size(), 0);
  std::size_t matches = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::size_t lo = i > window ? i - window : 0;
    const std::size_t hi = std::min(b.size(), i + window + 1);
    for (std::size_t j = lo; j < hi; ++j) {
      if (b_matched[j] || a[i] != b[j]) continue;
      a_matched[i] = b_matched[j] = 1;
      ++matches;
      break;
    }
  }
  if (matches == 0) return 0.0;

  std::size_t out_of_order = 0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a_matched[i]) continue;
    while (!b_matched[k]) ++k;
    if (a[i] != b[k]) ++out_of_order;
    ++k;
  }
  const double m = static_cast<double>(matches);
  const double t = static_cast<double>(out_of_order) / 2.0;
  return (m / static_cast<double>(a.size()) + m / static_cast<double>(b.size()) +
          (m - t) / m) /
         3.0;
}

double jaro_winkler(std::string_view a, std::string_view b) {
  const double j = jaro(a, b);
  std::size_t prefix = 0;
  const std::size_t cap = std::min<std::size_t>({4, a.size(), b.size()});
  while (prefix < cap && a[prefix] == b[prefix]) ++prefix;
  return j + static_cast<double>(prefix) * 0.1 * (1.0 - j);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na <= 0.0 || nb <= 0.0) return 0.0;
  if (a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin())) {
    return 1.0;
  }
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double greedy_semantic_f1(std::span<const std::string> candidate,
                          std::span<const std::string> reference,
                          const EmbeddingLookup& embeddings) {
  if (candidate.empty() || reference.empty()) return 0.0;

  std::vector<std::span<const double>> cand_vecs, ref_vecs;
  cand_vecs.reserve(candidate.size());
  ref_vecs.reserve(reference.size());
  for (const auto& t : candidate) cand_vecs.push_back(embeddings(t));
  for (const auto& t : reference) ref_vecs.push_back(embeddings(t));

  std::vector<double> best_for_ref(reference.size(), -1.0);
  double precision = 0.0;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    double best = -1.0;
    for (std::size_t j = 0; j < reference.size(); ++j) {
      const double c = cosine(cand_vecs[i], ref_vecs[j]);
      best = std::max(best, c);
      best_for_ref[j] = std::max(best_for_ref[j], c);
    }
    precision += best;
  }
  precision /= static_cast<double>(candidate.size());
  double recall = 0.0;
  for (double v : best_for_ref) recall += v;
  recall /= static_cast<double>(reference.size());

  // Negative cosines can occur with learned vectors; the score is kept in
  // [0, 1].
  precision = std::clamp(precision, 0.0, 1.0);
  recall = std::clamp(recall, 0.0, 1.0);
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace kgdial::textsim
