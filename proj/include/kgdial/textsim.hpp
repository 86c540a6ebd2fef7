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

// Tokenization and string similarity primitives shared by retrieval and
// response reranking.

#ifndef KGDIAL_TEXTSIM_HPP_
#define KGDIAL_TEXTSIM_HPP_

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kgdial::textsim {

struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Lowercased tokens with byte offsets into the source text.
struct TokenSeq {
  std::vector<std::string> tokens;
  std::vector<TokenSpan> offsets;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
};

// Splits on whitespace, lowercases ASCII letters, and emits every ASCII
// punctuation character as its own token. Bytes >= 0x80 are treated as word
// characters so UTF-8 sequences stay intact.
TokenSeq tokenize(std::string_view text);

// Convenience wrapper returning only the token strings.
std::vector<std::string> tokens_of(std::string_view text);

// Joins tokens into normalized text: single spaces, no space before closing
// punctuation.
std::string detokenize(std::span<const std::string> tokens);

// True for single-character ASCII punctuation tokens.
bool is_punctuation(std::string_view token);

// Small closed-class word list used to decide what counts as content.
bool is_stopword(std::string_view token);

// Not punctuation and not a stopword.
bool is_content_token(std::string_view token);

std::size_t levenshtein_distance(std::string_view a, std::string_view b);

// 1 - distance / max(|a|, |b|); 1.0 when both are empty.
double levenshtein_ratio(std::string_view a, std::string_view b);

double jaro(std::string_view a, std::string_view b);

// Jaro plus the Winkler prefix bonus (prefix capped at 4, scale 0.1).
double jaro_winkler(std::string_view a, std::string_view b);

// Returns the embedding for a token. Unknown tokens must map to a reserved
// non-zero vector rather than an empty span.
using EmbeddingLookup =
    std::function<std::span<const double>(const std::string& token)>;

double cosine(std::span<const double> a, std::span<const double> b);

// Greedy-matching F1 over token embeddings: each candidate token is matched to
// its most similar reference token (precision) and vice versa (recall).
// Returns 0 if either side is empty.
double greedy_semantic_f1(std::span<const std::string> candidate,
                          std::span<const std::string> reference,
                          const EmbeddingLookup& embeddings);

}  // namespace kgdial::textsim

#endif  // KGDIAL_TEXTSIM_HPP_
