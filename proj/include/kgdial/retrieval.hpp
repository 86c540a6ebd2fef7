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

// Entity-level candidate retrieval. An entity matches a dialogue when one of
// its aliases occurs verbatim anywhere in the dialogue, or when it is among
// the best fuzzy matches over the most recent utterances. A matched entity
// contributes all of its snippets.

#ifndef KGDIAL_RETRIEVAL_HPP_
#define KGDIAL_RETRIEVAL_HPP_

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kgdial/corpus.hpp"

namespace kgdial::retrieval {

struct RetrievalConfig {
  double tau = 0.8;
  std::size_t fuzzy_window = 5;
  std::size_t fuzzy_top_k = 2;

  void validate() const;
};

enum class MatchKind { kExact, kFuzzy };

struct EntityMatch {
  EntityKey entity;
  std::string matched_alias;
  MatchKind kind = MatchKind::kExact;
  double fuzzy_score = 1.0;
};

// Lowercased, token-normalized aliases. Always contains the original name;
// adds "&" <-> "and" variants and the name without a trailing domain word.
std::vector<std::string> generate_aliases(std::string_view entity_name);

// Alias tokens occur as a contiguous run of utterance tokens.
bool exact_match(std::string_view alias, std::string_view utterance);

// Fraction of alias tokens whose best Levenshtein ratio against any
// utterance token reaches tau.
double fuzzy_match_score(std::string_view alias, std::string_view utterance,
                         double tau = 0.8);

struct FuzzyCandidate {
  EntityKey entity;
  std::string alias;
  double score = 0.0;
};

// Keeps candidates scoring strictly above tau, ordered by score descending
// then entity_id ascending, truncated to top_k.
std::vector<FuzzyCandidate> select_fuzzy(std::vector<FuzzyCandidate> candidates,
                                         double tau, std::size_t top_k);

// Exact matches first (most recently mentioned first, then entity_id), then
// at most fuzzy_top_k fuzzy-only matches.
std::vector<EntityMatch> retrieve_entities(const DialogueLog& dialogue,
                                           const KnowledgeBase& kb,
                                           const RetrievalConfig& cfg = {});

// Domain of a domain-wide knowledge keyword mentioned in the last `window`
// utterances ("taxi" or "train"), most recent mention first.
std::vector<std::string> keyword_domains(const DialogueLog& dialogue,
                                         std::size_t window);

// All snippets of the matched entities plus domain-wide snippets whose domain
// keyword appears in the recent window. Entity order follows `matches`.
std::vector<KnowledgeSnippet> expand_to_snippets(
    const std::vector<EntityMatch>& matches, const KnowledgeBase& kb,
    const DialogueLog& dialogue, const RetrievalConfig& cfg = {});

}  // namespace kgdial::retrieval

#endif  // KGDIAL_RETRIEVAL_HPP_
