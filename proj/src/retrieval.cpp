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

#include "kgdial/retrieval.hpp"

#include <algorithm>
#include <set>

#include "kgdial/error.hpp"
#include "kgdial/textsim.hpp"

namespace kgdial::retrieval {

namespace {

using Tokens = std::vector<std::string>;

std::string join(const Tokens& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

bool contains_run(const Tokens& haystack, const Tokens& needle) {
  if (needle.empty() || needle.size() > haystack.size()) return false;
  return std::search(haystack.begin(), haystack.end(), needle.begin(),
                     needle.end()) != haystack.end();
}

double fuzzy_tokens(const Tokens& alias, const Tokens& utterance, double tau) {
  if (alias.empty()) return 0.0;
  std::size_t counted = 0;
  for (const auto& a : alias) {
    double best = 0.0;
    for (const auto& u : utterance) {
      best = std::max(best, textsim::levenshtein_ratio(a, u));
      if (best >= 1.0) break;
    }
    if (best >= tau) ++counted;
  }
  return static_cast<double>(counted) / static_cast<double>(alias.size());
}

bool is_domain_suffix(const std::string& token) {
  return token == "hotel" || token == "restaurant";
}

const std::set<std::string>& taxi_keywords() {
  static const std::set<std::string> k = {"taxi", "taxis", "cab", "cabs"};
  return k;
}

const std::set<std::string>& train_keywords() {
  static const std::set<std::string> k = {"train", "trains", "station",
                                          "railway"};
  return k;
}

}  // namespace

void RetrievalConfig::validate() const {
  if (!(tau > 0.0 && tau <= 1.0)) {
    throw ValidationError("retrieval tau must lie in (0, 1]");
  }
  if (fuzzy_window == 0) throw ValidationError("fuzzy_window must be >= 1");
}

std::vector<std::string> generate_aliases(std::string_view entity_name) {
  const Tokens original = textsim::tokens_of(entity_name);
  std::vector<Tokens> variants = {original};

  auto substitute = [](Tokens t, const std::string& from, const std::string& to) {
    for (auto& tok : t) {
      if (tok == from) tok = to;
    }
    return t;
  };
  if (std::find(original.begin(), original.end(), "&") != original.end()) {
    variants.push_back(substitute(original, "&", "and"));
  }
  if (std::find(original.begin(), original.end(), "and") != original.end()) {
    variants.push_back(substitute(original, "and", "&"));
  }
  const std::size_t base_count = variants.size();
  for (std::size_t i = 0; i < base_count; ++i) {
    const Tokens& v = variants[i];
    if (v.size() > 1 && is_domain_suffix(v.back())) {
      variants.emplace_back(v.begin(), v.end() - 1);
    }
  }

  std::vector<std::string> out;
  for (const auto& v : variants) {
    std::string alias = join(v);
    if (alias.empty()) continue;
    if (std::find(out.begin(), out.end(), alias) == out.end()) {
      out.push_back(std::move(alias));
    }
  }
  return out;
}

bool exact_match(std::string_view alias, std::string_view utterance) {
  return contains_run(textsim::tokens_of(utterance), textsim::tokens_of(alias));
}

double fuzzy_match_score(std::string_view alias, std::string_view utterance,
                         double tau) {
  return fuzzy_tokens(textsim::tokens_of(alias), textsim::tokens_of(utterance),
                      tau);
}

std::vector<FuzzyCandidate> select_fuzzy(std::vector<FuzzyCandidate> candidates,
                                         double tau, std::size_t top_k) {
  std::erase_if(candidates,
                [tau](const FuzzyCandidate& c) { return !(c.score > tau); });
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const FuzzyCandidate& a, const FuzzyCandidate& b) {
                     if (a.score != b.score) return a.score > b.score;
                     if (a.entity.entity_id != b.entity.entity_id) {
                       return a.entity.entity_id < b.entity.entity_id;
                     }
                     return a.entity.domain < b.entity.domain;
                   });
  if (candidates.size() > top_k) candidates.resize(top_k);
  return candidates;
}

std::vector<EntityMatch> retrieve_entities(const DialogueLog& dialogue,
                                           const KnowledgeBase& kb,
                                           const RetrievalConfig& cfg) {
  cfg.validate();
  std::vector<Tokens> utterances;
  utterances.reserve(dialogue.turns.size());
  for (const auto& t : dialogue.turns) {
    utterances.push_back(textsim::tokens_of(t.text));
  }
  const std::size_t n = utterances.size();
  const std::size_t window_start = n > cfg.fuzzy_window ? n - cfg.fuzzy_window : 0;

  struct Exact {
    EntityKey entity;
    std::string alias;
    std::size_t last_turn;
  };
  std::vector<Exact> exact;
  std::vector<FuzzyCandidate> fuzzy;

  for (const auto& entity : kb.entities()) {
    const auto name = kb.entity_name(entity);
    if (!name) continue;
    const auto aliases = generate_aliases(*name);
    std::vector<Tokens> alias_tokens;
    for (const auto& a : aliases) alias_tokens.push_back(textsim::tokens_of(a));

    std::optional<Exact> hit;
    for (std::size_t u = n; u-- > 0 && !hit;) {
      for (std::size_t a = 0; a < aliases.size(); ++a) {
        if (contains_run(utterances[u], alias_tokens[a])) {
          hit = Exact{entity, aliases[a], u};
          break;
        }
      }
    }
    if (hit) {
      exact.push_back(std::move(*hit));
      continue;
    }

    FuzzyCandidate best{entity, "", 0.0};
    for (std::size_t a = 0; a < aliases.size(); ++a) {
      for (std::size_t u = window_start; u < n; ++u) {
        const double s = fuzzy_tokens(alias_tokens[a], utterances[u], cfg.tau);
        if (s > best.score) {
          best.score = s;
          best.alias = aliases[a];
        }
      }
    }
    if (best.score > 0.0) fuzzy.push_back(std::move(best));
  }

  std::stable_sort(exact.begin(), exact.end(), [](const Exact& a, const Exact& b) {
    if (a.last_turn != b.last_turn) return a.last_turn > b.last_turn;
    if (a.entity.entity_id != b.entity.entity_id) {
      return a.entity.entity_id < b.entity.entity_id;
    }
    return a.entity.domain < b.entity.domain;
  });

  std::vector<EntityMatch> out;
  for (auto& e : exact) {
    out.push_back({std::move(e.entity), std::move(e.alias), MatchKind::kExact, 1.0});
  }
  for (auto& f : select_fuzzy(std::move(fuzzy), cfg.tau, cfg.fuzzy_top_k)) {
    out.push_back({std::move(f.entity), std::move(f.alias), MatchKind::kFuzzy, f.score});
  }
  return out;
}

std::vector<std::string> keyword_domains(const DialogueLog& dialogue,
                                         std::size_t window) {
  std::vector<std::string> out;
  const std::size_t n = dialogue.turns.size();
  const std::size_t start = n > window ? n - window : 0;
  for (std::size_t u = n; u-- > start;) {
    for (const auto& tok : textsim::tokens_of(dialogue.turns[u].text)) {
      const char* domain = nullptr;
      if (taxi_keywords().contains(tok)) domain = "taxi";
      if (train_keywords().contains(tok)) domain = "train";
      if (domain && std::find(out.begin(), out.end(), domain) == out.end()) {
        out.emplace_back(domain);
      }
    }
  }
  return out;
}

std::vector<KnowledgeSnippet> expand_to_snippets(
    const std::vector<EntityMatch>& matches, const KnowledgeBase& kb,
    const DialogueLog& dialogue, const RetrievalConfig& cfg) {
  std::vector<KnowledgeSnippet> out;
  std::set<EntityKey> seen;
  auto add_entity = [&](const EntityKey& entity) {
    if (!seen.insert(entity).second) return;
    for (const auto* s : kb.entity_snippets(entity)) out.push_back(*s);
  };
  for (const auto& m : matches) add_entity(m.entity);
  for (const auto& domain : keyword_domains(dialogue, cfg.fuzzy_window)) {
    for (const auto& entity : kb.entities_in(domain)) {
      if (!kb.entity_name(entity)) add_entity(entity);
    }
  }
  return out;
}

}  // namespace kgdial::retrieval
