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


// Knowledge selection. Two selectors share one interface:
//  * Retrieve & Rank scores every retrieved snippet with a cross-encoder
//    (<bos> S <sep> dom <sep> ent <sep> doc <eos>);
//  * Three-step picks a domain, then an entity in it, then a document.
// The ensemble compares the two level by level.

#ifndef KGDIAL_SELECTION_HPP_
#define KGDIAL_SELECTION_HPP_

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgdial/corpus.hpp"
#include "kgdial/formatting.hpp"
#include "kgdial/neural.hpp"
#include "kgdial/retrieval.hpp"
#include "kgdial/rng.hpp"

namespace kgdial::selection {

inline constexpr const char* kRankHead = "rank";
inline constexpr const char* kDomainHead = "domain";
inline constexpr const char* kEntityHead = "entity";
inline constexpr const char* kDocumentHead = "document";

// ---- Input layouts ----

FormattedInput format_ranking_input(const DialogueLog& dialogue, const KnowledgeBase& kb,
                                    const KnowledgeSnippet& snippet);
FormattedInput format_domain_input(const DialogueLog& dialogue, const std::string& domain);
FormattedInput format_entity_input(const DialogueLog& dialogue, const KnowledgeBase& kb,
                                   const EntityKey& entity);

// ---- Scoring ----

// Registers a d_model -> 1 head named `head`.
void add_score_head(nn::MiniModel& model, const std::string& head);
nn::Tensor score_logit(const nn::MiniModel& model, const FormattedInput& input,
                       const std::string& head);
// Sigmoid of the pooled <bos> state through `head`. Requires a trained head.
double score_candidate(const nn::MiniModel& model, const FormattedInput& input,
                       const std::string& head = kRankHead);

// k snippets drawn uniformly without replacement from candidates minus gold
// (all of them when fewer exist), in draw order.
std::vector<KnowledgeSnippet> sample_negatives(const KnowledgeSnippet& gold,
                                               const std::vector<KnowledgeSnippet>& candidates,
                                               std::size_t k, Rng& rng);

// ---- Results ----

struct RankedCandidate {
  KnowledgeSnippet snippet;
  double score = 0.0;
};

struct SelectionResult {
  std::vector<RankedCandidate> ranked;  // best first

  const KnowledgeSnippet& chosen() const;
  // {"knowledge": [top-k keys], "scores": [...]}
  nlohmann::json to_json(std::size_t top_k = 5) const;
};

// Descending score, ties by (domain, entity_id, doc_id).
void sort_ranked(std::vector<RankedCandidate>& ranked);

// ---- Cascade view shared by both selectors ----

class CascadeScorer {
 public:
  virtual ~CascadeScorer() = default;
  virtual std::vector<std::pair<std::string, double>> domain_scores() = 0;
  virtual std::vector<std::pair<EntityKey, double>> entity_scores(const std::string& domain) = 0;
  virtual std::vector<RankedCandidate> document_scores(const EntityKey& entity) = 0;
};

// Retrieve & Rank exposed level-wise: a level's score is the best score of
// the retrieved documents below it. Levels without retrieved documents are
// left out (every level counts when retrieval came back empty).
class RetrieveRankScorer : public CascadeScorer {
 public:
  RetrieveRankScorer(const nn::MiniModel& model, const DialogueLog& dialogue,
                     const KnowledgeBase& kb, const retrieval::RetrievalConfig& cfg = {});

  // Retrieved candidates (the whole knowledge base when retrieval is empty).
  const std::vector<KnowledgeSnippet>& candidates() const { return candidates_; }
  bool fell_back() const { return fell_back_; }
  double score(const KnowledgeSnippet& s);

  std::vector<std::pair<std::string, double>> domain_scores() override;
  std::vector<std::pair<EntityKey, double>> entity_scores(const std::string& domain) override;
  std::vector<RankedCandidate> document_scores(const EntityKey& entity) override;

 private:
  std::vector<const KnowledgeSnippet*> pool(const std::vector<const KnowledgeSnippet*>& all) const;

  const nn::MiniModel& model_;
  const DialogueLog& dialogue_;
  const KnowledgeBase& kb_;
  std::vector<KnowledgeSnippet> candidates_;
  bool fell_back_ = false;
  std::map<SnippetKey, double> cache_;
};

struct ThreeStepConfig {
  // Domain labels to rank; empty means every domain in the knowledge base.
  std::vector<std::string> domain_labels;
};

class ThreeStepScorer : public CascadeScorer {
 public:
  ThreeStepScorer(const nn::MiniModel& model, const DialogueLog& dialogue,
                  const KnowledgeBase& kb, ThreeStepConfig cfg = {});

  std::vector<std::pair<std::string, double>> domain_scores() override;
  std::vector<std::pair<EntityKey, double>> entity_scores(const std::string& domain) override;
  std::vector<RankedCandidate> document_scores(const EntityKey& entity) override;

 private:
  const nn::MiniModel& model_;
  const DialogueLog& dialogue_;
  const KnowledgeBase& kb_;
  ThreeStepConfig cfg_;
};

// Ranks retrieved candidates (whole knowledge base when retrieval is empty).
// Throws ValidationError on an empty knowledge base.
SelectionResult retrieve_and_rank(const nn::MiniModel& model, const DialogueLog& dialogue,
                                  const KnowledgeBase& kb,
                                  const retrieval::RetrievalConfig& cfg = {});

// argmax domain, argmax entity inside it, then its documents. The ranked
// list continues with the remaining entities of the chosen domain in entity
// order. Throws SelectionError naming an empty level.
SelectionResult cascade_select(CascadeScorer& scorer, const KnowledgeBase& kb);

SelectionResult three_step_select(const nn::MiniModel& model, const DialogueLog& dialogue,
                                  const KnowledgeBase& kb, const ThreeStepConfig& cfg = {});

// Level-wise: the model with the higher top probability picks (ties: a);
// lower levels are then queried under the winning choice. Scores outside
// [0, 1] raise ValidationError.
SelectionResult ensemble_select(CascadeScorer& a, CascadeScorer& b, const KnowledgeBase& kb);

// ---- Augmentation ----

struct AugmentedDialogue {
  DialogueLog log;
  std::vector<EntityKey> entities;  // one, or two after a topic shift
};

// per_entity dialogues for every entity. Each is built from a random run of
// that entity's question/answer pairs; the last question is the target turn.
// With probability shift_prob a segment about another entity is prepended.
std::vector<AugmentedDialogue> augment_dialogues(const KnowledgeBase& kb, std::size_t per_entity,
                                                 double shift_prob, Rng& rng);

// ---- Evaluation ----

struct SelectionReport {
  std::size_t n = 0;
  double mrr_at_5 = 0.0;
  double recall_at_1 = 0.0;
  double recall_at_5 = 0.0;
  std::size_t domain_errors = 0;
  std::size_t entity_errors = 0;
  std::size_t document_errors = 0;

  nlohmann::json to_json() const;
};

SelectionReport evaluate_selection(const std::vector<SelectionResult>& predictions,
                                   const std::vector<SnippetKey>& golds);

// ---- Training ----

struct SelectionExample {
  DialogueLog dialogue;
  KnowledgeSnippet gold;
};

// Labeled knowledge-seeking dialogues whose gold snippet resolves in kb.
std::vector<SelectionExample> make_examples(const std::vector<DialogueLog>& dialogues,
                                            const KnowledgeBase& kb);

struct SelectionTrainConfig {
  nn::TrainConfig train;
  std::size_t negatives = 5;
  retrieval::RetrievalConfig retrieval;
};

// Binary cross-entropy of the gold snippet against sampled negatives drawn
// from the retrieved candidates, topped up from the whole knowledge base.
nn::TrainResult train_retrieve_rank(nn::MiniModel& model,
                                    const std::vector<SelectionExample>& examples,
                                    const KnowledgeBase& kb, const SelectionTrainConfig& cfg);

// Sum of three binary cross-entropies: gold domain vs the other domains,
// gold entity vs sampled entities of its domain, gold document vs sampled
// documents of its entity.
nn::TrainResult train_three_step(nn::MiniModel& model,
                                 const std::vector<SelectionExample>& examples,
                                 const KnowledgeBase& kb, const SelectionTrainConfig& cfg,
                                 const ThreeStepConfig& three_step = {});

}  // namespace kgdial::selection

#endif  // KGDIAL_SELECTION_HPP_
