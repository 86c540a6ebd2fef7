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


#include "kgdial/selection.hpp"

#include <algorithm>
#include <set>

#include "kgdial/error.hpp"
#include "kgdial/evalmetrics.hpp"
#include "kgdial/textsim.hpp"

namespace kgdial::selection {

namespace {

void append_text(std::vector<std::string>& out, const std::string& text) {
  for (auto& t : textsim::tokens_of(text)) out.push_back(std::move(t));
}

FormattedInput history_prefix(const DialogueLog& dialogue) {
  FormattedInput f;
  f.tokens.push_back(kBosTok);
  append_history(f.tokens, dialogue.turns, &f.breaks);
  f.history = {1, f.tokens.size()};
  return f;
}

// First maximum in list order.
template <typename T>
std::size_t argmax(const std::vector<std::pair<T, double>>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i].second > v[best].second) best = i;
  }
  return best;
}

void check_probabilities(const std::vector<double>& values, const char* level) {
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ValidationError(std::string("ensemble: ") + level +
                            " score outside [0, 1]; the two models are not comparable");
    }
  }
}

std::vector<KnowledgeSnippet> copy_snippets(const std::vector<const KnowledgeSnippet*>& v) {
  std::vector<KnowledgeSnippet> out;
  out.reserve(v.size());
  for (const auto* s : v) out.push_back(*s);
  return out;
}

}  // namespace

// ---- Input layouts ----

FormattedInput format_ranking_input(const DialogueLog& dialogue, const KnowledgeBase& kb,
                                    const KnowledgeSnippet& snippet) {
  FormattedInput f = history_prefix(dialogue);
  f.tokens.push_back(kSepTok);
  append_text(f.tokens, snippet.domain);
  f.tokens.push_back(kSepTok);
  for (auto& t : entity_tokens(kb, snippet.entity())) f.tokens.push_back(std::move(t));
  f.tokens.push_back(kSepTok);
  append_text(f.tokens, snippet.question);
  append_text(f.tokens, snippet.answer);
  f.tokens.push_back(kEosTok);
  return f;
}

FormattedInput format_domain_input(const DialogueLog& dialogue, const std::string& domain) {
  FormattedInput f = history_prefix(dialogue);
  f.tokens.push_back(kSepTok);
  append_text(f.tokens, domain);
  f.tokens.push_back(kEosTok);
  return f;
}

FormattedInput format_entity_input(const DialogueLog& dialogue, const KnowledgeBase& kb,
                                   const EntityKey& entity) {
  FormattedInput f = history_prefix(dialogue);
  f.tokens.push_back(kSepTok);
  append_text(f.tokens, entity.domain);
  f.tokens.push_back(kSepTok);
  for (auto& t : entity_tokens(kb, entity)) f.tokens.push_back(std::move(t));
  f.tokens.push_back(kEosTok);
  return f;
}

// ---- Scoring ----

void add_score_head(nn::MiniModel& model, const std::string& head) {
  model.add_parameter(head + ".w", model.config().d_model, 1, nn::Init::kNormal);
  model.add_parameter(head + ".b", 1, 1, nn::Init::kZeros);
}

nn::Tensor score_logit(const nn::MiniModel& model, const FormattedInput& input,
                       const std::string& head) {
  const auto out = model.forward(input.to_model_input(model.vocab()));
  return nn::add(nn::matmul(nn::slice_rows(out.hidden, 0, 1), model.parameter(head + ".w")),
                 model.parameter(head + ".b"));
}

double score_candidate(const nn::MiniModel& model, const FormattedInput& input,
                       const std::string& head) {
  model.require_trained(head);
  nn::NoGradGuard guard;
  return nn::sigmoid(score_logit(model, input, head)).item();
}

std::vector<KnowledgeSnippet> sample_negatives(const KnowledgeSnippet& gold,
                                               const std::vector<KnowledgeSnippet>& candidates,
                                               std::size_t k, Rng& rng) {
  std::vector<const KnowledgeSnippet*> pool;
  for (const auto& c : candidates) {
    if (c.key() != gold.key()) pool.push_back(&c);
  }
  std::vector<KnowledgeSnippet> out;
  for (std::size_t i : rng.sample_indices(pool.size(), k)) out.push_back(*pool[i]);
  return out;
}

// ---- Results ----

const KnowledgeSnippet& SelectionResult::chosen() const {
  if (ranked.empty()) throw SelectionError("document", "selection result is empty");
  return ranked.front().snippet;
}

nlohmann::json SelectionResult::to_json(std::size_t top_k) const {
  nlohmann::json knowledge = nlohmann::json::array();
  nlohmann::json scores = nlohmann::json::array();
  for (std::size_t i = 0; i < ranked.size() && i < top_k; ++i) {
    const auto& s = ranked[i].snippet;
    knowledge.push_back({{"domain", s.domain}, {"entity_id", s.entity_id}, {"doc_id", s.doc_id}});
    scores.push_back(ranked[i].score);
  }
  return {{"knowledge", knowledge}, {"scores", scores}};
}

void sort_ranked(std::vector<RankedCandidate>& ranked) {
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedCandidate& a, const RankedCandidate& b) {
                     if (a.score != b.score) return a.score > b.score;
                     return a.snippet.key() < b.snippet.key();
                   });
}

// ---- Retrieve & Rank ----

RetrieveRankScorer::RetrieveRankScorer(const nn::MiniModel& model, const DialogueLog& dialogue,
                                       const KnowledgeBase& kb,
                                       const retrieval::RetrievalConfig& cfg)
    : model_(model), dialogue_(dialogue), kb_(kb) {
  if (kb.empty()) throw ValidationError("selection: knowledge base is empty");
  model.require_trained(kRankHead);
  candidates_ = retrieval::expand_to_snippets(retrieval::retrieve_entities(dialogue, kb, cfg), kb,
                                              dialogue, cfg);
  if (candidates_.empty()) {
    candidates_ = kb.snippets();
    fell_back_ = true;
  }
}

double RetrieveRankScorer::score(const KnowledgeSnippet& s) {
  auto it = cache_.find(s.key());
  if (it != cache_.end()) return it->second;
  const double v = score_candidate(model_, format_ranking_input(dialogue_, kb_, s), kRankHead);
  cache_.emplace(s.key(), v);
  return v;
}

std::vector<const KnowledgeSnippet*> RetrieveRankScorer::pool(
    const std::vector<const KnowledgeSnippet*>& all) const {
  std::vector<const KnowledgeSnippet*> retrieved;
  for (const auto* s : all) {
    for (const auto& c : candidates_) {
      if (c.key() == s->key()) {
        retrieved.push_back(s);
        break;
      }
    }
  }
  return retrieved;
}

std::vector<std::pair<std::string, double>> RetrieveRankScorer::domain_scores() {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& d : kb_.domains()) {
    const auto p = pool(kb_.domain_snippets(d));
    if (p.empty()) continue;  // not retrieved: this model has no opinion
    double best = 0.0;
    for (const auto* s : p) best = std::max(best, score(*s));
    out.emplace_back(d, best);
  }
  return out;
}

std::vector<std::pair<EntityKey, double>> RetrieveRankScorer::entity_scores(
    const std::string& domain) {
  std::vector<std::pair<EntityKey, double>> out;
  for (const auto& e : kb_.entities_in(domain)) {
    const auto p = pool(kb_.entity_snippets(e));
    if (p.empty()) continue;
    double best = 0.0;
    for (const auto* s : p) best = std::max(best, score(*s));
    out.emplace_back(e, best);
  }
  return out;
}

std::vector<RankedCandidate> RetrieveRankScorer::document_scores(const EntityKey& entity) {
  std::vector<RankedCandidate> out;
  for (const auto* s : pool(kb_.entity_snippets(entity))) out.push_back({*s, score(*s)});
  return out;
}

SelectionResult retrieve_and_rank(const nn::MiniModel& model, const DialogueLog& dialogue,
                                  const KnowledgeBase& kb,
                                  const retrieval::RetrievalConfig& cfg) {
  RetrieveRankScorer scorer(model, dialogue, kb, cfg);
  SelectionResult result;
  for (const auto& c : scorer.candidates()) result.ranked.push_back({c, scorer.score(c)});
  sort_ranked(result.ranked);
  return result;
}

// ---- Three-step ----

ThreeStepScorer::ThreeStepScorer(const nn::MiniModel& model, const DialogueLog& dialogue,
                                 const KnowledgeBase& kb, ThreeStepConfig cfg)
    : model_(model), dialogue_(dialogue), kb_(kb), cfg_(std::move(cfg)) {
  model.require_trained(kDomainHead);
  model.require_trained(kEntityHead);
  model.require_trained(kDocumentHead);
  if (cfg_.domain_labels.empty()) cfg_.domain_labels = kb.domains();
}

std::vector<std::pair<std::string, double>> ThreeStepScorer::domain_scores() {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& d : cfg_.domain_labels) {
    out.emplace_back(d, score_candidate(model_, format_domain_input(dialogue_, d), kDomainHead));
  }
  return out;
}

std::vector<std::pair<EntityKey, double>> ThreeStepScorer::entity_scores(
    const std::string& domain) {
  std::vector<std::pair<EntityKey, double>> out;
  for (const auto& e : kb_.entities_in(domain)) {
    out.emplace_back(e,
                     score_candidate(model_, format_entity_input(dialogue_, kb_, e), kEntityHead));
  }
  return out;
}

std::vector<RankedCandidate> ThreeStepScorer::document_scores(const EntityKey& entity) {
  std::vector<RankedCandidate> out;
  for (const auto* s : kb_.entity_snippets(entity)) {
    out.push_back(
        {*s, score_candidate(model_, format_ranking_input(dialogue_, kb_, *s), kDocumentHead)});
  }
  return out;
}

namespace {

void sort_entities(std::vector<std::pair<EntityKey, double>>& v) {
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
}

}  // namespace

SelectionResult cascade_select(CascadeScorer& scorer, const KnowledgeBase& kb) {
  (void)kb;
  const auto domains = scorer.domain_scores();
  if (domains.empty()) throw SelectionError("domain", "no domain candidates to rank");
  const std::string& domain = domains[argmax(domains)].first;
  auto entities = scorer.entity_scores(domain);
  if (entities.empty()) {
    throw SelectionError("entity", "domain '" + domain + "' has no entities");
  }
  const EntityKey best = entities[argmax(entities)].first;
  sort_entities(entities);
  // keep the argmax (first maximum in list order) in front
  std::stable_partition(entities.begin(), entities.end(),
                        [&](const auto& e) { return e.first == best; });
  SelectionResult result;
  for (const auto& [entity, _] : entities) {
    auto docs = scorer.document_scores(entity);
    if (docs.empty() && entity == best) {
      throw SelectionError("document", "entity (" + entity.domain + ", " + entity.entity_id +
                                           ") has no documents");
    }
    sort_ranked(docs);
    for (auto& d : docs) result.ranked.push_back(std::move(d));
  }
  return result;
}

SelectionResult three_step_select(const nn::MiniModel& model, const DialogueLog& dialogue,
                                  const KnowledgeBase& kb, const ThreeStepConfig& cfg) {
  if (kb.empty()) throw SelectionError("domain", "knowledge base is empty");
  ThreeStepScorer scorer(model, dialogue, kb, cfg);
  return cascade_select(scorer, kb);
}

// ---- Ensemble ----

SelectionResult ensemble_select(CascadeScorer& a, CascadeScorer& b, const KnowledgeBase& kb) {
  (void)kb;
  auto pick = [](const auto& sa, const auto& sb, const char* level) {
    std::vector<double> all;
    for (const auto& [_, v] : sa) all.push_back(v);
    for (const auto& [_, v] : sb) all.push_back(v);
    check_probabilities(all, level);
    if (sa.empty() && sb.empty()) {
      throw SelectionError(level, std::string("no ") + level + " candidates to rank");
    }
    if (sb.empty()) return sa[argmax(sa)].first;
    if (sa.empty()) return sb[argmax(sb)].first;
    const auto& wa = sa[argmax(sa)];
    const auto& wb = sb[argmax(sb)];
    return wa.second >= wb.second ? wa.first : wb.first;
  };

  const std::string domain = pick(a.domain_scores(), b.domain_scores(), "domain");
  const auto ea = a.entity_scores(domain);
  const auto eb = b.entity_scores(domain);
  const EntityKey entity = pick(ea, eb, "entity");

  std::map<EntityKey, double> combined_entities;
  for (const auto* list : {&ea, &eb}) {
    for (const auto& [e, v] : *list) {
      auto [it, inserted] = combined_entities.try_emplace(e, v);
      if (!inserted) it->second = std::max(it->second, v);
    }
  }
  std::vector<std::pair<EntityKey, double>> order(combined_entities.begin(),
                                                  combined_entities.end());
  sort_entities(order);
  std::stable_partition(order.begin(), order.end(),
                        [&](const auto& e) { return e.first == entity; });

  SelectionResult result;
  for (const auto& [e, _] : order) {
    const auto da = a.document_scores(e);
    const auto db = b.document_scores(e);
    std::vector<double> all;
    for (const auto& d : da) all.push_back(d.score);
    for (const auto& d : db) all.push_back(d.score);
    check_probabilities(all, "document");
    std::map<SnippetKey, RankedCandidate> merged;
    for (const auto* list : {&da, &db}) {
      for (const auto& d : *list) {
        auto [it, inserted] = merged.try_emplace(d.snippet.key(), d);
        if (!inserted) it->second.score = std::max(it->second.score, d.score);
      }
    }
    std::vector<RankedCandidate> docs;
    for (auto& [_, d] : merged) docs.push_back(std::move(d));
    if (docs.empty()) {
      if (e == entity) throw SelectionError("document", "chosen entity has no documents");
      continue;
    }
    sort_ranked(docs);
    if (e == entity) {
      // Document-level winner: higher top probability, ties to a.
      auto top = [](const std::vector<RankedCandidate>& v) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < v.size(); ++i) {
          if (v[i].score > v[best].score) best = i;
        }
        return best;
      };
      std::optional<SnippetKey> win;
      if (!da.empty() && (db.empty() || da[top(da)].score >= db[top(db)].score)) {
        win = da[top(da)].snippet.key();
      } else if (!db.empty()) {
        win = db[top(db)].snippet.key();
      }
      std::stable_partition(docs.begin(), docs.end(),
                            [&](const RankedCandidate& d) { return d.snippet.key() == *win; });
    }
    for (auto& d : docs) result.ranked.push_back(std::move(d));
  }
  return result;
}

// ---- Augmentation ----

std::vector<AugmentedDialogue> augment_dialogues(const KnowledgeBase& kb, std::size_t per_entity,
                                                 double shift_prob, Rng& rng) {
  if (kb.empty()) throw ValidationError("augment: knowledge base is empty");
  if (!(shift_prob >= 0.0 && shift_prob <= 1.0)) {
    throw ValidationError("augment: shift_prob must lie in [0, 1]");
  }
  const auto& entities = kb.entities();

  // Appends a run of QA pairs about `entity`. When `target` is set the last
  // pair contributes only its question and is returned.
  auto segment = [&](const EntityKey& entity, std::vector<Turn>& turns,
                     bool target) -> const KnowledgeSnippet* {
    const auto docs = kb.entity_snippets(entity);
    const std::size_t len = 1 + rng.uniform(docs.size());
    const auto picks = rng.sample_indices(docs.size(), len);
    const auto name = kb.entity_name(entity).value_or(entity.domain);
    const KnowledgeSnippet* last = nullptr;
    for (std::size_t j = 0; j < picks.size(); ++j) {
      const KnowledgeSnippet* s = docs[picks[j]];
      std::string question = s->question;
      if (j == 0) question = "I have a question about " + name + ". " + question;
      turns.push_back({Speaker::kUser, question});
      if (target && j + 1 == picks.size()) {
        last = s;
      } else {
        turns.push_back({Speaker::kSystem, s->answer});
      }
    }
    return last;
  };

  std::vector<AugmentedDialogue> out;
  out.reserve(entities.size() * per_entity);
  for (std::size_t e = 0; e < entities.size(); ++e) {
    for (std::size_t r = 0; r < per_entity; ++r) {
      AugmentedDialogue ad;
      if (entities.size() > 1 && rng.bernoulli(shift_prob)) {
        std::size_t other = rng.uniform(entities.size() - 1);
        if (other >= e) ++other;
        segment(entities[other], ad.log.turns, false);
        ad.entities.push_back(entities[other]);
      }
      const KnowledgeSnippet* gold = segment(entities[e], ad.log.turns, true);
      ad.entities.push_back(entities[e]);
      ad.log.label = DialogueLabel{true, gold->key(), gold->answer};
      out.push_back(std::move(ad));
    }
  }
  return out;
}

// ---- Evaluation ----

nlohmann::json SelectionReport::to_json() const {
  return {{"n", n},
          {"mrr@5", mrr_at_5},
          {"recall@1", recall_at_1},
          {"recall@5", recall_at_5},
          {"errors@1", {{"domain", domain_errors}, {"entity", entity_errors},
                        {"document", document_errors}}}};
}

SelectionReport evaluate_selection(const std::vector<SelectionResult>& predictions,
                                   const std::vector<SnippetKey>& golds) {
  if (predictions.size() != golds.size()) {
    throw ValidationError("evaluate_selection: prediction and gold counts differ");
  }
  SelectionReport report;
  report.n = golds.size();
  std::vector<eval::Rank> ranks;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const auto& ranked = predictions[i].ranked;
    eval::Rank rank;
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      if (ranked[r].snippet.key() == golds[i]) {
        rank = r + 1;
        break;
      }
    }
    ranks.push_back(rank);
    if (ranked.empty()) {
      ++report.domain_errors;
      continue;
    }
    const auto chosen = ranked.front().snippet.key();
    if (chosen.domain != golds[i].domain) {
      ++report.domain_errors;
    } else if (chosen.entity_id != golds[i].entity_id) {
      ++report.entity_errors;
    } else if (chosen.doc_id != golds[i].doc_id) {
      ++report.document_errors;
    }
  }
  report.mrr_at_5 = eval::mrr_at_k(ranks, 5);
  report.recall_at_1 = eval::recall_at_k(ranks, 1);
  report.recall_at_5 = eval::recall_at_k(ranks, 5);
  return report;
}

// ---- Training ----

std::vector<SelectionExample> make_examples(const std::vector<DialogueLog>& dialogues,
                                            const KnowledgeBase& kb) {
  std::vector<SelectionExample> out;
  for (const auto& d : dialogues) {
    if (!d.label || !d.label->target || !d.label->knowledge) continue;
    const auto* s = kb.find(*d.label->knowledge);
    if (!s) {
      throw ValidationError("selection: gold snippet " + d.label->knowledge->to_string() +
                            " is not in the knowledge base");
    }
    out.push_back({d, *s});
  }
  return out;
}

namespace {

nn::Tensor bce_group(const nn::MiniModel& model, const std::vector<FormattedInput>& inputs,
                     const std::string& head) {
  std::vector<nn::Tensor> logits;
  std::vector<double> targets;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    logits.push_back(score_logit(model, inputs[i], head));
    targets.push_back(i == 0 ? 1.0 : 0.0);
  }
  return nn::scale(nn::bce_with_logits(nn::concat_rows(logits), targets),
                   1.0 / static_cast<double>(inputs.size()));
}

}  // namespace

nn::TrainResult train_retrieve_rank(nn::MiniModel& model,
                                    const std::vector<SelectionExample>& examples,
                                    const KnowledgeBase& kb, const SelectionTrainConfig& cfg) {
  if (examples.empty()) throw ValidationError("selection: no training examples");
  add_score_head(model, kRankHead);

  struct Prepared {
    std::vector<KnowledgeSnippet> retrieved;
    std::vector<const KnowledgeSnippet*> rest;  // outside retrieval, not gold
  };
  std::vector<Prepared> prepared;
  for (const auto& ex : examples) {
    Prepared p;
    p.retrieved = retrieval::expand_to_snippets(
        retrieval::retrieve_entities(ex.dialogue, kb, cfg.retrieval), kb, ex.dialogue,
        cfg.retrieval);
    std::set<SnippetKey> seen = {ex.gold.key()};
    for (const auto& s : p.retrieved) seen.insert(s.key());
    for (const auto& s : kb.snippets()) {
      if (!seen.contains(s.key())) p.rest.push_back(&s);
    }
    prepared.push_back(std::move(p));
  }

  auto result = nn::train(
      model, examples.size(),
      [&](std::size_t i, Rng& rng) {
        const auto& ex = examples[i];
        auto negs = sample_negatives(ex.gold, prepared[i].retrieved, cfg.negatives, rng);
        if (negs.size() < cfg.negatives) {
          const auto& rest = prepared[i].rest;
          for (std::size_t j : rng.sample_indices(rest.size(), cfg.negatives - negs.size())) {
            negs.push_back(*rest[j]);
          }
        }
        std::vector<FormattedInput> inputs = {format_ranking_input(ex.dialogue, kb, ex.gold)};
        for (const auto& n : negs) inputs.push_back(format_ranking_input(ex.dialogue, kb, n));
        return bce_group(model, inputs, kRankHead);
      },
      cfg.train);
  model.mark_trained(kRankHead);
  return result;
}

nn::TrainResult train_three_step(nn::MiniModel& model,
                                 const std::vector<SelectionExample>& examples,
                                 const KnowledgeBase& kb, const SelectionTrainConfig& cfg,
                                 const ThreeStepConfig& three_step) {
  if (examples.empty()) throw ValidationError("selection: no training examples");
  add_score_head(model, kDomainHead);
  add_score_head(model, kEntityHead);
  add_score_head(model, kDocumentHead);
  const auto labels = three_step.domain_labels.empty() ? kb.domains() : three_step.domain_labels;

  auto result = nn::train(
      model, examples.size(),
      [&](std::size_t i, Rng& rng) {
        const auto& ex = examples[i];
        std::vector<FormattedInput> dom = {format_domain_input(ex.dialogue, ex.gold.domain)};
        for (const auto& d : labels) {
          if (d != ex.gold.domain) dom.push_back(format_domain_input(ex.dialogue, d));
        }
        std::vector<FormattedInput> ent = {format_entity_input(ex.dialogue, kb, ex.gold.entity())};
        std::vector<EntityKey> others;
        for (const auto& e : kb.entities_in(ex.gold.domain)) {
          if (e != ex.gold.entity()) others.push_back(e);
        }
        for (std::size_t j : rng.sample_indices(others.size(), cfg.negatives)) {
          ent.push_back(format_entity_input(ex.dialogue, kb, others[j]));
        }
        std::vector<KnowledgeSnippet> siblings = copy_snippets(kb.entity_snippets(ex.gold.entity()));
        std::vector<FormattedInput> doc = {format_ranking_input(ex.dialogue, kb, ex.gold)};
        for (const auto& n : sample_negatives(ex.gold, siblings, cfg.negatives, rng)) {
          doc.push_back(format_ranking_input(ex.dialogue, kb, n));
        }
        return nn::add(nn::add(bce_group(model, dom, kDomainHead), bce_group(model, ent, kEntityHead)),
                       bce_group(model, doc, kDocumentHead));
      },
      cfg.train);
  model.mark_trained(kDomainHead);
  model.mark_trained(kEntityHead);
  model.mark_trained(kDocumentHead);
  return result;
}

}  // namespace kgdial::selection
