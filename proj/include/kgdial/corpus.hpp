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

// Dialogue logs, the hierarchical knowledge base, the on-disk challenge
// schema (knowledge.json / logs.json / labels.json), and a seeded synthetic
// corpus generator.

#ifndef KGDIAL_CORPUS_HPP_
#define KGDIAL_CORPUS_HPP_

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace kgdial {

// Entity id used for domain-wide knowledge (taxi, train).
inline constexpr const char* kDomainWideEntity = "*";

struct EntityKey {
  std::string domain;
  std::string entity_id;

  auto operator<=>(const EntityKey&) const = default;
  bool operator==(const EntityKey&) const = default;
};

struct SnippetKey {
  std::string domain;
  std::string entity_id;
  std::string doc_id;

  EntityKey entity() const { return {domain, entity_id}; }
  std::string to_string() const;

  auto operator<=>(const SnippetKey&) const = default;
  bool operator==(const SnippetKey&) const = default;
};

struct KnowledgeSnippet {
  std::string domain;
  std::string entity_id;
  std::optional<std::string> entity_name;
  std::string doc_id;
  std::string question;
  std::string answer;

  SnippetKey key() const { return {domain, entity_id, doc_id}; }
  EntityKey entity() const { return {domain, entity_id}; }
  bool domain_wide() const { return !entity_name.has_value(); }
};

// Immutable collection of snippets, sorted by (domain, entity_id, doc_id),
// with entity and name indices.
class KnowledgeBase {
 public:
  KnowledgeBase() = default;

  // Validates and indexes. Throws IntegrityError on duplicate keys, empty
  // domain, blank question/answer, or one entity carrying two names.
  explicit KnowledgeBase(std::vector<KnowledgeSnippet> snippets);

  const std::vector<KnowledgeSnippet>& snippets() const { return snippets_; }
  std::size_t total() const { return snippets_.size(); }
  bool empty() const { return snippets_.empty(); }
  std::size_t count(const std::string& domain) const;

  std::vector<std::string> domains() const;
  const std::vector<EntityKey>& entities() const { return entities_; }
  std::vector<EntityKey> entities_in(const std::string& domain) const;

  const KnowledgeSnippet* find(const SnippetKey& key) const;
  bool contains(const SnippetKey& key) const { return find(key) != nullptr; }

  // Snippets of one entity in key order; empty if unknown.
  std::vector<const KnowledgeSnippet*> entity_snippets(
      const EntityKey& entity) const;
  std::vector<const KnowledgeSnippet*> domain_snippets(
      const std::string& domain) const;

  // Display name of an entity; nullopt for domain-wide or unknown entities.
  std::optional<std::string> entity_name(const EntityKey& entity) const;
  // Reverse name index (exact, case-sensitive).
  std::optional<EntityKey> entity_by_name(const std::string& name) const;

 private:
  std::vector<KnowledgeSnippet> snippets_;
  std::vector<EntityKey> entities_;
  std::map<EntityKey, std::vector<std::size_t>> entity_index_;
  std::map<std::string, EntityKey> name_index_;
};

enum class Speaker { kUser, kSystem };

struct Turn {
  Speaker speaker = Speaker::kUser;
  std::string text;

  bool operator==(const Turn&) const = default;
};

struct DialogueLabel {
  bool target = false;
  std::optional<SnippetKey> knowledge;
  std::optional<std::string> response;

  bool operator==(const DialogueLabel&) const = default;
};

struct DialogueLog {
  std::vector<Turn> turns;
  std::optional<DialogueLabel> label;

  bool operator==(const DialogueLog&) const = default;
};

// Throws ValidationError when the log breaks its invariants: no turns, a
// positive label whose last turn is not a user turn, or (with kb) a labeled
// knowledge triple that does not resolve.
void validate_log(const DialogueLog& log, const KnowledgeBase* kb = nullptr);

// ---- On-disk schema ----

KnowledgeBase knowledge_from_json(const nlohmann::json& j);
nlohmann::json knowledge_to_json(const KnowledgeBase& kb);

std::vector<DialogueLog> logs_from_json(const nlohmann::json& logs,
                                        const nlohmann::json* labels);
nlohmann::json logs_to_json(const std::vector<DialogueLog>& logs);
nlohmann::json labels_to_json(const std::vector<DialogueLog>& logs);

// Parses a JSON file; malformed input raises ParseError with line context.
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j,
                     int indent = 2);

KnowledgeBase load_knowledge_base(const std::filesystem::path& path);
std::vector<DialogueLog> load_logs(
    const std::filesystem::path& logs_path,
    const std::optional<std::filesystem::path>& labels_path = std::nullopt);

void save_knowledge_base(const std::filesystem::path& path,
                         const KnowledgeBase& kb);
void save_logs(const std::filesystem::path& logs_path,
               const std::filesystem::path& labels_path,
               const std::vector<DialogueLog>& logs);

// ---- Synthetic corpus ----

struct SyntheticSpec {
  std::size_t n_entities = 4;  // per entity-bearing domain
  std::size_t n_docs = 4;      // per entity
  std::size_t n_dialogues = 64;
  std::vector<std::string> seed_words;  // name stems; defaults when empty
  std::uint64_t seed = 7;

  void validate() const;
};

struct SyntheticCorpus {
  KnowledgeBase kb;
  std::vector<DialogueLog> dialogues;
};

// Deterministic in spec. Roughly half of the dialogues are knowledge-seeking;
// each carries a resolvable gold snippet and a gold response that repeats
// the snippet's fact token.
SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec);

// Stems used when SyntheticSpec::seed_words is empty.
const std::vector<std::string>& default_seed_words();

// Maximum n_docs the synthetic generator supports for a domain.
std::size_t synthetic_topic_count();

}  // namespace kgdial

#endif  // KGDIAL_CORPUS_HPP_
