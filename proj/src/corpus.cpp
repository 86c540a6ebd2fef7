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

#include "kgdial/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "kgdial/error.hpp"
#include "kgdial/rng.hpp"

namespace kgdial {

using nlohmann::json;

namespace {

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r';
  });
}

// Identifiers in the challenge files are strings in knowledge.json but plain
// integers in labels.json.
std::string id_string(const json& j, const char* field) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<long long>());
  throw ParseError(std::string("field '") + field +
                   "' must be a string or integer");
}

const json& require(const json& obj, const char* field, const char* where) {
  if (!obj.is_object() || !obj.contains(field)) {
    throw ParseError(std::string(where) + ": missing field '" + field + "'");
  }
  return obj.at(field);
}

}  // namespace

std::string SnippetKey::to_string() const {
  return "(" + domain + ", " + entity_id + ", " + doc_id + ")";
}

// ---- KnowledgeBase ----

KnowledgeBase::KnowledgeBase(std::vector<KnowledgeSnippet> snippets)
    : snippets_(std::move(snippets)) {
  std::sort(snippets_.begin(), snippets_.end(),
            [](const KnowledgeSnippet& a, const KnowledgeSnippet& b) {
              return a.key() < b.key();
            });
  for (std::size_t i = 0; i < snippets_.size(); ++i) {
    const auto& s = snippets_[i];
    if (s.domain.empty()) {
      throw IntegrityError("snippet " + s.key().to_string() +
                           " has an empty domain");
    }
    if (blank(s.question) || blank(s.answer)) {
      throw IntegrityError("snippet " + s.key().to_string() +
                           " has an empty question or answer");
    }
    if (i > 0 && snippets_[i - 1].key() == s.key()) {
      throw IntegrityError("duplicate knowledge snippet " +
                           s.key().to_string());
    }
    auto [it, inserted] = entity_index_.try_emplace(s.entity());
    it->second.push_back(i);
    if (inserted) {
      entities_.push_back(s.entity());
      // Shared display names are allowed; the first entity in key order wins.
      if (s.entity_name) name_index_.try_emplace(*s.entity_name, s.entity());
    } else {
      const auto& first = snippets_[it->second.front()];
      if (first.entity_name != s.entity_name) {
        throw IntegrityError("entity (" + s.domain + ", " + s.entity_id +
                             ") has inconsistent names");
      }
    }
  }
}

std::size_t KnowledgeBase::count(const std::string& domain) const {
  return static_cast<std::size_t>(
      std::count_if(snippets_.begin(), snippets_.end(),
                    [&](const auto& s) { return s.domain == domain; }));
}

std::vector<std::string> KnowledgeBase::domains() const {
  std::vector<std::string> out;
  for (const auto& e : entities_) {
    if (out.empty() || out.back() != e.domain) out.push_back(e.domain);
  }
  return out;
}

std::vector<EntityKey> KnowledgeBase::entities_in(
    const std::string& domain) const {
  std::vector<EntityKey> out;
  for (const auto& e : entities_) {
    if (e.domain == domain) out.push_back(e);
  }
  return out;
}

const KnowledgeSnippet* KnowledgeBase::find(const SnippetKey& key) const {
  auto it = std::lower_bound(
      snippets_.begin(), snippets_.end(), key,
      [](const KnowledgeSnippet& s, const SnippetKey& k) { return s.key() < k; });
  if (it == snippets_.end() || it->key() != key) return nullptr;
  return &*it;
}

std::vector<const KnowledgeSnippet*> KnowledgeBase::entity_snippets(
    const EntityKey& entity) const {
  std::vector<const KnowledgeSnippet*> out;
  auto it = entity_index_.find(entity);
  if (it == entity_index_.end()) return out;
  for (std::size_t i : it->second) out.push_back(&snippets_[i]);
  return out;
}

std::vector<const KnowledgeSnippet*> KnowledgeBase::domain_snippets(
    const std::string& domain) const {
  std::vector<const KnowledgeSnippet*> out;
  for (const auto& s : snippets_) {
    if (s.domain == domain) out.push_back(&s);
  }
  return out;
}

std::optional<std::string> KnowledgeBase::entity_name(
    const EntityKey& entity) const {
  auto it = entity_index_.find(entity);
  if (it == entity_index_.end()) return std::nullopt;
  return snippets_[it->second.front()].entity_name;
}

std::optional<EntityKey> KnowledgeBase::entity_by_name(
    const std::string& name) const {
  auto it = name_index_.find(name);
  if (it == name_index_.end()) return std::nullopt;
  return it->second;
}

void validate_log(const DialogueLog& log, const KnowledgeBase* kb) {
  if (log.turns.empty()) throw ValidationError("dialogue has no turns");
  if (!log.label) return;
  const auto& label = *log.label;
  if (!label.target) return;
  if (log.turns.back().speaker != Speaker::kUser) {
    throw ValidationError(
        "knowledge-seeking dialogue must end with a user turn");
  }
  if (kb && label.knowledge && !kb->contains(*label.knowledge)) {
    throw ValidationError("labeled knowledge " + label.knowledge->to_string() +
                          " does not resolve in the knowledge base");
  }
}

// ---- JSON schema ----

KnowledgeBase knowledge_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("knowledge file must be a JSON object");
  std::vector<KnowledgeSnippet> snippets;
  for (const auto& [domain, entities] : j.items()) {
    if (!entities.is_object()) {
      throw ParseError("domain '" + domain + "' must map to an object");
    }
    for (const auto& [entity_id, entity] : entities.items()) {
      const std::string where = "entity (" + domain + ", " + entity_id + ")";
      std::optional<std::string> name;
      if (entity.contains("name") && !entity.at("name").is_null()) {
        if (!entity.at("name").is_string()) {
          throw ParseError(where + ": 'name' must be a string or null");
        }
        name = entity.at("name").get<std::string>();
      }
      const json& docs = require(entity, "docs", where.c_str());
      if (!docs.is_object()) throw ParseError(where + ": 'docs' must be an object");
      for (const auto& [doc_id, doc] : docs.items()) {
        const std::string dwhere = where + " doc " + doc_id;
        const json& title = require(doc, "title", dwhere.c_str());
        const json& body = require(doc, "body", dwhere.c_str());
        if (!title.is_string() || !body.is_string()) {
          throw ParseError(dwhere + ": title and body must be strings");
        }
        snippets.push_back({domain, entity_id, name, doc_id,
                            title.get<std::string>(), body.get<std::string>()});
      }
    }
  }
  return KnowledgeBase(std::move(snippets));
}

json knowledge_to_json(const KnowledgeBase& kb) {
  json out = json::object();
  for (const auto& s : kb.snippets()) {
    json& entity = out[s.domain][s.entity_id];
    if (!entity.contains("name")) {
      entity["name"] = s.entity_name ? json(*s.entity_name) : json(nullptr);
      entity["docs"] = json::object();
    }
    entity["docs"][s.doc_id] = {{"title", s.question}, {"body", s.answer}};
  }
  return out;
}

std::vector<DialogueLog> logs_from_json(const json& logs, const json* labels) {
  if (!logs.is_array()) throw ParseError("logs file must be a JSON array");
  if (labels && !labels->is_array()) {
    throw ParseError("labels file must be a JSON array");
  }
  if (labels && labels->size() != logs.size()) {
    throw AlignmentError("logs and labels differ in length: " +
                         std::to_string(logs.size()) + " dialogues vs " +
                         std::to_string(labels->size()) + " labels");
  }
  std::vector<DialogueLog> out;
  out.reserve(logs.size());
  for (std::size_t i = 0; i < logs.size(); ++i) {
    const json& dialogue = logs[i];
    const std::string where = "dialogue " + std::to_string(i);
    if (!dialogue.is_array()) throw ParseError(where + " must be an array");
    DialogueLog log;
    for (const auto& turn : dialogue) {
      const json& speaker = require(turn, "speaker", where.c_str());
      const json& text = require(turn, "text", where.c_str());
      if (!speaker.is_string() || !text.is_string()) {
        throw ParseError(where + ": speaker and text must be strings");
      }
      const auto sp = speaker.get<std::string>();
      if (sp != "U" && sp != "S") {
        throw ParseError(where + ": unknown speaker '" + sp + "'");
      }
      log.turns.push_back({sp == "U" ? Speaker::kUser : Speaker::kSystem,
                           text.get<std::string>()});
    }
    if (labels) {
      const json& lj = (*labels)[i];
      const std::string lwhere = "label " + std::to_string(i);
      DialogueLabel label;
      const json& target = require(lj, "target", lwhere.c_str());
      if (!target.is_boolean()) throw ParseError(lwhere + ": target must be bool");
      label.target = target.get<bool>();
      if (lj.contains("knowledge") && !lj.at("knowledge").empty()) {
        const json& k = lj.at("knowledge").is_array() ? lj.at("knowledge")[0]
                                                      : lj.at("knowledge");
        label.knowledge = SnippetKey{
            id_string(require(k, "domain", lwhere.c_str()), "domain"),
            id_string(require(k, "entity_id", lwhere.c_str()), "entity_id"),
            id_string(require(k, "doc_id", lwhere.c_str()), "doc_id")};
      }
      if (lj.contains("response")) {
        if (!lj.at("response").is_string()) {
          throw ParseError(lwhere + ": response must be a string");
        }
        label.response = lj.at("response").get<std::string>();
      }
      log.label = std::move(label);
    }
    out.push_back(std::move(log));
  }
  return out;
}

json logs_to_json(const std::vector<DialogueLog>& logs) {
  json out = json::array();
  for (const auto& log : logs) {
    json dialogue = json::array();
    for (const auto& t : log.turns) {
      dialogue.push_back(
          {{"speaker", t.speaker == Speaker::kUser ? "U" : "S"}, {"text", t.text}});
    }
    out.push_back(std::move(dialogue));
  }
  return out;
}

json labels_to_json(const std::vector<DialogueLog>& logs) {
  json out = json::array();
  for (const auto& log : logs) {
    json label = json::object();
    const bool target = log.label && log.label->target;
    label["target"] = target;
    if (target && log.label->knowledge) {
      const auto& k = *log.label->knowledge;
      label["knowledge"] = json::array(
          {{{"domain", k.domain}, {"entity_id", k.entity_id}, {"doc_id", k.doc_id}}});
    }
    if (target && log.label->response) label["response"] = *log.label->response;
    out.push_back(std::move(label));
  }
  return out;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // Translate the byte offset into a line number and show that line.
    const std::size_t byte = std::min<std::size_t>(e.byte, text.size());
    std::size_t line = 1, line_start = 0;
    for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        line_start = i + 1;
      }
    }
    std::size_t line_end = text.find('\n', line_start);
    if (line_end == std::string::npos) line_end = text.size();
    throw ParseError(path.string() + ":" + std::to_string(line) +
                     ": malformed JSON near: " +
                     text.substr(line_start, std::min<std::size_t>(
                                                 line_end - line_start, 120)) +
                     " (" + e.what() + ")");
  }
}

void write_json_file(const std::filesystem::path& path, const json& j,
                     int indent) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(indent) << "\n";
}

KnowledgeBase load_knowledge_base(const std::filesystem::path& path) {
  return knowledge_from_json(read_json_file(path));
}

std::vector<DialogueLog> load_logs(
    const std::filesystem::path& logs_path,
    const std::optional<std::filesystem::path>& labels_path) {
  const json logs = read_json_file(logs_path);
  if (!labels_path) return logs_from_json(logs, nullptr);
  const json labels = read_json_file(*labels_path);
  return logs_from_json(logs, &labels);
}

void save_knowledge_base(const std::filesystem::path& path,
                         const KnowledgeBase& kb) {
  write_json_file(path, knowledge_to_json(kb));
}

void save_logs(const std::filesystem::path& logs_path,
               const std::filesystem::path& labels_path,
               const std::vector<DialogueLog>& logs) {
  write_json_file(logs_path, logs_to_json(logs));
  write_json_file(labels_path, labels_to_json(logs));
}

// ---- Synthetic corpus ----

namespace {

struct Topic {
  const char* question;   // knowledge-base question
  const char* answer;     // knowledge-base answer; {fact} is substituted
  const char* ask;        // user question in dialogues; {ref} names the entity
};

const std::vector<Topic>& hotel_topics() {
  static const std::vector<Topic> t = {
      {"Is there parking available?", "Parking is available on site for {fact} per day.",
       "does {ref} have parking on site ?"},
      {"Is there wifi?", "Free wifi is available with the password {fact}.",
       "is there wifi at {ref} ?"},
      {"Are pets allowed?", "Pets are allowed for a small fee of {fact}.",
       "can i bring my dog to {ref} ?"},
      {"What time is check-in?", "Check-in starts at {fact} in the lobby.",
       "what time can i check in at {ref} ?"},
      {"Is breakfast included?", "Breakfast is served in the {fact} room every morning.",
       "is breakfast included at {ref} ?"},
      {"Is there a gym?", "The gym is open on the {fact} floor.",
       "does {ref} have a gym i could use ?"},
      {"Is smoking allowed?", "Smoking is only allowed in the {fact} garden.",
       "am i allowed to smoke at {ref} ?"},
      {"Is there a laundry service?", "Laundry service costs {fact} per bag.",
       "do they offer laundry service at {ref} ?"},
  };
  return t;
}

const std::vector<Topic>& restaurant_topics() {
  static const std::vector<Topic> t = {
      {"Do they take reservations?", "Reservations need a deposit of {fact} per table.",
       "do i need a deposit to reserve at {ref} ?"},
      {"Is there outdoor seating?", "Outdoor seating is available on the {fact} terrace.",
       "does {ref} have outdoor seating ?"},
      {"Are there vegan options?", "Vegan dishes are marked with the {fact} symbol.",
       "are there vegan options at {ref} ?"},
      {"Is there a dress code?", "The dress code is {fact} casual.",
       "is there a dress code at {ref} ?"},
      {"Is there parking?", "Guests can park at the {fact} garage nearby.",
       "where can i park near {ref} ?"},
      {"Do they have wifi?", "Wifi is free with the code {fact}.",
       "do they have wifi at {ref} ?"},
      {"Is there a kids menu?", "The kids menu costs {fact} per child.",
       "is there a menu for children at {ref} ?"},
      {"Do they offer takeaway?", "Takeaway orders are collected at the {fact} counter.",
       "can i order takeaway from {ref} ?"},
  };
  return t;
}

const std::vector<Topic>& taxi_topics() {
  static const std::vector<Topic> t = {
      {"Can I pay by card?", "Card payments are accepted through the {fact} terminal.",
       "can i pay by card in the taxi ?"},
      {"Is there room for luggage?", "Each taxi fits luggage up to {fact} bags.",
       "is there room for my luggage in the taxi ?"},
      {"Are pets allowed in the taxi?", "Pets ride in the taxi for {fact} extra.",
       "can my cat come along in the taxi ?"},
      {"How will I get a booking confirmation?",
       "Booking confirmations will be sent via {fact} messages shortly.",
       "can i get a written confirmation for the taxi booking ?"},
      {"Are child seats available?", "Child seats can be requested with code {fact}.",
       "do you have child seats for the taxi ?"},
      {"Is there wifi in the taxi?", "Taxi wifi uses the network {fact}.",
       "is there wifi inside the taxi ?"},
      {"Can I cancel a taxi?", "Cancellations are free until {fact} minutes before pickup.",
       "what if i need to cancel the taxi ?"},
      {"What cars do you use?", "Our taxi fleet uses {fact} cars.",
       "what kind of car is the taxi ?"},
  };
  return t;
}

const std::vector<Topic>& train_topics() {
  static const std::vector<Topic> t = {
      {"What are the station hours?", "The station is open from {fact} every day.",
       "what hours is the station where the train departs open ?"},
      {"Can I bring a bike?", "Bikes travel in the {fact} carriage.",
       "can i take my bike on the train ?"},
      {"Is there food on board?", "Snacks are sold in the {fact} coach.",
       "is there food on the train ?"},
      {"Is there wifi on the train?", "Train wifi uses the network {fact}.",
       "is there wifi on the train ?"},
      {"Is there a luggage limit?", "Each passenger may bring {fact} suitcases.",
       "how much luggage can i bring on the train ?"},
      {"Are pets allowed on the train?", "Pets travel for {fact} per journey.",
       "can i bring my dog on the train ?"},
      {"Can I get a refund?", "Refunds are issued within {fact} days.",
       "can i get a refund for my train ticket ?"},
      {"Is there parking at the station?", "Station parking costs {fact} per day.",
       "is there parking at the train station ?"},
  };
  return t;
}

const std::vector<Topic>& topics_for(const std::string& domain) {
  if (domain == "hotel") return hotel_topics();
  if (domain == "restaurant") return restaurant_topics();
  if (domain == "taxi") return taxi_topics();
  return train_topics();
}

std::string replace_all(std::string s, const std::string& from,
                        const std::string& to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 32);
  return s;
}

std::string lower_text(std::string s) {
  for (auto& c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
  }
  return s;
}

// Lowercase answer with a space before the final period, matching the
// tokenized style of the dialogue text.
std::string spoken(const std::string& answer) {
  std::string s = lower_text(answer);
  if (!s.empty() && s.back() == '.') {
    s.pop_back();
    s += " .";
  }
  return s;
}

std::string fact_token(Rng& rng, std::set<std::string>& used) {
  static constexpr std::string_view kLetters = "bcdfghjklmnpqrstvwxz";
  for (;;) {
    std::string t;
    t += kLetters[rng.uniform(kLetters.size())];
    t += kLetters[rng.uniform(kLetters.size())];
    t += static_cast<char>('0' + rng.uniform(10));
    t += static_cast<char>('0' + rng.uniform(10));
    t += kLetters[rng.uniform(kLetters.size())];
    if (used.insert(t).second) return t;
  }
}

const char* const kAreas[] = {"centre", "north", "south", "east", "west"};
const char* const kPlaces[] = {"the museum", "the college", "the cinema",
                               "the park", "the market", "the gallery"};
const char* const kDays[] = {"monday", "tuesday", "wednesday", "thursday",
                             "friday", "saturday", "sunday"};
const char* const kCounts[] = {"two", "three", "four", "five", "six"};
const char* const kGreetings[] = {"anything else i can do for you ?",
                                  "can i help you with anything else ?",
                                  "is there anything else i can help you with ?"};
const char* const kLeads[] = {"", "sure , ", "yes , "};

template <typename T, std::size_t N>
const T& pick(Rng& rng, const T (&items)[N]) {
  return items[rng.uniform(N)];
}

}  // namespace

const std::vector<std::string>& default_seed_words() {
  static const std::vector<std::string> words = {
      "allenbell", "avalon",    "gonville",  "carolina",  "bridgeway",
      "lensfield", "acornwood", "ashley",    "hamilton",  "kirkwood",
      "warkworth", "finches",   "lovell",    "alexander", "arbury",
      "cityroomz", "worth",     "limehouse", "autumn",    "rosewood",
      "golden",    "curry",     "saigon",    "meghna",    "bedouin",
      "charlie",   "chiquito",  "darrys",    "eraina",    "frankie",
      "galleria",  "halal",     "jinling",   "kohinoor",  "loch",
      "maharajah", "nandos",    "oriental",  "pizzeria",  "rajmahal",
      "sesame",    "tandoori",  "ugly",      "varsity",   "wagamama",
      "yippee",    "zizzi",     "anatolia",  "bangkok",   "clowns"};
  return words;
}

std::size_t synthetic_topic_count() { return hotel_topics().size(); }

void SyntheticSpec::validate() const {
  if (n_entities == 0 || n_docs == 0 || n_dialogues == 0) {
    throw ValidationError("synthetic counts must all be at least 1");
  }
  if (n_docs > synthetic_topic_count()) {
    throw ValidationError("n_docs may not exceed " +
                          std::to_string(synthetic_topic_count()));
  }
}

SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  std::vector<std::string> stems =
      spec.seed_words.empty() ? default_seed_words() : spec.seed_words;
  for (auto& s : stems) s = lower_text(s);
  rng.shuffle(stems);
  std::size_t next_stem = 0;
  std::set<std::string> used_stems;
  auto take_stem = [&]() {
    for (;;) {
      std::string stem;
      if (next_stem < stems.size()) {
        stem = stems[next_stem++];
      } else {
        // Exhausted: splice two stems into a new one.
        stem = stems[rng.uniform(stems.size())] +
               stems[rng.uniform(stems.size())].substr(0, 3);
      }
      if (used_stems.insert(stem).second) return stem;
    }
  };

  std::set<std::string> used_facts;
  std::vector<KnowledgeSnippet> snippets;

  for (const std::string domain : {"hotel", "restaurant"}) {
    const auto& topics = topics_for(domain);
    for (std::size_t e = 0; e < spec.n_entities; ++e) {
      std::string name;
      const double style = rng.uniform_real();
      if (domain == std::string("hotel")) {
        name = capitalize(take_stem());
        if (style < 0.5) name += " Hotel";
      } else if (style < 0.3) {
        name = capitalize(take_stem()) + " & " + capitalize(take_stem());
      } else if (style < 0.6) {
        name = capitalize(take_stem()) + " Restaurant";
      } else {
        name = capitalize(take_stem());
      }
      auto topic_ids = rng.sample_indices(topics.size(), spec.n_docs);
      std::sort(topic_ids.begin(), topic_ids.end());
      for (std::size_t d = 0; d < topic_ids.size(); ++d) {
        const auto& topic = topics[topic_ids[d]];
        snippets.push_back({domain, std::to_string(e), name, std::to_string(d),
                            topic.question,
                            replace_all(topic.answer, "{fact}",
                                        fact_token(rng, used_facts))});
      }
    }
  }
  for (const std::string domain : {"taxi", "train"}) {
    const auto& topics = topics_for(domain);
    auto topic_ids = rng.sample_indices(topics.size(), spec.n_docs);
    std::sort(topic_ids.begin(), topic_ids.end());
    for (std::size_t d = 0; d < topic_ids.size(); ++d) {
      const auto& topic = topics[topic_ids[d]];
      snippets.push_back({domain, kDomainWideEntity, std::nullopt,
                          std::to_string(d), topic.question,
                          replace_all(topic.answer, "{fact}",
                                      fact_token(rng, used_facts))});
    }
  }

  SyntheticCorpus corpus{KnowledgeBase(std::move(snippets)), {}};
  const KnowledgeBase& kb = corpus.kb;

  // The topic each snippet was built from, recovered by question text.
  auto topic_of = [&](const KnowledgeSnippet& s) -> const Topic& {
    for (const auto& t : topics_for(s.domain)) {
      if (s.question == t.question) return t;
    }
    return topics_for(s.domain).front();
  };

  // Exactly half of the dialogues are knowledge-seeking, in shuffled order.
  std::vector<char> targets(spec.n_dialogues, 0);
  for (std::size_t i = 0; i < spec.n_dialogues / 2; ++i) targets[i] = 1;
  rng.shuffle(targets);

  // Gold snippets are dealt from a reshuffled deck so that each doc is used
  // once before any doc repeats.
  std::vector<std::size_t> deck;
  std::size_t deck_pos = 0;
  auto deal = [&]() {
    if (deck_pos == deck.size()) {
      deck.resize(kb.total());
      for (std::size_t i = 0; i < deck.size(); ++i) deck[i] = i;
      rng.shuffle(deck);
      deck_pos = 0;
    }
    return deck[deck_pos++];
  };

  for (std::size_t i = 0; i < spec.n_dialogues; ++i) {
    const bool target = targets[i] != 0;
    const KnowledgeSnippet& snippet =
        target ? kb.snippets()[deal()] : kb.snippets()[rng.uniform(kb.total())];
    DialogueLog log;
    auto U = [&](std::string text) {
      log.turns.push_back({Speaker::kUser, std::move(text)});
    };
    auto S = [&](std::string text) {
      log.turns.push_back({Speaker::kSystem, std::move(text)});
    };

    if (snippet.domain == "hotel" || snippet.domain == "restaurant") {
      const std::string area = pick(rng, kAreas);
      const std::string& name = *snippet.entity_name;
      U("i am looking for a " + snippet.domain + " in the " + area + " of town .");
      S(name + " is a nice " + snippet.domain + " in the " + area +
        " . shall i book it ?");
      if (rng.bernoulli(0.5)) {
        U("maybe , i need to think about it .");
        S("sure , take your time .");
      }
      if (target) {
        const std::string ref = rng.bernoulli(0.5) ? lower_text(name) : "it";
        U(replace_all(topic_of(snippet).ask, "{ref}", ref));
      } else {
        switch (rng.uniform(3)) {
          case 0:
            U("please book it for " + std::string(pick(rng, kCounts)) +
              " people on " + pick(rng, kDays) + " .");
            break;
          case 1:
            U("what is the postcode of " + lower_text(name) + " ?");
            break;
          default:
            U("great , i will take it for " + std::string(pick(rng, kDays)) + " .");
            break;
        }
      }
    } else if (snippet.domain == "taxi") {
      U("i need a taxi from " + std::string(pick(rng, kPlaces)) + " to " +
        pick(rng, kPlaces) + " .");
      S("i have booked a taxi for you . it will arrive at " +
        std::string(pick(rng, kPlaces)) + " soon .");
      if (target) {
        U(topic_of(snippet).ask);
      } else {
        U("i want to leave after " + std::string(pick(rng, kCounts)) +
          " o'clock please .");
      }
    } else {
      U("i need a train to " + std::string(pick(rng, kPlaces)) + " on " +
        pick(rng, kDays) + " .");
      S("there is a train leaving in the morning . shall i book it ?");
      if (target) {
        U(topic_of(snippet).ask);
      } else {
        U("yes , book " + std::string(pick(rng, kCounts)) + " tickets please .");
      }
    }

    DialogueLabel label;
    label.target = target;
    if (target) {
      label.knowledge = snippet.key();
      label.response = std::string(pick(rng, kLeads)) + spoken(snippet.answer) +
                       " " + pick(rng, kGreetings);
    }
    log.label = std::move(label);
    corpus.dialogues.push_back(std::move(log));
  }
  return corpus;
}

}  // namespace kgdial
