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


#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "kgdial/corpus.hpp"
#include "kgdial/error.hpp"
#include "kgdial/textsim.hpp"

using namespace kgdial;
using nlohmann::json;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("kgdial_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p) << s;
}

}  // namespace

TEST_CASE("knowledge base loads the challenge schema") {
  const auto dir = temp_dir("kb");
  write_text(dir / "knowledge.json", R"({
    "hotel": {"1": {"name": "Allenbell", "docs": {
        "0": {"title": "Is there parking?", "body": "Yes, free parking."},
        "1": {"title": "Is there wifi?", "body": "Yes."}}}},
    "taxi": {"*": {"name": null, "docs": {
        "0": {"title": "Do taxis take cards?", "body": "Most do."}}}}
  })");
  const auto kb = load_knowledge_base(dir / "knowledge.json");
  CHECK(kb.total() == 3);
  CHECK(kb.count("hotel") == 2);
  CHECK(kb.count("taxi") == 1);
  CHECK(kb.entity_snippets({"hotel", "1"}).size() == 2);
  CHECK(kb.entity_name({"hotel", "1"}) == std::optional<std::string>("Allenbell"));
  CHECK_FALSE(kb.entity_name({"taxi", "*"}).has_value());
  CHECK(kb.entity_by_name("Allenbell") == std::optional<EntityKey>(EntityKey{"hotel", "1"}));
  const auto* s = kb.find({"hotel", "1", "0"});
  REQUIRE(s != nullptr);
  CHECK(s->question == "Is there parking?");
  CHECK(s->answer == "Yes, free parking.");

  // round trip
  save_knowledge_base(dir / "copy.json", kb);
  const auto again = load_knowledge_base(dir / "copy.json");
  CHECK(knowledge_to_json(again) == knowledge_to_json(kb));
  CHECK(again.snippets().size() == kb.snippets().size());
}

TEST_CASE("knowledge base integrity errors") {
  std::vector<KnowledgeSnippet> dup = {{"hotel", "1", "A", "0", "q", "a"},
                                       {"hotel", "1", "A", "0", "q2", "a2"}};
  CHECK_THROWS_AS(KnowledgeBase{dup}, IntegrityError);
  try {
    KnowledgeBase{dup};
  } catch (const IntegrityError& e) {
    CHECK(std::string(e.what()).find("(hotel, 1, 0)") != std::string::npos);
  }
  CHECK_THROWS_AS(KnowledgeBase({{"", "1", "A", "0", "q", "a"}}), IntegrityError);
  CHECK_THROWS_AS(KnowledgeBase({{"hotel", "1", "A", "0", "  ", "a"}}), IntegrityError);
  CHECK_THROWS_AS(KnowledgeBase({{"hotel", "1", "A", "0", "q", "a"},
                                 {"hotel", "1", "B", "1", "q", "a"}}),
                  IntegrityError);
}

TEST_CASE("malformed json reports the line") {
  const auto dir = temp_dir("bad");
  write_text(dir / "k.json", "{\n  \"hotel\": {\n    \"1\": oops\n  }\n}\n");
  try {
    load_knowledge_base(dir / "k.json");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(load_knowledge_base(dir / "missing.json"), DataError);
}

TEST_CASE("logs and labels align by index") {
  const auto dir = temp_dir("logs");
  write_text(dir / "logs.json", R"([
    [{"speaker": "U", "text": "hi"}],
    [{"speaker": "U", "text": "is there parking at the allenbell?"}],
    [{"speaker": "U", "text": "a"}, {"speaker": "S", "text": "b"}, {"speaker": "U", "text": "c"}]
  ])");
  write_text(dir / "labels.json", R"([
    {"target": false},
    {"target": true, "knowledge": [{"domain": "hotel", "entity_id": 1, "doc_id": 0}],
     "response": "Yes."},
    {"target": false}
  ])");
  write_text(dir / "labels2.json", R"([{"target": false}, {"target": false}])");
  const auto logs = load_logs(dir / "logs.json", dir / "labels.json");
  REQUIRE(logs.size() == 3);
  CHECK(logs[2].turns.size() == 3);
  CHECK(logs[2].turns[1].speaker == Speaker::kSystem);
  REQUIRE(logs[1].label.has_value());
  CHECK(logs[1].label->target);
  CHECK(logs[1].label->knowledge == std::optional<SnippetKey>(SnippetKey{"hotel", "1", "0"}));
  CHECK(logs[1].label->response == std::optional<std::string>("Yes."));
  CHECK_THROWS_AS(load_logs(dir / "logs.json", dir / "labels2.json"), AlignmentError);

  const auto unlabeled = load_logs(dir / "logs.json");
  CHECK_FALSE(unlabeled[0].label.has_value());

  save_logs(dir / "out_logs.json", dir / "out_labels.json", logs);
  const auto again = load_logs(dir / "out_logs.json", dir / "out_labels.json");
  CHECK(again == logs);
}

TEST_CASE("log validation") {
  DialogueLog empty;
  CHECK_THROWS_AS(validate_log(empty), ValidationError);
  DialogueLog ends_with_system;
  ends_with_system.turns = {{Speaker::kUser, "a"}, {Speaker::kSystem, "b"}};
  ends_with_system.label = DialogueLabel{true, std::nullopt, std::nullopt};
  CHECK_THROWS_AS(validate_log(ends_with_system), ValidationError);

  KnowledgeBase kb({{"hotel", "1", "A", "0", "q", "a"}});
  DialogueLog dangling;
  dangling.turns = {{Speaker::kUser, "a"}};
  dangling.label = DialogueLabel{true, SnippetKey{"hotel", "1", "9"}, "x"};
  CHECK_THROWS_AS(validate_log(dangling, &kb), ValidationError);
  dangling.label->knowledge = SnippetKey{"hotel", "1", "0"};
  CHECK_NOTHROW(validate_log(dangling, &kb));
}

TEST_CASE("synthetic corpus contract") {
  SyntheticSpec spec;
  spec.seed = 7;
  const auto a = generate_synthetic_corpus(spec);
  const auto b = generate_synthetic_corpus(spec);
  CHECK(a.dialogues.size() == 64);
  CHECK(a.dialogues == b.dialogues);
  CHECK(knowledge_to_json(a.kb).dump() == knowledge_to_json(b.kb).dump());
  CHECK(logs_to_json(a.dialogues).dump() == logs_to_json(b.dialogues).dump());

  std::size_t targets = 0;
  std::set<std::string> facts;
  for (const auto& d : a.dialogues) {
    REQUIRE(d.label.has_value());
    CHECK_NOTHROW(validate_log(d, &a.kb));
    if (!d.label->target) continue;
    ++targets;
    REQUIRE(d.label->knowledge.has_value());
    const auto* s = a.kb.find(*d.label->knowledge);
    REQUIRE(s != nullptr);
    REQUIRE(d.label->response.has_value());
    // the gold response repeats at least one content word of the answer
    const auto resp = textsim::tokens_of(*d.label->response);
    bool shared = false;
    for (const auto& t : textsim::tokens_of(s->answer)) {
      if (textsim::is_content_token(t) && std::find(resp.begin(), resp.end(), t) != resp.end()) {
        shared = true;
      }
    }
    CHECK(shared);
  }
  CHECK(targets == 32);
  // domain-wide knowledge is present
  CHECK(a.kb.count("taxi") > 0);
  CHECK(a.kb.count("train") > 0);
  CHECK_FALSE(a.kb.entity_name({"taxi", kDomainWideEntity}).has_value());

  spec.seed = 8;
  CHECK_FALSE(generate_synthetic_corpus(spec).dialogues == a.dialogues);
}

TEST_CASE("synthetic spec validation") {
  SyntheticSpec spec;
  spec.n_dialogues = 0;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  spec.n_dialogues = 3;
  spec.n_docs = synthetic_topic_count() + 1;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
}
