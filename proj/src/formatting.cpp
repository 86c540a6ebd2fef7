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


#include "kgdial/formatting.hpp"

#include "kgdial/textsim.hpp"

namespace kgdial {

nn::ModelInput FormattedInput::to_model_input(const nn::Vocab& vocab) const {
  nn::ModelInput in;
  in.ids = vocab.encode(tokens);
  in.mask.kind = nn::MaskKind::kBidirectional;
  in.mask.knowledge = {0, history.begin};
  in.mask.context = history;
  in.mask.response = {history.end, tokens.size()};
  in.context_breaks = breaks;
  return in;
}

void append_history(std::vector<std::string>& out, const std::vector<Turn>& turns,
                    std::vector<std::size_t>* breaks) {
  for (const auto& t : turns) {
    if (breaks) breaks->push_back(out.size());
    for (auto& tok : textsim::tokens_of(t.text)) out.push_back(std::move(tok));
  }
}

std::vector<std::string> entity_tokens(const KnowledgeBase& kb, const EntityKey& entity) {
  if (auto name = kb.entity_name(entity)) return textsim::tokens_of(*name);
  return textsim::tokens_of(entity.domain);
}

std::vector<std::string> vocabulary_texts(const KnowledgeBase& kb,
                                          const std::vector<DialogueLog>& dialogues) {
  std::vector<std::string> texts = {"taxi train hotel restaurant attraction other"};
  for (const auto& s : kb.snippets()) {
    texts.push_back(s.domain);
    if (s.entity_name) texts.push_back(*s.entity_name);
    texts.push_back(s.question);
    texts.push_back(s.answer);
  }
  for (const auto& d : dialogues) {
    for (const auto& t : d.turns) texts.push_back(t.text);
    if (d.label && d.label->response) texts.push_back(*d.label->response);
  }
  return texts;
}

}  // namespace kgdial
