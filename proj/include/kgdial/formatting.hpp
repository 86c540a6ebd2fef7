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


// Token-level input layouts shared by the classification-style subtasks.
// Special tokens are written with their surface strings ("<bos>", ...).

#ifndef KGDIAL_FORMATTING_HPP_
#define KGDIAL_FORMATTING_HPP_

#include <string>
#include <vector>

#include "kgdial/corpus.hpp"
#include "kgdial/neural.hpp"

namespace kgdial {

inline const std::string kBosTok = "<bos>";
inline const std::string kEosTok = "<eos>";
inline const std::string kSepTok = "<sep>";
inline const std::string kSp1Tok = "<sp1>";
inline const std::string kSp2Tok = "<sp2>";

struct FormattedInput {
  std::vector<std::string> tokens;
  // Dialogue-history span; the only part that may be truncated.
  nn::Span history;
  // Start positions of the utterances inside `history`.
  std::vector<std::size_t> breaks;

  // Bidirectional encoding. The prefix before `history` and the suffix after
  // it are carried as the knowledge and response spans so the history stays
  // the only truncatable segment.
  nn::ModelInput to_model_input(const nn::Vocab& vocab) const;
};

// Appends the tokens of each utterance in order, recording utterance starts.
void append_history(std::vector<std::string>& out, const std::vector<Turn>& turns,
                    std::vector<std::size_t>* breaks);

// Tokens naming an entity: its display name, or its domain word when the
// entity is domain-wide.
std::vector<std::string> entity_tokens(const KnowledgeBase& kb, const EntityKey& entity);

// Every text a subtask vocabulary should cover: utterances, snippet fields,
// entity names and domain labels.
std::vector<std::string> vocabulary_texts(const KnowledgeBase& kb,
                                          const std::vector<DialogueLog>& dialogues);

}  // namespace kgdial

#endif  // KGDIAL_FORMATTING_HPP_
