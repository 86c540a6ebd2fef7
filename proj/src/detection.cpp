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


#include "kgdial/detection.hpp"

#include <algorithm>

#include "kgdial/error.hpp"
#include "kgdial/textsim.hpp"

namespace kgdial::detection {

const std::vector<std::string>& domain_tags() {
  static const std::vector<std::string> tags = {"taxi", "train", "hotel", "restaurant",
                                                "other"};
  return tags;
}

DetectionInput format_detection_input(const DialogueLog& dialogue, const KnowledgeBase& kb,
                                      const retrieval::RetrievalConfig& cfg) {
  if (dialogue.turns.empty()) throw ValidationError("detection: dialogue has no turns");
  DetectionInput in;
  const auto matches = retrieval::retrieve_entities(dialogue, kb, cfg);
  if (!matches.empty()) {
    in.dom = matches.front().entity.domain;
    in.knowledge_flag = 1;
  } else {
    const auto keywords = retrieval::keyword_domains(dialogue, cfg.fuzzy_window);
    if (!keywords.empty()) {
      in.dom = keywords.front();
      in.knowledge_flag = 1;
    }
  }
  const auto& tags = domain_tags();
  if (std::find(tags.begin(), tags.end(), in.dom) == tags.end()) in.dom = "other";

  auto& f = in.formatted;
  f.tokens.push_back(kBosTok);
  const std::vector<Turn> history(dialogue.turns.begin(), dialogue.turns.end() - 1);
  append_history(f.tokens, history, &f.breaks);
  f.history = {1, f.tokens.size()};
  f.tokens.push_back(kSepTok);
  for (auto& t : textsim::tokens_of(dialogue.turns.back().text)) f.tokens.push_back(std::move(t));
  f.tokens.push_back(in.dom);
  f.tokens.push_back(kEosTok);
  return in;
}

void add_detection_head(nn::MiniModel& model) {
  model.add_parameter("detection.w", model.config().d_model + 1, 1, nn::Init::kNormal);
  model.add_parameter("detection.b", 1, 1, nn::Init::kZeros);
}

nn::Tensor detection_logit(const nn::MiniModel& model, const DetectionInput& input) {
  const auto out = model.forward(input.formatted.to_model_input(model.vocab()));
  nn::Matrix flag(1, 1);
  flag(0, 0) = static_cast<double>(input.knowledge_flag);
  auto features = nn::concat_cols({nn::slice_rows(out.hidden, 0, 1), nn::Tensor::constant(flag)});
  return nn::add(nn::matmul(features, model.parameter("detection.w")),
                 model.parameter("detection.b"));
}

Detection detect(const nn::MiniModel& model, const DetectionInput& input) {
  model.require_trained(kHead);
  nn::NoGradGuard guard;
  const double p = nn::sigmoid(detection_logit(model, input)).item();
  return {p >= 0.5, p};
}

std::vector<DetectionExample> make_examples(const std::vector<DialogueLog>& dialogues,
                                            const KnowledgeBase& kb,
                                            const retrieval::RetrievalConfig& cfg) {
  std::vector<DetectionExample> out;
  out.reserve(dialogues.size());
  for (std::size_t i = 0; i < dialogues.size(); ++i) {
    if (!dialogues[i].label) {
      throw ValidationError("detection: dialogue " + std::to_string(i) + " has no label");
    }
    out.push_back({format_detection_input(dialogues[i], kb, cfg), dialogues[i].label->target});
  }
  return out;
}

nn::TrainResult train_detection(nn::MiniModel& model,
                                const std::vector<DetectionExample>& examples,
                                const nn::TrainConfig& cfg) {
  add_detection_head(model);
  auto result = nn::train(
      model, examples.size(),
      [&](std::size_t i, Rng&) {
        const double y[] = {examples[i].label ? 1.0 : 0.0};
        return nn::bce_with_logits(detection_logit(model, examples[i].input), y);
      },
      cfg);
  model.mark_trained(kHead);
  return result;
}

eval::PRF evaluate_detection(const nn::MiniModel& model,
                             const std::vector<DetectionExample>& examples) {
  std::vector<bool> pred, gold;
  for (const auto& ex : examples) {
    pred.push_back(detect(model, ex.input).target);
    gold.push_back(ex.label);
  }
  return eval::precision_recall_f1(pred, gold);
}

}  // namespace kgdial::detection
