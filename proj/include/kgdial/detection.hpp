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


// Knowledge-seeking turn detection: the dialogue is laid out as
//   <bos> s_1 .. s_{n-1} <sep> s_n dom <eos>
// and the pooled <bos> state, extended by a one-bit knowledge flag, feeds a
// logistic head.

#ifndef KGDIAL_DETECTION_HPP_
#define KGDIAL_DETECTION_HPP_

#include <string>
#include <vector>

#include "kgdial/corpus.hpp"
#include "kgdial/evalmetrics.hpp"
#include "kgdial/formatting.hpp"
#include "kgdial/neural.hpp"
#include "kgdial/retrieval.hpp"

namespace kgdial::detection {

inline constexpr const char* kHead = "detection";

// Domain tags the classifier sees.
const std::vector<std::string>& domain_tags();

struct DetectionInput {
  FormattedInput formatted;
  int knowledge_flag = 0;
  std::string dom = "other";
};

DetectionInput format_detection_input(const DialogueLog& dialogue, const KnowledgeBase& kb,
                                      const retrieval::RetrievalConfig& cfg = {});

// Registers the (d_model + 1) -> 1 head on the model.
void add_detection_head(nn::MiniModel& model);

struct Detection {
  bool target = false;
  double prob = 0.0;
};

// Logit of the head (graph-recording when gradients are enabled).
nn::Tensor detection_logit(const nn::MiniModel& model, const DetectionInput& input);

// Throws NotTrainedError when the head has not been trained.
Detection detect(const nn::MiniModel& model, const DetectionInput& input);

struct DetectionExample {
  DetectionInput input;
  bool label = false;
};

// Requires every dialogue to carry a label (ValidationError otherwise).
std::vector<DetectionExample> make_examples(const std::vector<DialogueLog>& dialogues,
                                            const KnowledgeBase& kb,
                                            const retrieval::RetrievalConfig& cfg = {});

nn::TrainResult train_detection(nn::MiniModel& model,
                                const std::vector<DetectionExample>& examples,
                                const nn::TrainConfig& cfg);

eval::PRF evaluate_detection(const nn::MiniModel& model,
                             const std::vector<DetectionExample>& examples);

}  // namespace kgdial::detection

#endif  // KGDIAL_DETECTION_HPP_
