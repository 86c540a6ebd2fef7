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


// End-to-end wiring: configuration, per-subtask training and inference over
// checkpoint files, the gated pipeline, evaluation and the chat loop.

#ifndef KGDIAL_PIPELINE_HPP_
#define KGDIAL_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgdial/corpus.hpp"
#include "kgdial/generation.hpp"
#include "kgdial/neural.hpp"
#include "kgdial/retrieval.hpp"

namespace kgdial::pipeline {

struct Paths {
  std::string knowledge = "data/knowledge.json";
  std::string logs = "data/logs.json";
  std::string labels = "data/labels.json";
  std::string checkpoints = "checkpoints";
  std::string output = "out";
};

struct ModelHyper {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t d_ff = 256;
  std::size_t latent_k = 5;
  std::size_t max_seq = 256;
  double init_std = 0.02;
};

struct Training {
  double lr = 6.25e-5;
  std::size_t batch_size = 8;
  std::size_t epochs = 10;
  std::size_t grad_accum = 1;
  // Hard cap on optimizer steps per subtask.
  std::size_t max_steps = 2000;
  double clip_norm = 0.0;
  std::size_t negatives = 5;
  // Mean epoch loss below which training stops early (<= 0: never).
  double target_epoch_loss = 0.0;
};

enum class SelectionMethod { kRetrieveRank, kThreeStep, kEnsemble };

struct PipelineConfig {
  Paths paths;
  retrieval::RetrievalConfig retrieval;
  ModelHyper model;
  Training training;
  generation::DecodeConfig decode;
  generation::LossWeights lambda;
  generation::RerankWeights mu;
  SelectionMethod selection = SelectionMethod::kEnsemble;
  bool copy = true;
  // Segmented generation: a second model writes the greeting part.
  bool srg = true;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys raise ValidationError.
  static PipelineConfig from_json(const nlohmann::json& j);
};

PipelineConfig load_config(const std::filesystem::path& path);
// Writes the resolved config as config.snapshot.json inside dir.
std::filesystem::path write_snapshot(const PipelineConfig& cfg, const std::filesystem::path& dir);

std::string to_string(SelectionMethod m);
SelectionMethod selection_method_from_string(const std::string& s);

// ---- Checkpoint files inside paths.checkpoints ----

enum class Subtask { kDetection, kSelection, kGeneration };
std::string to_string(Subtask s);

struct CheckpointFiles {
  std::filesystem::path detection, retrieve_rank, three_step, generation, greeting;
};
CheckpointFiles checkpoint_files(const PipelineConfig& cfg);

// ---- Training ----

struct TrainSummary {
  std::string subtask;
  std::vector<std::pair<std::string, nn::TrainResult>> runs;
  nlohmann::json to_json() const;
};

TrainSummary train_detection(const PipelineConfig& cfg, const KnowledgeBase& kb,
                             const std::vector<DialogueLog>& dialogues);
TrainSummary train_selection(const PipelineConfig& cfg, const KnowledgeBase& kb,
                             const std::vector<DialogueLog>& dialogues);
TrainSummary train_generation(const PipelineConfig& cfg, const KnowledgeBase& kb,
                              const std::vector<DialogueLog>& dialogues);

// ---- Inference ----

// Loaded models for the subtasks a run needs. A missing checkpoint raises
// CheckpointError naming the subtask.
class Models {
 public:
  static Models load(const PipelineConfig& cfg, const std::vector<Subtask>& needed);

  const nn::MiniModel& detection() const;
  const nn::MiniModel* retrieve_rank() const { return rr_ ? &*rr_ : nullptr; }
  const nn::MiniModel* three_step() const { return ts_ ? &*ts_ : nullptr; }
  const nn::MiniModel& generation() const;
  const nn::MiniModel* greeting() const { return greet_ ? &*greet_ : nullptr; }

 private:
  std::optional<nn::MiniModel> det_, rr_, ts_, gen_, greet_;
};

nlohmann::json detect_one(const PipelineConfig& cfg, const Models& models,
                          const KnowledgeBase& kb, const DialogueLog& dialogue);
nlohmann::json select_one(const PipelineConfig& cfg, const Models& models,
                          const KnowledgeBase& kb, const DialogueLog& dialogue);
// Generates from the given snippet.
nlohmann::json generate_one(const PipelineConfig& cfg, const Models& models,
                            const KnowledgeSnippet& snippet, const DialogueLog& dialogue);

// detect -> (target only) select -> generate. Non-target dialogues yield
// exactly {"target": false}.
nlohmann::json run_one(const PipelineConfig& cfg, const Models& models, const KnowledgeBase& kb,
                       const DialogueLog& dialogue);
std::vector<nlohmann::json> run_pipeline(const PipelineConfig& cfg, const Models& models,
                                         const KnowledgeBase& kb,
                                         const std::vector<DialogueLog>& dialogues);
// Loads every checkpoint first, so a missing one fails before any work.
std::vector<nlohmann::json> run_pipeline(const PipelineConfig& cfg, const KnowledgeBase& kb,
                                         const std::vector<DialogueLog>& dialogues);

// ---- Evaluation against labels ----

// Detection PRF over all dialogues; selection ranking metrics and generation
// BLEU/ROUGE over the labeled knowledge-seeking ones (gold snippets feed the
// generator so the subtasks are scored independently).
nlohmann::json evaluate(const PipelineConfig& cfg, const Models& models, const KnowledgeBase& kb,
                        const std::vector<DialogueLog>& dialogues);

// ---- Chat ----

// Reads utterances line by line until /quit or end of input. Returns 0.
int chat_repl(const PipelineConfig& cfg, const Models& models, const KnowledgeBase& kb,
              std::istream& in, std::ostream& out, bool verbose);

}  // namespace kgdial::pipeline

#endif  // KGDIAL_PIPELINE_HPP_
