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

// Small pre-LN transformer shared by the three subtasks, with segment-aware
// attention masks, an Adam training loop, finite-difference gradient checks
// and JSON checkpoints.

#ifndef KGDIAL_NEURAL_HPP_
#define KGDIAL_NEURAL_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgdial/autograd.hpp"
#include "kgdial/rng.hpp"

namespace kgdial::nn {

// ---- Vocabulary ----

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kSep = 4;
  static constexpr int kSp1 = 5;
  static constexpr int kSp2 = 6;
  static constexpr int kNumSpecials = 7;

  // Specials only.
  Vocab();
  // Special tokens must come first, in id order, exactly as special_tokens().
  static Vocab from_tokens(std::vector<std::string> tokens);

  int id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  static bool is_special(int id) { return id >= 0 && id < kNumSpecials; }
  static const std::vector<std::string>& special_tokens();

  std::vector<int> encode(const std::vector<std::string>& tokens) const;

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Tokenizes every text; keeps tokens seen at least min_freq times, sorted.
// Throws ValidationError on an empty corpus.
Vocab build_vocab(const std::vector<std::string>& texts, std::size_t min_freq = 1);

// ---- Masks ----

enum class MaskKind { kBidirectional, kCausal, kTrapezoidal };

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return end == begin; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
  bool operator==(const Span&) const = default;
};

struct MaskSpec {
  MaskKind kind = MaskKind::kBidirectional;
  // Segment spans. For bidirectional/causal masks they may all be empty, in
  // which case the whole sequence is one segment.
  Span knowledge;
  Span context;
  Span response;

  // Throws ValidationError when non-empty spans overlap, leave gaps, fall
  // outside [0, seq_len), or a trapezoidal mask lacks a response.
  void validate(std::size_t seq_len) const;
};

Mask build_mask(const MaskSpec& spec, std::size_t seq_len);

// ---- Model ----

struct ModelConfig {
  std::size_t vocab_size = Vocab::kNumSpecials;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t d_ff = 256;
  std::size_t max_seq = 256;
  std::size_t latent_k = 5;
  double init_std = 0.02;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct ModelInput {
  std::vector<int> ids;
  MaskSpec mask;
  // Boundaries of context utterances, as absolute start positions inside
  // mask.context. When the sequence exceeds max_seq, whole utterances are
  // dropped oldest-first; without boundaries context tokens are dropped
  // from the left one by one.
  std::vector<std::size_t> context_breaks;
};

struct ForwardResult {
  Tensor hidden;                               // seq_len x d_model
  std::vector<std::vector<Tensor>> attention;  // [layer][head], seq x seq
  std::vector<int> ids;                        // ids actually encoded
  MaskSpec mask;                               // spans after truncation
  bool truncated = false;
  std::size_t dropped = 0;  // tokens removed from the context span
};

// Initializer for a named head parameter.
enum class Init { kZeros, kOnes, kNormal };

class MiniModel {
 public:
  MiniModel(ModelConfig config, Vocab vocab);

  const ModelConfig& config() const { return config_; }
  const Vocab& vocab() const { return vocab_; }

  // Adds a task-specific parameter. Re-adding with the same shape is a no-op;
  // a different shape throws std::invalid_argument.
  Tensor& add_parameter(const std::string& name, std::size_t rows, std::size_t cols,
                        Init init);
  bool has_parameter(const std::string& name) const;
  Tensor& parameter(const std::string& name);
  const Tensor& parameter(const std::string& name) const;
  std::map<std::string, Tensor>& parameters() { return params_; }
  const std::map<std::string, Tensor>& parameters() const { return params_; }
  std::size_t parameter_count() const;

  void mark_trained(const std::string& head) { trained_.insert(head); }
  bool is_trained(const std::string& head) const { return trained_.contains(head); }
  // Throws NotTrainedError naming the head.
  void require_trained(const std::string& head) const;
  const std::set<std::string>& trained_heads() const { return trained_; }

  // Encodes ids. `first_row_offset`, when given, is a 1 x d_model tensor
  // added to the embedding of position 0.
  ForwardResult forward(const ModelInput& input,
                        const Tensor* first_row_offset = nullptr) const;

  // Order-sensitive hash of every parameter value.
  std::uint64_t checksum() const;
  bool all_finite() const;
  void zero_grad();

 private:
  ModelConfig config_;
  Vocab vocab_;
  std::map<std::string, Tensor> params_;
  std::set<std::string> trained_;
  Rng init_rng_;
};

// ---- Training ----

struct AdamConfig {
  double lr = 6.25e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // <= 0 disables global-norm clipping
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
  // Applies one update from the accumulated gradients and clears them.
  void step(std::map<std::string, Tensor>& params);
  std::size_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::map<std::string, std::pair<Matrix, Matrix>> moments_;
};

struct TrainConfig {
  AdamConfig adam;
  // Upper bound on optimizer steps.
  std::size_t steps = 200;
  // When positive, training also stops after this many passes over the data.
  std::size_t epochs = 0;
  std::size_t batch_size = 8;
  // Mini-batches accumulated per optimizer step.
  std::size_t grad_accum = 1;
  std::uint64_t seed = 0;
  // Called after each optimizer step with the mean batch loss.
  std::function<void(std::size_t step, double loss)> on_step;
  // Stops early once the mean loss of a full pass over the data drops below
  // this value (<= 0 disables).
  double target_epoch_loss = 0.0;
};

// Loss for example `index`; the Rng is the trainer's, for sampling.
using ExampleLoss = std::function<Tensor(std::size_t index, Rng& rng)>;

struct TrainResult {
  std::vector<double> loss_curve;  // one entry per optimizer step
  std::size_t steps = 0;
};

// Mini-batch training over shuffled epochs. Throws TrainingError naming the
// step and example when a loss is not finite.
TrainResult train(MiniModel& model, std::size_t n_examples, const ExampleLoss& loss,
                  const TrainConfig& cfg);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst_parameter;
};

// Central finite differences on `samples_per_tensor` random entries of every
// parameter tensor (preferring entries the loss actually touches).
// rel = |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
GradCheckResult grad_check(MiniModel& model, const std::function<Tensor()>& loss,
                           std::size_t samples_per_tensor = 4, std::uint64_t seed = 0,
                           double step = 1e-4);

// ---- Checkpoints ----

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const MiniModel& model,
                     const nlohmann::json& meta = nlohmann::json::object());

struct LoadedCheckpoint {
  MiniModel model;
  nlohmann::json meta;
};

// Throws CheckpointError on a malformed file, version mismatch, or (when
// `expected` is given) a differing d_model or latent_k.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const ModelConfig* expected = nullptr);

}  // namespace kgdial::nn

#endif  // KGDIAL_NEURAL_HPP_
