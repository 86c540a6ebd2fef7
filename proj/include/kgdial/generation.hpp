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


// Response generation: latent-variable encoder-decoder with a knowledge copy
// path, its four training losses, segmented (knowledge part + greeting part)
// decoding and similarity-based reranking.

#ifndef KGDIAL_GENERATION_HPP_
#define KGDIAL_GENERATION_HPP_

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgdial/corpus.hpp"
#include "kgdial/decoding.hpp"
#include "kgdial/neural.hpp"
#include "kgdial/textsim.hpp"

namespace kgdial::generation {

inline constexpr const char* kHead = "generation";
// Marks a generator trained with the copy path enabled.
inline constexpr const char* kCopyHead = "generation.copy";

// <bos> k_a <sp1> s_1 <sp2> s_2 ... <sp2> r <eos>
struct GenerationInput {
  std::vector<std::string> tokens;
  nn::Span knowledge;  // <bos> and the answer tokens
  nn::Span context;    // speaker-tagged history
  nn::Span response;   // <sp2> r [<eos>]; empty when no response is attached
  std::vector<std::size_t> breaks;  // utterance starts inside `context`
  bool closed = false;              // response ends with <eos>

  bool has_response() const { return !response.empty(); }
  // Answer token positions, i.e. the knowledge span without <bos>.
  nn::Span knowledge_tokens() const { return {knowledge.begin + 1, knowledge.end}; }
  nn::ModelInput to_model_input(const nn::Vocab& vocab, nn::MaskKind kind) const;
};

GenerationInput format_generation_input(const std::string& knowledge_answer,
                                        const std::vector<Turn>& history,
                                        const std::optional<std::string>& response = std::nullopt);

// Same input with the response span replaced by <sp2> + tokens (+ <eos>).
GenerationInput with_response(const GenerationInput& base, const std::vector<std::string>& tokens,
                              bool close);

// Output vocabulary of one example: the model vocabulary followed by the
// knowledge tokens it lacks.
struct ExtendedVocab {
  std::size_t base = 0;
  std::vector<std::string> oov;

  std::size_t size() const { return base + oov.size(); }
  // Base id, extended id for a knowledge OOV, or <unk>.
  int id(const nn::Vocab& vocab, const std::string& token) const;
  std::string token(const nn::Vocab& vocab, int id) const;
};

ExtendedVocab extend_vocab(const nn::Vocab& vocab, const GenerationInput& input);

// Output vocabulary for generators: dialogue turns and gold responses only,
// so knowledge-only tokens stay out of it.
nn::Vocab generation_vocab(const std::vector<DialogueLog>& dialogues, std::size_t min_freq = 2);

void add_generation_heads(nn::MiniModel& model);

// ---- Latent variable ----

// Posterior q(z | S, k_a, r): trapezoidal pass, pooled at the last response
// position. 1 x K.
nn::Tensor posterior_z(const nn::MiniModel& model, const GenerationInput& input);
// Prior p(z | S, k_a) from an input without a response (ValidationError
// otherwise), pooled at <bos>. 1 x K.
nn::Tensor prior_z(const nn::MiniModel& model, const GenerationInput& input);

struct LatentPair {
  nn::Tensor posterior;
  nn::Tensor prior;
};
// Both distributions from one trapezoidal pass. The prior reads <bos>, which
// cannot see the response, so it equals prior_z on the stripped input.
LatentPair latent_pair(const nn::MiniModel& model, const GenerationInput& input);

// Row k of the latent matrix Z.
nn::Tensor latent_vector(const nn::MiniModel& model, std::size_t k);

// sum_i q_i ln(q_i / max(p_i, 1e-10)), with 0 ln 0 = 0.
nn::Tensor kld_loss(const nn::Tensor& q, const nn::Tensor& p);

// -sum_t ln f[r_t] with f = softmax(W_1 h_z + b_1) over the base vocabulary.
nn::Tensor bow_loss(const nn::MiniModel& model, const nn::Tensor& h_z,
                    std::span<const int> targets);

// ---- Decoder distributions ----

// softmax(W_3 GELU(W_2 h + b_2) + b_3), one row per hidden row.
nn::Tensor decoder_vocab_distribution(const nn::MiniModel& model, const nn::Tensor& h);

// Head-averaged attention from `rows` onto the knowledge positions, with
// punctuation positions (ids < 0) removed, renormalized, and summed per
// extended-vocabulary id. Rows whose remaining mass vanishes fall back to
// uniform over the content positions. Undefined when no content position
// exists.
nn::Tensor knowledge_attention_distribution(const std::vector<nn::Tensor>& heads,
                                            std::size_t row_begin, std::size_t rows,
                                            nn::Span knowledge_positions,
                                            const std::vector<int>& position_ids,
                                            std::size_t ext_size);

// sigma(W_p [k_m * h_t ; k_m ; h_t] + b_p), one row per hidden row.
nn::Tensor copy_gate(const nn::MiniModel& model, const nn::Tensor& h, const nn::Tensor& k_m);

// gate * P_lang + (1 - gate) * P_att over the extended vocabulary. Without
// P_att the result is P_lang padded with zeros.
nn::Tensor mixed_distribution(const nn::Tensor& p_lang, const nn::Tensor& p_att,
                              const nn::Tensor& gate, std::size_t ext_size);

// -sum_t ln max(P[t, target_t], 1e-10).
nn::Tensor nll_loss(const nn::Tensor& mixed, std::span<const int> targets);
// sum_t gate_t^2.
nn::Tensor norm_loss(const nn::Tensor& gates);

struct LossWeights {
  double nll = 1.0;
  double bow = 1.0;
  double kld = 1.0;
  double norm = 1.0;
  nlohmann::json to_json() const;
  static LossWeights from_json(const nlohmann::json& j);
};

nn::Tensor total_loss(const nn::Tensor& nll, const nn::Tensor& bow, const nn::Tensor& kld,
                      const nn::Tensor& norm, const LossWeights& w);

// Distributions for the response rows of one pass conditioned on h_z.
struct DecoderOutput {
  nn::Tensor p_lang;  // rows x base
  nn::Tensor p_att;   // rows x ext, undefined without copy or content
  nn::Tensor gate;    // rows x 1; constant 1 without copy
  nn::Tensor mixed;   // rows x ext
  bool copy = false;
};

// Rows are the response positions that predict a next token: all of them,
// or only the last when `last_only`.
DecoderOutput decode_step(const nn::MiniModel& model, const GenerationInput& input,
                          const ExtendedVocab& ext, const nn::Tensor& h_z, bool copy,
                          bool last_only = false);

// ---- Training ----

struct GenerationExample {
  GenerationInput input;  // with a closed response
  ExtendedVocab ext;
  std::vector<int> targets;      // extended ids of the response tokens and <eos>
  std::vector<int> bow_targets;  // base ids of the scored response tokens
  std::size_t scored_from = 0;   // leading targets excluded from the losses
};

// Full response / knowledge part only / greeting part (knowledge part as an
// unscored prefix).
enum class Part { kFull, kKnowledge, kGreeting };

struct ResponseSplit {
  std::string knowledge;
  std::string greeting;
};
// Splits at the last sentence boundary; the final sentence is the greeting
// when it shares no content token with the answer.
ResponseSplit split_response(const std::string& response, const std::string& answer);

GenerationExample make_example(const nn::Vocab& vocab, const std::string& answer,
                               const std::vector<Turn>& history, const std::string& response,
                               Part part = Part::kFull);

// Target dialogues with a gold response; skips those whose part is empty.
std::vector<GenerationExample> make_examples(const nn::Vocab& vocab,
                                             const std::vector<DialogueLog>& dialogues,
                                             const KnowledgeBase& kb, Part part = Part::kFull);

struct GenerationLosses {
  nn::Tensor nll, bow, kld, norm, total;
};

// Exact expectation over the K latent values under the posterior.
GenerationLosses generation_losses(const nn::MiniModel& model, const GenerationExample& ex,
                                   bool copy, const LossWeights& w = {});

struct GenerationTrainConfig {
  nn::TrainConfig train;
  LossWeights weights;
  bool copy_enabled = true;
};

nn::TrainResult train_generator(nn::MiniModel& model,
                                const std::vector<GenerationExample>& examples,
                                const GenerationTrainConfig& cfg);

bool copy_enabled(const nn::MiniModel& model);

// ---- Inference ----

// Next-token scorer over a generator conditioned on a fixed latent value.
// Ids are extended-vocabulary ids; special tokens other than <eos> are
// excluded.
class ModelScorer : public decoding::NextTokenScorer {
 public:
  ModelScorer(const nn::MiniModel& model, GenerationInput base, std::size_t z,
              std::vector<std::string> forced_prefix = {});
  std::size_t vocab_size() const override { return ext_.size(); }
  int eos() const override { return nn::Vocab::kEos; }
  decoding::StepOutput next(const std::vector<int>& prefix) override;

  const ExtendedVocab& ext() const { return ext_; }
  std::vector<std::string> tokens(const std::vector<int>& ids) const;

 private:
  const nn::MiniModel& model_;
  GenerationInput base_;
  ExtendedVocab ext_;
  nn::Tensor h_z_;
  std::vector<std::string> forced_;
  bool copy_;
};

// argmax of the prior, or a draw from it when `rng` is given.
std::size_t infer_z(const nn::MiniModel& model, const GenerationInput& input,
                    Rng* rng = nullptr);

struct DecodeConfig {
  std::size_t groups = 4;
  std::size_t beams = 2;
  std::size_t max_len = 40;
  bool ffbs = true;        // otherwise plain beam search with width `beams`
  bool sample_z = false;   // draw z from the prior instead of its argmax
  std::uint64_t seed = 0;
  nlohmann::json to_json() const;
  static DecodeConfig from_json(const nlohmann::json& j);
};

struct RerankWeights {
  double mu1 = 1.0;
  double mu2 = 1.0;
  double mu3 = 1.0;
  nlohmann::json to_json() const;
  static RerankWeights from_json(const nlohmann::json& j);
};

struct GenerationHypothesis {
  std::vector<std::string> tokens;  // full response, without <eos>
  std::vector<std::string> knowledge_tokens;  // knowledge part (all of it without SRG)
  std::vector<double> step_log_probs;
  std::vector<double> gates;
  double log_prob = 0.0;
  bool closed_at_max_len = false;
  bool greeting_only = false;
  double s_nll = 0.0, s_bert = 0.0, s_jwd = 0.0, s_total = 0.0;

  std::string text() const;
};

// Candidates from one generator (FFBS or beam search).
std::vector<GenerationHypothesis> decode_candidates(const nn::MiniModel& model,
                                                    const GenerationInput& input,
                                                    const DecodeConfig& cfg);

// Knowledge part from `knowledge_model`, then for each candidate a greeting
// continuation from `greeting_model` decoded after it. Log-probabilities
// add.
std::vector<GenerationHypothesis> segmented_generate(const nn::MiniModel& knowledge_model,
                                                     const nn::MiniModel& greeting_model,
                                                     const GenerationInput& input,
                                                     const DecodeConfig& cfg);

// Scores from a model's token embeddings; tokens it lacks get a fixed
// pseudo-random vector derived from the token text.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(const nn::MiniModel& model);
  std::span<const double> operator()(const std::string& token);

 private:
  const nn::MiniModel& model_;
  std::map<std::string, std::vector<double>> cache_;
};

// Fills the S_* fields and returns the index of the selected hypothesis
// (largest S_total, earliest on ties). A single hypothesis gets S_NLL = 1.
std::size_t postprocess_rerank(std::vector<GenerationHypothesis>& hyps,
                               const std::string& knowledge_answer,
                               const textsim::EmbeddingLookup& embeddings,
                               const RerankWeights& mu = {});

// S_total for given components.
double rerank_score(double s_nll, double s_bert, double s_jwd, const RerankWeights& mu);

struct GenerationResult {
  std::string response;
  std::vector<GenerationHypothesis> candidates;
  std::size_t chosen = 0;
  nlohmann::json to_json() const;
};

// Decodes (segmented when a greeting model is given) and reranks.
GenerationResult generate(const nn::MiniModel& knowledge_model,
                          const nn::MiniModel* greeting_model, const std::string& knowledge_answer,
                          const std::vector<Turn>& history, const DecodeConfig& cfg,
                          const RerankWeights& mu = {});

}  // namespace kgdial::generation

#endif  // KGDIAL_GENERATION_HPP_
