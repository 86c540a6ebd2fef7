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


#include "kgdial/generation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "kgdial/error.hpp"
#include "kgdial/formatting.hpp"
#include "kgdial/textsim.hpp"

namespace kgdial::generation {

using nn::Matrix;
using nn::Tensor;

namespace {

constexpr double kFloor = 1e-10;

void append_text(std::vector<std::string>& out, const std::string& text) {
  for (auto& t : textsim::tokens_of(text)) out.push_back(std::move(t));
}

std::size_t latent_k(const nn::MiniModel& model) { return model.config().latent_k; }

template <typename T>
T json_or(const nlohmann::json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

// ---- Inputs ----

nn::ModelInput GenerationInput::to_model_input(const nn::Vocab& vocab, nn::MaskKind kind) const {
  nn::ModelInput in;
  in.ids = vocab.encode(tokens);
  in.mask.kind = kind;
  in.mask.knowledge = knowledge;
  in.mask.context = context;
  in.mask.response = response;
  in.context_breaks = breaks;
  return in;
}

GenerationInput format_generation_input(const std::string& knowledge_answer,
                                        const std::vector<Turn>& history,
                                        const std::optional<std::string>& response) {
  GenerationInput g;
  g.tokens.push_back(kBosTok);
  append_text(g.tokens, knowledge_answer);
  g.knowledge = {0, g.tokens.size()};
  for (const auto& turn : history) {
    g.breaks.push_back(g.tokens.size());
    g.tokens.push_back(turn.speaker == Speaker::kUser ? kSp1Tok : kSp2Tok);
    append_text(g.tokens, turn.text);
  }
  g.context = {g.knowledge.end, g.tokens.size()};
  g.response = {g.tokens.size(), g.tokens.size()};
  if (response) return with_response(g, textsim::tokens_of(*response), true);
  return g;
}

GenerationInput with_response(const GenerationInput& base, const std::vector<std::string>& tokens,
                              bool close) {
  GenerationInput g = base;
  g.tokens.resize(base.context.end);
  g.tokens.push_back(kSp2Tok);
  g.tokens.insert(g.tokens.end(), tokens.begin(), tokens.end());
  if (close) g.tokens.push_back(kEosTok);
  g.response = {base.context.end, g.tokens.size()};
  g.closed = close;
  return g;
}

int ExtendedVocab::id(const nn::Vocab& vocab, const std::string& token) const {
  if (vocab.contains(token)) return vocab.id(token);
  auto it = std::find(oov.begin(), oov.end(), token);
  if (it != oov.end()) return static_cast<int>(base + static_cast<std::size_t>(it - oov.begin()));
  return nn::Vocab::kUnk;
}

std::string ExtendedVocab::token(const nn::Vocab& vocab, int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= size()) {
    throw ValidationError("extended vocabulary id out of range");
  }
  const auto u = static_cast<std::size_t>(id);
  return u < base ? vocab.token(id) : oov[u - base];
}

ExtendedVocab extend_vocab(const nn::Vocab& vocab, const GenerationInput& input) {
  ExtendedVocab ext;
  ext.base = vocab.size();
  const auto kp = input.knowledge_tokens();
  for (std::size_t i = kp.begin; i < kp.end; ++i) {
    const auto& t = input.tokens[i];
    if (!vocab.contains(t) && std::find(ext.oov.begin(), ext.oov.end(), t) == ext.oov.end()) {
      ext.oov.push_back(t);
    }
  }
  return ext;
}

nn::Vocab generation_vocab(const std::vector<DialogueLog>& dialogues, std::size_t min_freq) {
  std::vector<std::string> texts;
  for (const auto& d : dialogues) {
    for (const auto& t : d.turns) texts.push_back(t.text);
    if (d.label && d.label->response) texts.push_back(*d.label->response);
  }
  return nn::build_vocab(texts, min_freq);
}

void add_generation_heads(nn::MiniModel& model) {
  const std::size_t d = model.config().d_model;
  const std::size_t v = model.vocab().size();
  const std::size_t k = latent_k(model);
  model.add_parameter("gen.z", k, d, nn::Init::kNormal);
  model.add_parameter("gen.post.w", d, k, nn::Init::kNormal);
  model.add_parameter("gen.post.b", 1, k, nn::Init::kZeros);
  model.add_parameter("gen.prior.w", d, k, nn::Init::kNormal);
  model.add_parameter("gen.prior.b", 1, k, nn::Init::kZeros);
  model.add_parameter("gen.bow.w", d, v, nn::Init::kNormal);
  model.add_parameter("gen.bow.b", 1, v, nn::Init::kZeros);
  model.add_parameter("gen.dec.w2", d, d, nn::Init::kNormal);
  model.add_parameter("gen.dec.b2", 1, d, nn::Init::kZeros);
  model.add_parameter("gen.dec.w3", d, v, nn::Init::kNormal);
  model.add_parameter("gen.dec.b3", 1, v, nn::Init::kZeros);
  model.add_parameter("gen.gate.w", 3 * d, 1, nn::Init::kNormal);
  model.add_parameter("gen.gate.b", 1, 1, nn::Init::kZeros);
}

// ---- Latent variable ----

namespace {

Tensor latent_head(const nn::MiniModel& model, const Tensor& pooled, const char* which) {
  const std::string w = std::string("gen.") + which + ".w";
  const std::string b = std::string("gen.") + which + ".b";
  return nn::softmax_rows(nn::add_row(nn::matmul(pooled, model.parameter(w)), model.parameter(b)));
}

void require_response(const GenerationInput& input, const char* op) {
  if (!input.has_response() || !input.closed) {
    throw ValidationError(std::string(op) + ": input needs a closed response span");
  }
}

}  // namespace

Tensor posterior_z(const nn::MiniModel& model, const GenerationInput& input) {
  return latent_pair(model, input).posterior;
}

Tensor prior_z(const nn::MiniModel& model, const GenerationInput& input) {
  if (input.has_response()) {
    throw ValidationError("prior_z: the prior branch must not receive response tokens");
  }
  const auto out = model.forward(input.to_model_input(model.vocab(), nn::MaskKind::kBidirectional));
  return latent_head(model, nn::slice_rows(out.hidden, 0, 1), "prior");
}

LatentPair latent_pair(const nn::MiniModel& model, const GenerationInput& input) {
  require_response(input, "posterior_z");
  const auto out = model.forward(input.to_model_input(model.vocab(), nn::MaskKind::kTrapezoidal));
  const auto last = out.hidden.rows() - 1;
  return {latent_head(model, nn::slice_rows(out.hidden, last, 1), "post"),
          latent_head(model, nn::slice_rows(out.hidden, 0, 1), "prior")};
}

Tensor latent_vector(const nn::MiniModel& model, std::size_t k) {
  if (k >= latent_k(model)) throw ValidationError("latent index out of range");
  return nn::slice_rows(model.parameter("gen.z"), static_cast<Eigen::Index>(k), 1);
}

Tensor kld_loss(const Tensor& q, const Tensor& p) {
  if (q.rows() != p.rows() || q.cols() != p.cols()) {
    throw std::invalid_argument("kld_loss: shape mismatch");
  }
  return nn::sum(nn::mul(q, nn::sub(nn::log(q, kFloor), nn::log(p, kFloor))));
}

Tensor bow_loss(const nn::MiniModel& model, const Tensor& h_z, std::span<const int> targets) {
  const auto v = static_cast<Eigen::Index>(model.vocab().size());
  Matrix counts = Matrix::Zero(1, v);
  for (int t : targets) {
    if (t < 0 || t >= v) throw ValidationError("bow_loss: target outside the vocabulary");
    counts(0, t) += 1.0;
  }
  const Tensor logf = nn::log_softmax_rows(
      nn::add_row(nn::matmul(h_z, model.parameter("gen.bow.w")), model.parameter("gen.bow.b")));
  return nn::scale(nn::sum(nn::mul(logf, Tensor::constant(counts))), -1.0);
}

// ---- Decoder distributions ----

Tensor decoder_vocab_distribution(const nn::MiniModel& model, const Tensor& h) {
  const Tensor d = nn::gelu(
      nn::add_row(nn::matmul(h, model.parameter("gen.dec.w2")), model.parameter("gen.dec.b2")));
  return nn::softmax_rows(
      nn::add_row(nn::matmul(d, model.parameter("gen.dec.w3")), model.parameter("gen.dec.b3")));
}

Tensor knowledge_attention_distribution(const std::vector<Tensor>& heads, std::size_t row_begin,
                                        std::size_t rows, nn::Span knowledge_positions,
                                        const std::vector<int>& position_ids,
                                        std::size_t ext_size) {
  if (heads.empty()) throw std::invalid_argument("knowledge_attention: no attention heads");
  if (position_ids.size() != knowledge_positions.size()) {
    throw std::invalid_argument("knowledge_attention: one id per knowledge position expected");
  }
  const auto nk = static_cast<Eigen::Index>(knowledge_positions.size());
  Matrix keep = Matrix::Zero(1, nk);
  Matrix to_vocab = Matrix::Zero(nk, static_cast<Eigen::Index>(ext_size));
  for (Eigen::Index j = 0; j < nk; ++j) {
    const int id = position_ids[static_cast<std::size_t>(j)];
    if (id < 0) continue;
    if (static_cast<std::size_t>(id) >= ext_size) {
      throw std::invalid_argument("knowledge_attention: id outside the extended vocabulary");
    }
    keep(0, j) = 1.0;
    to_vocab(j, id) = 1.0;
  }
  if (keep.sum() == 0.0) return {};

  Tensor avg = heads.front();
  for (std::size_t h = 1; h < heads.size(); ++h) avg = nn::add(avg, heads[h]);
  avg = nn::scale(avg, 1.0 / static_cast<double>(heads.size()));
  Tensor a = nn::slice_cols(
      nn::slice_rows(avg, static_cast<Eigen::Index>(row_begin), static_cast<Eigen::Index>(rows)),
      static_cast<Eigen::Index>(knowledge_positions.begin), nk);
  a = nn::mul_row(a, Tensor::constant(keep));
  const Matrix sums = a.value().rowwise().sum();
  Matrix fallback = Matrix::Zero(a.rows(), nk);
  bool any = false;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    if (!(sums(r, 0) > 0.0)) {
      fallback.row(r) = keep;
      any = true;
    }
  }
  if (any) a = nn::add(a, Tensor::constant(fallback));
  return nn::matmul(nn::normalize_rows(a), Tensor::constant(to_vocab));
}

Tensor copy_gate(const nn::MiniModel& model, const Tensor& h, const Tensor& k_m) {
  const auto d = static_cast<Eigen::Index>(model.config().d_model);
  const Tensor& w = model.parameter("gen.gate.w");
  const Tensor wa = nn::slice_rows(w, 0, d);
  const Tensor wb = nn::slice_rows(w, d, d);
  const Tensor wc = nn::slice_rows(w, 2 * d, d);
  const Tensor per_row = nn::add(nn::matmul(nn::mul_row(h, k_m), wa), nn::matmul(h, wc));
  const Tensor shared = nn::add(nn::matmul(k_m, wb), model.parameter("gen.gate.b"));
  return nn::sigmoid(nn::add_row(per_row, shared));
}

Tensor mixed_distribution(const Tensor& p_lang, const Tensor& p_att, const Tensor& gate,
                          std::size_t ext_size) {
  const auto base = static_cast<std::size_t>(p_lang.cols());
  if (ext_size < base) throw std::invalid_argument("mixed_distribution: ext_size < vocab size");
  Tensor p_ext = p_lang;
  if (ext_size > base) {
    p_ext = nn::concat_cols(
        {p_lang, Tensor::constant(Matrix::Zero(p_lang.rows(),
                                               static_cast<Eigen::Index>(ext_size - base)))});
  }
  if (!p_att.defined()) return p_ext;
  const Tensor rest = nn::add_scalar(nn::scale(gate, -1.0), 1.0);
  return nn::add(nn::mul_col(p_ext, gate), nn::mul_col(p_att, rest));
}

Tensor nll_loss(const Tensor& mixed, std::span<const int> targets) {
  if (static_cast<std::size_t>(mixed.rows()) != targets.size()) {
    throw std::invalid_argument("nll_loss: one target per row expected");
  }
  if (targets.empty()) return Tensor::scalar(0.0);
  return nn::scale(nn::sum(nn::pick(nn::log(mixed, kFloor), targets)), -1.0);
}

Tensor norm_loss(const Tensor& gates) { return nn::sum(nn::mul(gates, gates)); }

Tensor total_loss(const Tensor& nll, const Tensor& bow, const Tensor& kld, const Tensor& norm,
                  const LossWeights& w) {
  return nn::add(nn::add(nn::scale(nll, w.nll), nn::scale(bow, w.bow)),
                 nn::add(nn::scale(kld, w.kld), nn::scale(norm, w.norm)));
}

nlohmann::json LossWeights::to_json() const {
  return {{"lambda1", nll}, {"lambda2", bow}, {"lambda3", kld}, {"lambda4", norm}};
}

LossWeights LossWeights::from_json(const nlohmann::json& j) {
  LossWeights w;
  w.nll = json_or(j, "lambda1", w.nll);
  w.bow = json_or(j, "lambda2", w.bow);
  w.kld = json_or(j, "lambda3", w.kld);
  w.norm = json_or(j, "lambda4", w.norm);
  return w;
}

DecoderOutput decode_step(const nn::MiniModel& model, const GenerationInput& input,
                          const ExtendedVocab& ext, const Tensor& h_z, bool copy,
                          bool last_only) {
  if (!input.has_response()) throw ValidationError("decode_step: input has no response span");
  const auto out =
      model.forward(input.to_model_input(model.vocab(), nn::MaskKind::kTrapezoidal), &h_z);
  const nn::Span resp = out.mask.response;
  const std::size_t end = resp.end - (input.closed ? 1 : 0);
  const std::size_t begin = last_only ? end - 1 : resp.begin;
  const std::size_t rows = end - begin;
  if (rows == 0) throw ValidationError("decode_step: no response position to predict from");

  DecoderOutput d;
  const Tensor h =
      nn::slice_rows(out.hidden, static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(rows));
  d.p_lang = decoder_vocab_distribution(model, h);
  const nn::Span kp = input.knowledge_tokens();
  if (copy && !kp.empty()) {
    std::vector<int> ids;
    for (std::size_t i = kp.begin; i < kp.end; ++i) {
      const auto& t = input.tokens[i];
      ids.push_back(textsim::is_punctuation(t) ? -1 : ext.id(model.vocab(), t));
    }
    d.p_att = knowledge_attention_distribution(out.attention.back(), begin, rows, kp, ids,
                                               ext.size());
  }
  if (d.p_att.defined()) {
    const Tensor k_m = nn::mean_rows(nn::slice_rows(out.hidden, static_cast<Eigen::Index>(kp.begin),
                                                    static_cast<Eigen::Index>(kp.size())));
    d.gate = copy_gate(model, h, k_m);
    d.copy = true;
  } else {
    d.gate = Tensor::constant(Matrix::Ones(static_cast<Eigen::Index>(rows), 1));
  }
  d.mixed = mixed_distribution(d.p_lang, d.p_att, d.gate, ext.size());
  return d;
}

// ---- Training ----

ResponseSplit split_response(const std::string& response, const std::string& answer) {
  const auto toks = textsim::tokens_of(response);
  auto boundary = [](const std::string& t) { return t == "." || t == "?" || t == "!"; };
  std::size_t cut = 0;  // start of the final sentence
  for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
    if (boundary(toks[i])) cut = i + 1;
  }
  std::set<std::string> answer_content;
  for (const auto& t : textsim::tokens_of(answer)) {
    if (textsim::is_content_token(t)) answer_content.insert(t);
  }
  bool shares = false;
  for (std::size_t i = cut; i < toks.size(); ++i) shares = shares || answer_content.contains(toks[i]);
  if (shares) cut = toks.size();
  const std::span<const std::string> all(toks);
  return {textsim::detokenize(all.subspan(0, cut)), textsim::detokenize(all.subspan(cut))};
}

GenerationExample make_example(const nn::Vocab& vocab, const std::string& answer,
                               const std::vector<Turn>& history, const std::string& response,
                               Part part) {
  std::vector<std::string> prefix;
  std::vector<std::string> scored;
  if (part == Part::kFull) {
    scored = textsim::tokens_of(response);
  } else {
    const auto split = split_response(response, answer);
    if (part == Part::kKnowledge) {
      scored = textsim::tokens_of(split.knowledge);
    } else {
      prefix = textsim::tokens_of(split.knowledge);
      scored = textsim::tokens_of(split.greeting);
    }
  }
  std::vector<std::string> all = prefix;
  all.insert(all.end(), scored.begin(), scored.end());

  GenerationExample ex;
  ex.input = with_response(format_generation_input(answer, history), all, true);
  ex.ext = extend_vocab(vocab, ex.input);
  for (const auto& t : all) ex.targets.push_back(ex.ext.id(vocab, t));
  ex.targets.push_back(nn::Vocab::kEos);
  for (const auto& t : scored) ex.bow_targets.push_back(vocab.id(t));
  ex.scored_from = prefix.size();
  return ex;
}

std::vector<GenerationExample> make_examples(const nn::Vocab& vocab,
                                             const std::vector<DialogueLog>& dialogues,
                                             const KnowledgeBase& kb, Part part) {
  std::vector<GenerationExample> out;
  for (const auto& d : dialogues) {
    if (!d.label || !d.label->target || !d.label->knowledge || !d.label->response) continue;
    const auto* s = kb.find(*d.label->knowledge);
    if (!s) {
      throw ValidationError("generation: gold snippet " + d.label->knowledge->to_string() +
                            " is not in the knowledge base");
    }
    auto ex = make_example(vocab, s->answer, d.turns, *d.label->response, part);
    if (ex.bow_targets.empty() && part != Part::kFull) continue;
    out.push_back(std::move(ex));
  }
  return out;
}

GenerationLosses generation_losses(const nn::MiniModel& model, const GenerationExample& ex,
                                   bool copy, const LossWeights& w) {
  const LatentPair lp = latent_pair(model, ex.input);
  const std::size_t k_count = latent_k(model);
  const std::size_t n_rows = ex.targets.size();
  if (ex.scored_from >= n_rows) throw ValidationError("generation: nothing to score");
  const auto first = static_cast<Eigen::Index>(ex.scored_from);
  const auto count = static_cast<Eigen::Index>(n_rows - ex.scored_from);
  const std::span<const int> scored(ex.targets.data() + ex.scored_from, n_rows - ex.scored_from);

  std::vector<Tensor> nll, bow, norm;
  for (std::size_t k = 0; k < k_count; ++k) {
    const Tensor h_z = latent_vector(model, k);
    const DecoderOutput out = decode_step(model, ex.input, ex.ext, h_z, copy);
    if (static_cast<std::size_t>(out.mixed.rows()) != n_rows) {
      throw ValidationError("generation: response rows and targets disagree");
    }
    nll.push_back(nll_loss(nn::slice_rows(out.mixed, first, count), scored));
    bow.push_back(bow_loss(model, h_z, ex.bow_targets));
    norm.push_back(out.copy ? norm_loss(nn::slice_rows(out.gate, first, count))
                            : Tensor::scalar(0.0));
  }
  GenerationLosses l;
  l.nll = nn::matmul_nt(lp.posterior, nn::concat_cols(nll));
  l.bow = nn::matmul_nt(lp.posterior, nn::concat_cols(bow));
  l.norm = nn::matmul_nt(lp.posterior, nn::concat_cols(norm));
  l.kld = kld_loss(lp.posterior, lp.prior);
  l.total = total_loss(l.nll, l.bow, l.kld, l.norm, w);
  return l;
}

nn::TrainResult train_generator(nn::MiniModel& model,
                                const std::vector<GenerationExample>& examples,
                                const GenerationTrainConfig& cfg) {
  if (examples.empty()) throw ValidationError("generation: no training examples");
  add_generation_heads(model);
  auto result = nn::train(
      model, examples.size(),
      [&](std::size_t i, Rng&) {
        return generation_losses(model, examples[i], cfg.copy_enabled, cfg.weights).total;
      },
      cfg.train);
  model.mark_trained(kHead);
  if (cfg.copy_enabled) model.mark_trained(kCopyHead);
  return result;
}

bool copy_enabled(const nn::MiniModel& model) { return model.is_trained(kCopyHead); }

// ---- Inference ----

ModelScorer::ModelScorer(const nn::MiniModel& model, GenerationInput base, std::size_t z,
                         std::vector<std::string> forced_prefix)
    : model_(model),
      base_(std::move(base)),
      forced_(std::move(forced_prefix)),
      copy_(copy_enabled(model)) {
  model.require_trained(kHead);
  if (base_.has_response()) throw ValidationError("ModelScorer: base input has a response");
  ext_ = extend_vocab(model.vocab(), base_);
  h_z_ = latent_vector(model, z);
}

std::vector<std::string> ModelScorer::tokens(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(ext_.token(model_.vocab(), id));
  return out;
}

decoding::StepOutput ModelScorer::next(const std::vector<int>& prefix) {
  nn::NoGradGuard guard;
  std::vector<std::string> toks = forced_;
  for (auto& t : tokens(prefix)) toks.push_back(std::move(t));
  const auto out = decode_step(model_, with_response(base_, toks, false), ext_, h_z_, copy_, true);
  decoding::StepOutput step;
  step.log_probs.resize(ext_.size());
  for (std::size_t i = 0; i < ext_.size(); ++i) {
    const double p = out.mixed.value()(0, static_cast<Eigen::Index>(i));
    const bool banned = nn::Vocab::is_special(static_cast<int>(i)) &&
                        static_cast<int>(i) != nn::Vocab::kEos;
    step.log_probs[i] = (p > 0.0 && !banned) ? std::log(p)
                                             : -std::numeric_limits<double>::infinity();
  }
  step.gate = out.gate.value()(0, 0);
  return step;
}

std::size_t infer_z(const nn::MiniModel& model, const GenerationInput& input, Rng* rng) {
  nn::NoGradGuard guard;
  GenerationInput stripped = input;
  if (stripped.has_response()) {
    stripped.tokens.resize(stripped.context.end);
    stripped.response = {stripped.context.end, stripped.context.end};
    stripped.closed = false;
  }
  const Matrix p = prior_z(model, stripped).value();
  if (rng) {
    double u = rng->uniform_real();
    for (Eigen::Index k = 0; k < p.cols(); ++k) {
      u -= p(0, k);
      if (u < 0.0) return static_cast<std::size_t>(k);
    }
    return static_cast<std::size_t>(p.cols() - 1);
  }
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < p.cols(); ++k) {
    if (p(0, k) > p(0, best)) best = k;
  }
  return static_cast<std::size_t>(best);
}

nlohmann::json DecodeConfig::to_json() const {
  return {{"groups", groups}, {"beams", beams},       {"max_len", max_len},
          {"ffbs", ffbs},     {"sample_z", sample_z}, {"seed", seed}};
}

DecodeConfig DecodeConfig::from_json(const nlohmann::json& j) {
  DecodeConfig c;
  c.groups = json_or(j, "groups", c.groups);
  c.beams = json_or(j, "beams", c.beams);
  c.max_len = json_or(j, "max_len", c.max_len);
  c.ffbs = json_or(j, "ffbs", c.ffbs);
  c.sample_z = json_or(j, "sample_z", c.sample_z);
  c.seed = json_or(j, "seed", c.seed);
  return c;
}

nlohmann::json RerankWeights::to_json() const {
  return {{"mu1", mu1}, {"mu2", mu2}, {"mu3", mu3}};
}

RerankWeights RerankWeights::from_json(const nlohmann::json& j) {
  RerankWeights w;
  w.mu1 = json_or(j, "mu1", w.mu1);
  w.mu2 = json_or(j, "mu2", w.mu2);
  w.mu3 = json_or(j, "mu3", w.mu3);
  return w;
}

std::string GenerationHypothesis::text() const { return textsim::detokenize(tokens); }

namespace {

GenerationHypothesis to_generation(const decoding::Hypothesis& h, const ModelScorer& scorer) {
  GenerationHypothesis g;
  std::vector<int> ids = h.ids;
  if (!ids.empty() && ids.back() == nn::Vocab::kEos) ids.pop_back();
  g.tokens = scorer.tokens(ids);
  g.knowledge_tokens = g.tokens;
  g.step_log_probs = h.step_log_probs;
  g.gates = h.gates;
  g.log_prob = h.log_prob;
  g.closed_at_max_len = h.closed_at_max_len;
  return g;
}

}  // namespace

std::vector<GenerationHypothesis> decode_candidates(const nn::MiniModel& model,
                                                    const GenerationInput& input,
                                                    const DecodeConfig& cfg) {
  model.require_trained(kHead);
  Rng rng(cfg.seed);
  const std::size_t z = infer_z(model, input, cfg.sample_z ? &rng : nullptr);
  ModelScorer scorer(model, input, z);
  std::vector<decoding::Hypothesis> raw;
  if (cfg.ffbs) {
    raw = decoding::ffbs(scorer, cfg.groups, cfg.beams, cfg.max_len).hypotheses;
  } else {
    raw = decoding::beam_search(scorer, cfg.beams, cfg.max_len);
  }
  std::vector<GenerationHypothesis> out;
  for (const auto& h : raw) out.push_back(to_generation(h, scorer));
  return out;
}

std::vector<GenerationHypothesis> segmented_generate(const nn::MiniModel& knowledge_model,
                                                     const nn::MiniModel& greeting_model,
                                                     const GenerationInput& input,
                                                     const DecodeConfig& cfg) {
  greeting_model.require_trained(kHead);
  auto knowledge = decode_candidates(knowledge_model, input, cfg);
  Rng rng(cfg.seed + 1);
  const std::size_t z = infer_z(greeting_model, input, cfg.sample_z ? &rng : nullptr);
  std::vector<GenerationHypothesis> out;
  for (auto& k : knowledge) {
    ModelScorer greet(greeting_model, input, z, k.tokens);
    const auto best = decoding::beam_search(greet, cfg.beams, cfg.max_len);
    GenerationHypothesis h = k;
    h.greeting_only = k.tokens.empty();
    if (!best.empty()) {
      const auto g = to_generation(best.front(), greet);
      h.tokens.insert(h.tokens.end(), g.tokens.begin(), g.tokens.end());
      h.step_log_probs.insert(h.step_log_probs.end(), g.step_log_probs.begin(),
                              g.step_log_probs.end());
      h.gates.insert(h.gates.end(), g.gates.begin(), g.gates.end());
      h.log_prob += g.log_prob;
      h.closed_at_max_len = h.closed_at_max_len || g.closed_at_max_len;
    }
    out.push_back(std::move(h));
  }
  return out;
}

EmbeddingTable::EmbeddingTable(const nn::MiniModel& model) : model_(model) {}

std::span<const double> EmbeddingTable::operator()(const std::string& token) {
  auto it = cache_.find(token);
  if (it == cache_.end()) {
    const auto d = static_cast<Eigen::Index>(model_.config().d_model);
    std::vector<double> v(static_cast<std::size_t>(d));
    const auto& vocab = model_.vocab();
    if (vocab.contains(token) && !nn::Vocab::is_special(vocab.id(token))) {
      const Matrix& emb = model_.parameter("tok_emb").value();
      for (Eigen::Index j = 0; j < d; ++j) v[static_cast<std::size_t>(j)] = emb(vocab.id(token), j);
    } else {
      std::uint64_t h = 1469598103934665603ull;  // FNV-1a
      for (unsigned char c : token) h = (h ^ c) * 1099511628211ull;
      Rng rng(h);
      for (auto& x : v) x = rng.normal();
    }
    it = cache_.emplace(token, std::move(v)).first;
  }
  return it->second;
}

double rerank_score(double s_nll, double s_bert, double s_jwd, const RerankWeights& mu) {
  return mu.mu1 * s_nll + mu.mu2 * s_bert - mu.mu3 * s_jwd;
}

std::size_t postprocess_rerank(std::vector<GenerationHypothesis>& hyps,
                               const std::string& knowledge_answer,
                               const textsim::EmbeddingLookup& embeddings,
                               const RerankWeights& mu) {
  if (hyps.empty()) throw ValidationError("postprocess_rerank: no hypotheses");
  double lo = hyps.front().log_prob, hi = lo;
  for (const auto& h : hyps) {
    lo = std::min(lo, h.log_prob);
    hi = std::max(hi, h.log_prob);
  }
  const auto answer = textsim::tokens_of(knowledge_answer);
  const std::string answer_text = textsim::detokenize(answer);
  std::size_t best = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    auto& h = hyps[i];
    h.s_nll = hi > lo ? (h.log_prob - lo) / (hi - lo) : 1.0;
    h.s_bert = textsim::greedy_semantic_f1(h.knowledge_tokens, answer, embeddings);
    h.s_jwd = textsim::jaro_winkler(textsim::detokenize(h.knowledge_tokens), answer_text);
    h.s_total = rerank_score(h.s_nll, h.s_bert, h.s_jwd, mu);
    if (h.s_total > hyps[best].s_total) best = i;
  }
  return best;
}

nlohmann::json GenerationResult::to_json() const {
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& h : candidates) {
    cands.push_back({{"text", h.text()},
                     {"s_nll", h.s_nll},
                     {"s_bert", h.s_bert},
                     {"s_jwd", h.s_jwd},
                     {"s_total", h.s_total}});
  }
  return {{"response", response}, {"candidates", cands}};
}

GenerationResult generate(const nn::MiniModel& knowledge_model,
                          const nn::MiniModel* greeting_model, const std::string& knowledge_answer,
                          const std::vector<Turn>& history, const DecodeConfig& cfg,
                          const RerankWeights& mu) {
  const GenerationInput input = format_generation_input(knowledge_answer, history);
  GenerationResult r;
  r.candidates = greeting_model ? segmented_generate(knowledge_model, *greeting_model, input, cfg)
                                : decode_candidates(knowledge_model, input, cfg);
  if (r.candidates.empty()) throw ModelError("generation produced no candidates");
  EmbeddingTable table(knowledge_model);
  r.chosen = postprocess_rerank(r.candidates, knowledge_answer,
                                [&](const std::string& t) { return table(t); }, mu);
  r.response = r.candidates[r.chosen].text();
  return r;
}

}  // namespace kgdial::generation
