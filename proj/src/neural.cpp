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

#include "kgdial/neural.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "kgdial/corpus.hpp"
#include "kgdial/error.hpp"
#include "kgdial/textsim.hpp"

namespace kgdial::nn {

// ---- Vocab ----

const std::vector<std::string>& Vocab::special_tokens() {
  static const std::vector<std::string> s = {"<pad>", "<unk>", "<bos>", "<eos>",
                                             "<sep>", "<sp1>", "<sp2>"};
  return s;
}

Vocab::Vocab() : tokens_(special_tokens()) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<int>(i));
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  const auto& specials = special_tokens();
  if (tokens.size() < specials.size() ||
      !std::equal(specials.begin(), specials.end(), tokens.begin())) {
    throw ValidationError("vocabulary must start with the special tokens");
  }
  Vocab v;
  v.tokens_ = std::move(tokens);
  v.index_.clear();
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], static_cast<int>(i)).second) {
      throw ValidationError("duplicate vocabulary entry: " + v.tokens_[i]);
    }
  }
  return v;
}

int Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(const std::string& token) const { return index_.contains(token); }

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("token id out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

Vocab build_vocab(const std::vector<std::string>& texts, std::size_t min_freq) {
  if (texts.empty()) throw ValidationError("cannot build a vocabulary from an empty corpus");
  std::map<std::string, std::size_t> freq;
  for (const auto& t : texts) {
    for (auto& tok : textsim::tokens_of(t)) ++freq[std::move(tok)];
  }
  std::vector<std::string> tokens = Vocab::special_tokens();
  for (const auto& [tok, n] : freq) {
    if (n >= std::max<std::size_t>(min_freq, 1)) tokens.push_back(tok);
  }
  return Vocab::from_tokens(std::move(tokens));
}

// ---- Masks ----

void MaskSpec::validate(std::size_t seq_len) const {
  std::vector<Span> spans;
  for (const Span* s : {&knowledge, &context, &response}) {
    if (s->begin > s->end) throw ValidationError("mask span has begin > end");
    if (s->end > seq_len) throw ValidationError("mask span exceeds sequence length");
    if (!s->empty()) spans.push_back(*s);
  }
  if (kind == MaskKind::kTrapezoidal && response.empty()) {
    throw ValidationError("trapezoidal mask requires a response span");
  }
  if (spans.empty()) return;
  std::sort(spans.begin(), spans.end(),
            [](const Span& a, const Span& b) { return a.begin < b.begin; });
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (spans[i].begin < spans[i - 1].end) throw ValidationError("mask spans overlap");
  }
  std::size_t pos = 0;
  for (const auto& s : spans) {
    if (s.begin != pos) throw ValidationError("mask spans do not partition the sequence");
    pos = s.end;
  }
  if (pos != seq_len) throw ValidationError("mask spans do not partition the sequence");
}

Mask build_mask(const MaskSpec& spec, std::size_t seq_len) {
  spec.validate(seq_len);
  const auto n = static_cast<Eigen::Index>(seq_len);
  Mask m(n, n);
  switch (spec.kind) {
    case MaskKind::kBidirectional:
      m.setOnes();
      break;
    case MaskKind::kCausal:
      m.setZero();
      for (Eigen::Index i = 0; i < n; ++i) m.row(i).head(i + 1).setOnes();
      break;
    case MaskKind::kTrapezoidal:
      m.setZero();
      for (std::size_t i = 0; i < seq_len; ++i) {
        const bool row_resp = spec.response.contains(i);
        for (std::size_t j = 0; j < seq_len; ++j) {
          const bool col_resp = spec.response.contains(j);
          bool visible;
          if (!col_resp) {
            visible = true;
          } else {
            visible = row_resp && j <= i;
          }
          m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = visible ? 1 : 0;
        }
      }
      break;
  }
  return m;
}

// ---- Model ----

void ModelConfig::validate() const {
  if (vocab_size < static_cast<std::size_t>(Vocab::kNumSpecials)) {
    throw ValidationError("vocab_size smaller than the special-token block");
  }
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    throw ValidationError("d_model must be a positive multiple of n_heads");
  }
  if (n_layers == 0 || d_ff == 0 || max_seq < 4 || latent_k == 0) {
    throw ValidationError("n_layers, d_ff, latent_k must be positive and max_seq >= 4");
  }
  if (!(init_std > 0.0)) throw ValidationError("init_std must be positive");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"vocab_size", vocab_size}, {"d_model", d_model},   {"n_heads", n_heads},
          {"n_layers", n_layers},     {"d_ff", d_ff},         {"max_seq", max_seq},
          {"latent_k", latent_k},     {"init_std", init_std}, {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.d_model = j.value("d_model", c.d_model);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.max_seq = j.value("max_seq", c.max_seq);
  c.latent_k = j.value("latent_k", c.latent_k);
  c.init_std = j.value("init_std", c.init_std);
  c.seed = j.value("seed", c.seed);
  return c;
}

namespace {

std::string layer_name(std::size_t l, const char* part) {
  return "layer" + std::to_string(l) + "." + part;
}

}  // namespace

MiniModel::MiniModel(ModelConfig config, Vocab vocab)
    : config_(std::move(config)), vocab_(std::move(vocab)), init_rng_(config_.seed) {
  config_.vocab_size = vocab_.size();
  config_.validate();
  const std::size_t d = config_.d_model;
  add_parameter("tok_emb", config_.vocab_size, d, Init::kNormal);
  add_parameter("pos_emb", config_.max_seq, d, Init::kNormal);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    add_parameter(layer_name(l, "ln1.g"), 1, d, Init::kOnes);
    add_parameter(layer_name(l, "ln1.b"), 1, d, Init::kZeros);
    add_parameter(layer_name(l, "qkv.w"), d, 3 * d, Init::kNormal);
    add_parameter(layer_name(l, "qkv.b"), 1, 3 * d, Init::kZeros);
    add_parameter(layer_name(l, "out.w"), d, d, Init::kNormal);
    add_parameter(layer_name(l, "out.b"), 1, d, Init::kZeros);
    add_parameter(layer_name(l, "ln2.g"), 1, d, Init::kOnes);
    add_parameter(layer_name(l, "ln2.b"), 1, d, Init::kZeros);
    add_parameter(layer_name(l, "ff1.w"), d, config_.d_ff, Init::kNormal);
    add_parameter(layer_name(l, "ff1.b"), 1, config_.d_ff, Init::kZeros);
    add_parameter(layer_name(l, "ff2.w"), config_.d_ff, d, Init::kNormal);
    add_parameter(layer_name(l, "ff2.b"), 1, d, Init::kZeros);
  }
  add_parameter("ln_f.g", 1, d, Init::kOnes);
  add_parameter("ln_f.b", 1, d, Init::kZeros);
}

Tensor& MiniModel::add_parameter(const std::string& name, std::size_t rows,
                                 std::size_t cols, Init init) {
  auto it = params_.find(name);
  if (it != params_.end()) {
    if (static_cast<std::size_t>(it->second.rows()) != rows ||
        static_cast<std::size_t>(it->second.cols()) != cols) {
      throw std::invalid_argument("parameter " + name + " re-added with a different shape");
    }
    return it->second;
  }
  const auto r = static_cast<Eigen::Index>(rows);
  const auto c = static_cast<Eigen::Index>(cols);
  Matrix m;
  switch (init) {
    case Init::kZeros:
      m = Matrix::Zero(r, c);
      break;
    case Init::kOnes:
      m = Matrix::Ones(r, c);
      break;
    case Init::kNormal:
      m.resize(r, c);
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = config_.init_std * init_rng_.normal();
      }
      break;
  }
  return params_.emplace(name, Tensor::parameter(std::move(m))).first->second;
}

bool MiniModel::has_parameter(const std::string& name) const {
  return params_.contains(name);
}

Tensor& MiniModel::parameter(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter " + name);
  return it->second;
}

const Tensor& MiniModel::parameter(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter " + name);
  return it->second;
}

std::size_t MiniModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += static_cast<std::size_t>(p.value().size());
  return n;
}

void MiniModel::require_trained(const std::string& head) const {
  if (!is_trained(head)) {
    throw NotTrainedError("model head '" + head + "' has not been trained");
  }
}

namespace {

void shift_after(Span& s, std::size_t pivot, std::size_t by) {
  if (!s.empty() && s.begin >= pivot) {
    s.begin -= by;
    s.end -= by;
  }
}

}  // namespace

ForwardResult MiniModel::forward(const ModelInput& input,
                                 const Tensor* first_row_offset) const {
  ForwardResult out;
  out.ids = input.ids;
  out.mask = input.mask;
  if (out.ids.empty()) throw ValidationError("forward: empty input");
  input.mask.validate(out.ids.size());

  if (out.ids.size() > config_.max_seq) {
    const std::size_t excess = out.ids.size() - config_.max_seq;
    const Span ctx = input.mask.context;
    if (ctx.size() < excess) {
      throw ValidationError("input exceeds max_seq and the context span cannot absorb it");
    }
    std::size_t drop = excess;
    if (!input.context_breaks.empty()) {
      // Smallest whole-utterance prefix that covers the excess.
      drop = ctx.size();
      for (std::size_t b : input.context_breaks) {
        if (b > ctx.begin && b <= ctx.end && b - ctx.begin >= excess) {
          drop = std::min(drop, b - ctx.begin);
        }
      }
    }
    out.ids.erase(out.ids.begin() + static_cast<std::ptrdiff_t>(ctx.begin),
                  out.ids.begin() + static_cast<std::ptrdiff_t>(ctx.begin + drop));
    out.mask.context.end -= drop;
    shift_after(out.mask.knowledge, ctx.end, drop);
    shift_after(out.mask.response, ctx.end, drop);
    out.truncated = true;
    out.dropped = drop;
  }

  for (int id : out.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
      throw ValidationError("forward: token id outside the vocabulary");
    }
  }

  const std::size_t n = out.ids.size();
  const auto ni = static_cast<Eigen::Index>(n);
  const auto d = static_cast<Eigen::Index>(config_.d_model);
  const auto H = static_cast<Eigen::Index>(config_.n_heads);
  const Eigen::Index dh = d / H;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Mask mask = build_mask(out.mask, n);

  Tensor x = add(gather_rows(parameter("tok_emb"), out.ids),
                 slice_rows(parameter("pos_emb"), 0, ni));
  if (first_row_offset) x = add_to_row(x, *first_row_offset, 0);

  out.attention.resize(config_.n_layers);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    auto p = [&](const char* part) -> const Tensor& { return parameter(layer_name(l, part)); };
    Tensor h = layer_norm_rows(x, p("ln1.g"), p("ln1.b"));
    Tensor qkv = add_row(matmul(h, p("qkv.w")), p("qkv.b"));
    std::vector<Tensor> heads;
    heads.reserve(static_cast<std::size_t>(H));
    for (Eigen::Index hd = 0; hd < H; ++hd) {
      Tensor q = slice_cols(qkv, hd * dh, dh);
      Tensor k = slice_cols(qkv, d + hd * dh, dh);
      Tensor v = slice_cols(qkv, 2 * d + hd * dh, dh);
      Tensor a = softmax_rows(scale(matmul_nt(q, k), inv_sqrt), &mask);
      out.attention[l].push_back(a);
      heads.push_back(matmul(a, v));
    }
    Tensor attn = add_row(matmul(concat_cols(heads), p("out.w")), p("out.b"));
    x = add(x, attn);
    Tensor h2 = layer_norm_rows(x, p("ln2.g"), p("ln2.b"));
    Tensor ff = add_row(matmul(gelu(add_row(matmul(h2, p("ff1.w")), p("ff1.b"))), p("ff2.w")),
                        p("ff2.b"));
    x = add(x, ff);
  }
  out.hidden = layer_norm_rows(x, parameter("ln_f.g"), parameter("ln_f.b"));
  return out;
}

std::uint64_t MiniModel::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [name, p] : params_) {
    mix(name.data(), name.size());
    mix(p.value().data(), static_cast<std::size_t>(p.value().size()) * sizeof(double));
  }
  return h;
}

bool MiniModel::all_finite() const {
  for (const auto& [_, p] : params_) {
    if (!p.value().allFinite()) return false;
  }
  return true;
}

void MiniModel::zero_grad() {
  for (auto& [_, p] : params_) p.zero_grad();
}

// ---- Training ----

void Adam::step(std::map<std::string, Tensor>& params) {
  ++t_;
  double scale_factor = 1.0;
  if (cfg_.clip_norm > 0.0) {
    double sq = 0.0;
    for (auto& [_, p] : params) {
      if (p.has_grad()) sq += p.node()->grad.squaredNorm();
    }
    const double norm = std::sqrt(sq);
    if (norm > cfg_.clip_norm) scale_factor = cfg_.clip_norm / norm;
  }
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    const Matrix g = p.node()->grad * scale_factor;
    auto [it, inserted] = moments_.try_emplace(name);
    auto& [m, v] = it->second;
    if (inserted) {
      m = Matrix::Zero(g.rows(), g.cols());
      v = Matrix::Zero(g.rows(), g.cols());
    }
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    p.mutable_value().array() -=
        cfg_.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg_.eps);
    p.zero_grad();
  }
}

TrainResult train(MiniModel& model, std::size_t n_examples, const ExampleLoss& loss,
                  const TrainConfig& cfg) {
  if (n_examples == 0) throw ValidationError("train: no examples");
  if (cfg.batch_size == 0) throw ValidationError("train: batch_size must be positive");
  if (cfg.grad_accum == 0) throw ValidationError("train: grad_accum must be positive");
  if (!model.all_finite()) throw TrainingError("train: initial parameters are not finite");

  Rng rng(cfg.seed);
  Adam adam(cfg.adam);
  TrainResult result;
  std::vector<std::size_t> order(n_examples);
  for (std::size_t i = 0; i < n_examples; ++i) order[i] = i;
  rng.shuffle(order);
  std::size_t pos = 0;
  const std::size_t batch = std::min(cfg.batch_size * cfg.grad_accum, n_examples);
  const double inv_batch = 1.0 / static_cast<double>(batch);
  std::size_t max_steps = cfg.steps;
  if (cfg.epochs > 0) {
    max_steps = std::min(max_steps, cfg.epochs * ((n_examples + batch - 1) / batch));
  }
  double epoch_sum = 0.0;
  std::size_t epoch_count = 0;

  model.zero_grad();
  for (std::size_t step = 0; step < max_steps; ++step) {
    double batch_loss = 0.0;
    bool epoch_done = false;
    for (std::size_t b = 0; b < batch; ++b) {
      if (pos == n_examples) {
        rng.shuffle(order);
        pos = 0;
      }
      const std::size_t idx = order[pos++];
      Tensor l = loss(idx, rng);
      const double v = l.item();
      if (!std::isfinite(v)) {
        throw TrainingError("non-finite loss at step " + std::to_string(step) +
                            ", example " + std::to_string(idx));
      }
      backward(scale(l, inv_batch));
      batch_loss += v;
      epoch_sum += v;
      ++epoch_count;
      if (epoch_count == n_examples) epoch_done = true;
    }
    adam.step(model.parameters());
    const double mean = batch_loss * inv_batch;
    result.loss_curve.push_back(mean);
    result.steps = step + 1;
    if (cfg.on_step) cfg.on_step(step, mean);
    if (epoch_done) {
      const double epoch_mean = epoch_sum / static_cast<double>(epoch_count);
      epoch_sum = 0.0;
      epoch_count = 0;
      if (cfg.target_epoch_loss > 0.0 && epoch_mean < cfg.target_epoch_loss) break;
    }
  }
  if (!model.all_finite()) throw TrainingError("train: parameters became non-finite");
  return result;
}

GradCheckResult grad_check(MiniModel& model, const std::function<Tensor()>& loss,
                           std::size_t samples_per_tensor, std::uint64_t seed,
                           double step) {
  model.zero_grad();
  backward(loss());
  std::map<std::string, Matrix> analytic;
  for (auto& [name, p] : model.parameters()) analytic[name] = p.grad();
  model.zero_grad();

  auto value = [&]() {
    NoGradGuard guard;
    return loss().item();
  };

  Rng rng(seed);
  GradCheckResult result;
  for (auto& [name, p] : model.parameters()) {
    const Matrix& g = analytic[name];
    std::vector<Eigen::Index> touched;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      if (std::abs(g.data()[i]) > 1e-10) touched.push_back(i);  // skip round-off zeros
    }
    std::vector<Eigen::Index> picks;
    const std::size_t pool = touched.empty() ? static_cast<std::size_t>(g.size()) : touched.size();
    for (std::size_t k : rng.sample_indices(pool, samples_per_tensor)) {
      picks.push_back(touched.empty() ? static_cast<Eigen::Index>(k) : touched[k]);
    }
    for (Eigen::Index i : picks) {
      double& w = p.mutable_value().data()[i];
      const double orig = w;
      w = orig + step;
      const double up = value();
      w = orig - step;
      const double down = value();
      w = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = g.data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      const double rel = std::abs(a - numeric) / denom;
      ++result.checked;
      if (rel > result.max_rel_error || result.worst_parameter.empty()) {
        result.max_rel_error = std::max(rel, result.max_rel_error);
        result.worst_parameter = name;
      }
    }
  }
  return result;
}

// ---- Checkpoints ----

void save_checkpoint(const std::filesystem::path& path, const MiniModel& model,
                     const nlohmann::json& meta) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, p] : model.parameters()) {
    const Matrix& v = p.value();
    params[name] = {{"rows", v.rows()},
                    {"cols", v.cols()},
                    {"data", std::vector<double>(v.data(), v.data() + v.size())}};
  }
  nlohmann::json j = {{"format", "kgdial-checkpoint"},
                      {"version", kCheckpointVersion},
                      {"config", model.config().to_json()},
                      {"vocab", model.vocab().tokens()},
                      {"trained_heads", model.trained_heads()},
                      {"params", std::move(params)},
                      {"meta", meta}};
  write_json_file(path, j, -1);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const ModelConfig* expected) {
  nlohmann::json j;
  try {
    j = read_json_file(path);
  } catch (const Error& e) {
    throw CheckpointError(std::string("cannot read checkpoint: ") + e.what());
  }
  try {
    if (j.at("format") != "kgdial-checkpoint") throw CheckpointError("not a kgdial checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint version " + j.at("version").dump());
    }
    ModelConfig cfg = ModelConfig::from_json(j.at("config"));
    if (expected) {
      if (expected->d_model != cfg.d_model) {
        throw CheckpointError("checkpoint d_model " + std::to_string(cfg.d_model) +
                              " does not match expected " + std::to_string(expected->d_model));
      }
      if (expected->latent_k != cfg.latent_k) {
        throw CheckpointError("checkpoint latent K " + std::to_string(cfg.latent_k) +
                              " does not match expected " + std::to_string(expected->latent_k));
      }
    }
    Vocab vocab = Vocab::from_tokens(j.at("vocab").get<std::vector<std::string>>());
    MiniModel model(cfg, std::move(vocab));
    for (const auto& [name, entry] : j.at("params").items()) {
      const auto rows = entry.at("rows").get<std::size_t>();
      const auto cols = entry.at("cols").get<std::size_t>();
      const auto data = entry.at("data").get<std::vector<double>>();
      if (data.size() != rows * cols) throw CheckpointError("parameter " + name + " size mismatch");
      Tensor& p = model.add_parameter(name, rows, cols, Init::kZeros);
      std::copy(data.begin(), data.end(), p.mutable_value().data());
    }
    for (const auto& h : j.at("trained_heads")) model.mark_trained(h.get<std::string>());
    if (!model.all_finite()) throw CheckpointError("checkpoint holds non-finite parameters");
    return {std::move(model), j.value("meta", nlohmann::json::object())};
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace kgdial::nn
