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


#include "kgdial/pipeline.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include "kgdial/detection.hpp"
#include "kgdial/error.hpp"
#include "kgdial/evalmetrics.hpp"
#include "kgdial/formatting.hpp"
#include "kgdial/selection.hpp"
#include "kgdial/textsim.hpp"

namespace kgdial::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Rejects keys outside `allowed` so a typo in a config file is not silently
// ignored.
void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError("config: '" + where + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.contains(k)) throw ValidationError("config: unknown key '" + where + "." + k + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

const json& sub(const json& j, const char* key) {
  static const json empty = json::object();
  return j.contains(key) ? j.at(key) : empty;
}

nn::ModelConfig model_config(const PipelineConfig& cfg, std::uint64_t salt) {
  nn::ModelConfig m;
  m.d_model = cfg.model.d_model;
  m.n_heads = cfg.model.n_heads;
  m.n_layers = cfg.model.n_layers;
  m.d_ff = cfg.model.d_ff;
  m.latent_k = cfg.model.latent_k;
  m.max_seq = cfg.model.max_seq;
  m.init_std = cfg.model.init_std;
  m.seed = cfg.seed * 1000 + salt;
  return m;
}

nn::TrainConfig train_config(const PipelineConfig& cfg, std::uint64_t salt) {
  nn::TrainConfig t;
  t.adam.lr = cfg.training.lr;
  t.adam.clip_norm = cfg.training.clip_norm;
  t.steps = cfg.training.max_steps;
  t.epochs = cfg.training.epochs;
  t.batch_size = cfg.training.batch_size;
  t.grad_accum = cfg.training.grad_accum;
  t.target_epoch_loss = cfg.training.target_epoch_loss;
  t.seed = cfg.seed * 1000 + salt;
  return t;
}

nn::Vocab encoder_vocab(const KnowledgeBase& kb, const std::vector<DialogueLog>& dialogues) {
  auto texts = vocabulary_texts(kb, dialogues);
  for (const auto& t : detection::domain_tags()) texts.push_back(t);
  return nn::build_vocab(texts);
}

void save(const fs::path& path, const nn::MiniModel& model, const std::string& subtask,
          const PipelineConfig& cfg) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  nn::save_checkpoint(path, model, {{"subtask", subtask}, {"config", cfg.to_json()}});
}

bool uses_rr(SelectionMethod m) { return m != SelectionMethod::kThreeStep; }
bool uses_ts(SelectionMethod m) { return m != SelectionMethod::kRetrieveRank; }

std::vector<Turn> turns_of(const DialogueLog& d) { return d.turns; }

}  // namespace

// ---- Config ----

std::string to_string(SelectionMethod m) {
  switch (m) {
    case SelectionMethod::kRetrieveRank: return "retrieve_rank";
    case SelectionMethod::kThreeStep: return "three_step";
    case SelectionMethod::kEnsemble: return "ensemble";
  }
  return "ensemble";
}

SelectionMethod selection_method_from_string(const std::string& s) {
  if (s == "retrieve_rank") return SelectionMethod::kRetrieveRank;
  if (s == "three_step") return SelectionMethod::kThreeStep;
  if (s == "ensemble") return SelectionMethod::kEnsemble;
  throw ValidationError("config: unknown selection method '" + s + "'");
}

void PipelineConfig::validate() const {
  retrieval.validate();
  model_config(*this, 0).validate();
  if (training.lr < 0.0) throw ValidationError("config: training.lr must be >= 0");
  if (training.batch_size == 0 || training.grad_accum == 0 || training.max_steps == 0) {
    throw ValidationError("config: batch_size, grad_accum and max_steps must be positive");
  }
  if (decode.groups == 0 || decode.beams == 0 || decode.max_len == 0) {
    throw ValidationError("config: decode groups, beams and max_len must be positive");
  }
}

json PipelineConfig::to_json() const {
  return {
      {"paths",
       {{"knowledge", paths.knowledge},
        {"logs", paths.logs},
        {"labels", paths.labels},
        {"checkpoints", paths.checkpoints},
        {"output", paths.output}}},
      {"retrieval",
       {{"tau", retrieval.tau},
        {"fuzzy_window", retrieval.fuzzy_window},
        {"fuzzy_top_k", retrieval.fuzzy_top_k}}},
      {"model",
       {{"d_model", model.d_model},
        {"n_heads", model.n_heads},
        {"n_layers", model.n_layers},
        {"d_ff", model.d_ff},
        {"latent_k", model.latent_k},
        {"max_seq", model.max_seq},
        {"init_std", model.init_std}}},
      {"training",
       {{"lr", training.lr},
        {"batch_size", training.batch_size},
        {"epochs", training.epochs},
        {"grad_accum", training.grad_accum},
        {"max_steps", training.max_steps},
        {"clip_norm", training.clip_norm},
        {"negatives", training.negatives},
        {"target_epoch_loss", training.target_epoch_loss}}},
      {"decode", decode.to_json()},
      {"lambda", lambda.to_json()},
      {"mu", mu.to_json()},
      {"selection", to_string(selection)},
      {"copy", copy},
      {"srg", srg},
      {"seed", seed},
  };
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  check_keys(j, "<root>", {"paths", "retrieval", "model", "training", "decode", "lambda", "mu",
                           "selection", "copy", "srg", "seed"});
  PipelineConfig c;
  const json& p = sub(j, "paths");
  check_keys(p, "paths", {"knowledge", "logs", "labels", "checkpoints", "output"});
  read(p, "knowledge", c.paths.knowledge);
  read(p, "logs", c.paths.logs);
  read(p, "labels", c.paths.labels);
  read(p, "checkpoints", c.paths.checkpoints);
  read(p, "output", c.paths.output);

  const json& r = sub(j, "retrieval");
  check_keys(r, "retrieval", {"tau", "fuzzy_window", "fuzzy_top_k"});
  read(r, "tau", c.retrieval.tau);
  read(r, "fuzzy_window", c.retrieval.fuzzy_window);
  read(r, "fuzzy_top_k", c.retrieval.fuzzy_top_k);

  const json& m = sub(j, "model");
  check_keys(m, "model",
             {"d_model", "n_heads", "n_layers", "d_ff", "latent_k", "max_seq", "init_std"});
  read(m, "d_model", c.model.d_model);
  read(m, "n_heads", c.model.n_heads);
  read(m, "n_layers", c.model.n_layers);
  read(m, "d_ff", c.model.d_ff);
  read(m, "latent_k", c.model.latent_k);
  read(m, "max_seq", c.model.max_seq);
  read(m, "init_std", c.model.init_std);

  const json& t = sub(j, "training");
  check_keys(t, "training", {"lr", "batch_size", "epochs", "grad_accum", "max_steps", "clip_norm",
                             "negatives", "target_epoch_loss"});
  read(t, "lr", c.training.lr);
  read(t, "batch_size", c.training.batch_size);
  read(t, "epochs", c.training.epochs);
  read(t, "grad_accum", c.training.grad_accum);
  read(t, "max_steps", c.training.max_steps);
  read(t, "clip_norm", c.training.clip_norm);
  read(t, "negatives", c.training.negatives);
  read(t, "target_epoch_loss", c.training.target_epoch_loss);

  const json& d = sub(j, "decode");
  check_keys(d, "decode", {"groups", "beams", "max_len", "ffbs", "sample_z", "seed"});
  const json& l = sub(j, "lambda");
  check_keys(l, "lambda", {"lambda1", "lambda2", "lambda3", "lambda4"});
  const json& u = sub(j, "mu");
  check_keys(u, "mu", {"mu1", "mu2", "mu3"});
  try {
    c.decode = generation::DecodeConfig::from_json(d);
    c.lambda = generation::LossWeights::from_json(l);
    c.mu = generation::RerankWeights::from_json(u);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: bad value: ") + e.what());
  }

  std::string sel = to_string(c.selection);
  read(j, "selection", sel);
  c.selection = selection_method_from_string(sel);
  read(j, "copy", c.copy);
  read(j, "srg", c.srg);
  read(j, "seed", c.seed);
  c.validate();
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  return PipelineConfig::from_json(read_json_file(path));
}

fs::path write_snapshot(const PipelineConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  const fs::path path = dir / "config.snapshot.json";
  write_json_file(path, cfg.to_json());
  return path;
}

// ---- Checkpoints ----

std::string to_string(Subtask s) {
  switch (s) {
    case Subtask::kDetection: return "detection";
    case Subtask::kSelection: return "selection";
    case Subtask::kGeneration: return "generation";
  }
  return "?";
}

CheckpointFiles checkpoint_files(const PipelineConfig& cfg) {
  const fs::path dir = cfg.paths.checkpoints;
  return {dir / "detection.json", dir / "selection_rr.json", dir / "selection_3s.json",
          dir / "generation.json", dir / "greeting.json"};
}

// ---- Training ----

json TrainSummary::to_json() const {
  json runs_j = json::object();
  for (const auto& [name, r] : runs) {
    runs_j[name] = {{"steps", r.steps},
                    {"first_loss", r.loss_curve.empty() ? 0.0 : r.loss_curve.front()},
                    {"final_loss", r.loss_curve.empty() ? 0.0 : r.loss_curve.back()}};
  }
  return {{"subtask", subtask}, {"runs", runs_j}};
}

TrainSummary train_detection(const PipelineConfig& cfg, const KnowledgeBase& kb,
                             const std::vector<DialogueLog>& dialogues) {
  cfg.validate();
  nn::MiniModel model(model_config(cfg, 1), encoder_vocab(kb, dialogues));
  const auto examples = detection::make_examples(dialogues, kb, cfg.retrieval);
  TrainSummary s{"detection", {}};
  s.runs.emplace_back("detection",
                      detection::train_detection(model, examples, train_config(cfg, 1)));
  save(checkpoint_files(cfg).detection, model, "detection", cfg);
  return s;
}

TrainSummary train_selection(const PipelineConfig& cfg, const KnowledgeBase& kb,
                             const std::vector<DialogueLog>& dialogues) {
  cfg.validate();
  const auto examples = selection::make_examples(dialogues, kb);
  if (examples.empty()) throw ValidationError("train selection: no labeled knowledge-seeking dialogues");
  const nn::Vocab vocab = encoder_vocab(kb, dialogues);
  const auto files = checkpoint_files(cfg);
  TrainSummary s{"selection", {}};
  if (uses_rr(cfg.selection)) {
    selection::SelectionTrainConfig sc{train_config(cfg, 2), cfg.training.negatives, cfg.retrieval};
    nn::MiniModel model(model_config(cfg, 2), vocab);
    s.runs.emplace_back("retrieve_rank", selection::train_retrieve_rank(model, examples, kb, sc));
    save(files.retrieve_rank, model, "selection", cfg);
  }
  if (uses_ts(cfg.selection)) {
    selection::SelectionTrainConfig sc{train_config(cfg, 3), cfg.training.negatives, cfg.retrieval};
    nn::MiniModel model(model_config(cfg, 3), vocab);
    s.runs.emplace_back("three_step", selection::train_three_step(model, examples, kb, sc));
    save(files.three_step, model, "selection", cfg);
  }
  return s;
}

TrainSummary train_generation(const PipelineConfig& cfg, const KnowledgeBase& kb,
                              const std::vector<DialogueLog>& dialogues) {
  cfg.validate();
  const nn::Vocab vocab = generation::generation_vocab(dialogues);
  const auto files = checkpoint_files(cfg);
  TrainSummary s{"generation", {}};
  auto run = [&](generation::Part part, std::uint64_t salt, const fs::path& path,
                 const std::string& name) {
    const auto examples = generation::make_examples(vocab, dialogues, kb, part);
    if (examples.empty()) throw ValidationError("train generation: no usable examples for " + name);
    generation::GenerationTrainConfig gc{train_config(cfg, salt), cfg.lambda, cfg.copy};
    nn::MiniModel model(model_config(cfg, salt), vocab);
    s.runs.emplace_back(name, generation::train_generator(model, examples, gc));
    save(path, model, "generation", cfg);
  };
  if (cfg.srg) {
    run(generation::Part::kKnowledge, 4, files.generation, "knowledge");
    run(generation::Part::kGreeting, 5, files.greeting, "greeting");
  } else {
    run(generation::Part::kFull, 4, files.generation, "full");
  }
  return s;
}

// ---- Inference ----

Models Models::load(const PipelineConfig& cfg, const std::vector<Subtask>& needed) {
  const auto files = checkpoint_files(cfg);
  nn::ModelConfig expected = model_config(cfg, 0);
  auto get = [&](Subtask s, const fs::path& path) {
    if (!fs::exists(path)) {
      throw CheckpointError("missing checkpoint for subtask '" + to_string(s) + "': " +
                            path.string());
    }
    return nn::load_checkpoint(path, &expected).model;
  };
  Models m;
  for (Subtask s : needed) {
    switch (s) {
      case Subtask::kDetection:
        m.det_.emplace(get(s, files.detection));
        break;
      case Subtask::kSelection:
        if (uses_rr(cfg.selection)) m.rr_.emplace(get(s, files.retrieve_rank));
        if (uses_ts(cfg.selection)) m.ts_.emplace(get(s, files.three_step));
        break;
      case Subtask::kGeneration:
        m.gen_.emplace(get(s, files.generation));
        if (cfg.srg) m.greet_.emplace(get(s, files.greeting));
        break;
    }
  }
  return m;
}

const nn::MiniModel& Models::detection() const {
  if (!det_) throw CheckpointError("detection model not loaded");
  return *det_;
}

const nn::MiniModel& Models::generation() const {
  if (!gen_) throw CheckpointError("generation model not loaded");
  return *gen_;
}

json detect_one(const PipelineConfig& cfg, const Models& models, const KnowledgeBase& kb,
                const DialogueLog& dialogue) {
  const auto d = detection::detect(models.detection(),
                                   detection::format_detection_input(dialogue, kb, cfg.retrieval));
  return {{"target", d.target}, {"prob", d.prob}};
}

namespace {

selection::SelectionResult select_result(const PipelineConfig& cfg, const Models& models,
                                         const KnowledgeBase& kb, const DialogueLog& dialogue) {
  switch (cfg.selection) {
    case SelectionMethod::kRetrieveRank:
      if (!models.retrieve_rank()) throw CheckpointError("selection model not loaded");
      return selection::retrieve_and_rank(*models.retrieve_rank(), dialogue, kb, cfg.retrieval);
    case SelectionMethod::kThreeStep:
      if (!models.three_step()) throw CheckpointError("selection model not loaded");
      return selection::three_step_select(*models.three_step(), dialogue, kb);
    case SelectionMethod::kEnsemble: {
      if (!models.retrieve_rank() || !models.three_step()) {
        throw CheckpointError("selection models not loaded");
      }
      selection::RetrieveRankScorer a(*models.retrieve_rank(), dialogue, kb, cfg.retrieval);
      selection::ThreeStepScorer b(*models.three_step(), dialogue, kb);
      return selection::ensemble_select(a, b, kb);
    }
  }
  throw ValidationError("unknown selection method");
}

}  // namespace

json select_one(const PipelineConfig& cfg, const Models& models, const KnowledgeBase& kb,
                const DialogueLog& dialogue) {
  return select_result(cfg, models, kb, dialogue).to_json();
}

json generate_one(const PipelineConfig& cfg, const Models& models,
                  const KnowledgeSnippet& snippet, const DialogueLog& dialogue) {
  return generation::generate(models.generation(), models.greeting(), snippet.answer,
                              turns_of(dialogue), cfg.decode, cfg.mu)
      .to_json();
}

json run_one(const PipelineConfig& cfg, const Models& models, const KnowledgeBase& kb,
             const DialogueLog& dialogue) {
  json out = detect_one(cfg, models, kb, dialogue);
  if (!out["target"].get<bool>()) return {{"target", false}};
  const auto sel = select_result(cfg, models, kb, dialogue);
  out.update(sel.to_json());
  out.update(generate_one(cfg, models, sel.chosen(), dialogue));
  return out;
}

std::vector<json> run_pipeline(const PipelineConfig& cfg, const Models& models,
                               const KnowledgeBase& kb, const std::vector<DialogueLog>& dialogues) {
  std::vector<json> out;
  out.reserve(dialogues.size());
  for (const auto& d : dialogues) out.push_back(run_one(cfg, models, kb, d));
  return out;
}

std::vector<json> run_pipeline(const PipelineConfig& cfg, const KnowledgeBase& kb,
                               const std::vector<DialogueLog>& dialogues) {
  const Models models =
      Models::load(cfg, {Subtask::kDetection, Subtask::kSelection, Subtask::kGeneration});
  return run_pipeline(cfg, models, kb, dialogues);
}

// ---- Evaluation ----

json evaluate(const PipelineConfig& cfg, const Models& models, const KnowledgeBase& kb,
              const std::vector<DialogueLog>& dialogues) {
  std::vector<bool> pred, gold;
  std::vector<selection::SelectionResult> selections;
  std::vector<SnippetKey> gold_keys;
  std::vector<eval::Tokens> cands, refs;
  for (const auto& d : dialogues) {
    if (!d.label) throw ValidationError("evaluate: every dialogue needs a label");
    pred.push_back(detect_one(cfg, models, kb, d)["target"].get<bool>());
    gold.push_back(d.label->target);
    if (!d.label->target || !d.label->knowledge || !d.label->response) continue;
    const KnowledgeSnippet* snippet = kb.find(*d.label->knowledge);
    if (!snippet) {
      throw ValidationError("evaluate: gold snippet " + d.label->knowledge->to_string() +
                            " is not in the knowledge base");
    }
    selections.push_back(select_result(cfg, models, kb, d));
    gold_keys.push_back(*d.label->knowledge);
    const auto g = generation::generate(models.generation(), models.greeting(), snippet->answer,
                                        d.turns, cfg.decode, cfg.mu);
    cands.push_back(textsim::tokens_of(g.response));
    refs.push_back(textsim::tokens_of(*d.label->response));
  }
  eval::MetricReport report;
  const auto prf = eval::precision_recall_f1(pred, gold);
  report.precision = prf.precision;
  report.recall = prf.recall;
  report.f1 = prf.f1;
  if (!gold_keys.empty()) {
    const auto sel = selection::evaluate_selection(selections, gold_keys);
    report.mrr_at_5 = sel.mrr_at_5;
    report.recall_at_1 = sel.recall_at_1;
    report.recall_at_5 = sel.recall_at_5;
    const auto gen = eval::generation_report(cands, refs);
    report.bleu_1 = gen.bleu_1;
    report.bleu_2 = gen.bleu_2;
    report.bleu_3 = gen.bleu_3;
    report.bleu_4 = gen.bleu_4;
    report.rouge_1 = gen.rouge_1;
    report.rouge_2 = gen.rouge_2;
    report.rouge_l = gen.rouge_l;
  }
  return report.to_json();
}

// ---- Chat ----

int chat_repl(const PipelineConfig& cfg, const Models& models, const KnowledgeBase& kb,
              std::istream& in, std::ostream& out, bool verbose) {
  DialogueLog log;
  std::string line;
  auto help = [&] { out << "commands: /reset clears the dialogue, /quit exits\n"; };
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    line = line.substr(first, line.find_last_not_of(" \t\r") - first + 1);
    if (line.front() == '/') {
      if (line == "/quit") return 0;
      if (line == "/reset") {
        log.turns.clear();
        out << "(dialogue reset)\n";
      } else {
        help();
      }
      continue;
    }
    log.turns.push_back({Speaker::kUser, line});
    try {
      const json det = detect_one(cfg, models, kb, log);
      if (verbose) out << "[target=" << std::boolalpha << det["target"].get<bool>() << " prob=" << det["prob"] << "]\n";
      if (!det["target"].get<bool>()) {
        out << "(no knowledge needed for this turn)\n";
        continue;
      }
      const auto sel = select_result(cfg, models, kb, log);
      const auto& chosen = sel.chosen();
      const auto gen = generation::generate(models.generation(), models.greeting(), chosen.answer,
                                            log.turns, cfg.decode, cfg.mu);
      if (verbose) {
        out << "[knowledge " << chosen.key().to_string() << ": " << chosen.answer << "]\n";
        for (std::size_t i = 0; i < gen.candidates.size(); ++i) {
          const auto& c = gen.candidates[i];
          out << (i == gen.chosen ? " * " : "   ") << "s_total=" << c.s_total << " s_nll=" << c.s_nll
              << " s_bert=" << c.s_bert << " s_jwd=" << c.s_jwd << " | " << c.text() << "\n";
        }
      }
      out << gen.response << "\n";
      log.turns.push_back({Speaker::kSystem, gen.response});
    } catch (const DataError& e) {
      out << "(error: " << e.what() << ")\n";
    }
  }
  return 0;
}

}  // namespace kgdial::pipeline
