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


// kgdial command-line entrypoint.
// Exit codes: 0 ok, 1 usage, 2 data error, 3 model error.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kgdial/corpus.hpp"
#include "kgdial/error.hpp"
#include "kgdial/pipeline.hpp"
#include "kgdial/rng.hpp"
#include "kgdial/selection.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kgdial;
using namespace kgdial::pipeline;

namespace {

// Flags every subcommand accepts.
struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  std::string knowledge, logs, labels, checkpoints;
};

void add_common(CLI::App* app, Common& c, bool data = true) {
  app->add_option("--seed", c.seed, "Random seed (overrides the config)");
  app->add_option("--config", c.config, "PipelineConfig JSON file")->check(CLI::ExistingFile);
  app->add_option("--out", c.out, "Output directory");
  if (data) {
    app->add_option("--knowledge", c.knowledge, "knowledge.json");
    app->add_option("--logs", c.logs, "logs.json");
    app->add_option("--labels", c.labels, "labels.json");
    app->add_option("--checkpoints", c.checkpoints, "Checkpoint directory");
  }
}

PipelineConfig resolve(const Common& c) {
  PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.paths.output = c.out;
  if (!c.knowledge.empty()) cfg.paths.knowledge = c.knowledge;
  if (!c.logs.empty()) cfg.paths.logs = c.logs;
  if (!c.labels.empty()) cfg.paths.labels = c.labels;
  if (!c.checkpoints.empty()) cfg.paths.checkpoints = c.checkpoints;
  cfg.validate();
  return cfg;
}

struct Data {
  KnowledgeBase kb;
  std::vector<DialogueLog> dialogues;
};

Data load_data(const PipelineConfig& cfg, bool need_labels) {
  std::optional<fs::path> labels;
  if (fs::exists(cfg.paths.labels)) {
    labels = cfg.paths.labels;
  } else if (need_labels) {
    throw ValidationError("labels file not found: " + cfg.paths.labels);
  }
  Data d{load_knowledge_base(cfg.paths.knowledge), load_logs(cfg.paths.logs, labels)};
  for (const auto& log : d.dialogues) validate_log(log, &d.kb);
  return d;
}

fs::path output_dir(const PipelineConfig& cfg) {
  fs::create_directories(cfg.paths.output);
  write_snapshot(cfg, cfg.paths.output);
  return cfg.paths.output;
}

void write_records(const fs::path& path, const std::vector<json>& records) {
  write_json_file(path, json(records));
  std::cout << "wrote " << path.string() << " (" << records.size() << " records)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-grounded dialogue pipeline"};
  app.require_subcommand(1);

  // gen-corpus
  Common gc;
  SyntheticSpec spec;
  auto* gen = app.add_subcommand("gen-corpus", "Write a seeded synthetic corpus");
  add_common(gen, gc, false);
  gen->add_option("--n-dialogues", spec.n_dialogues, "Number of dialogues");
  gen->add_option("--n-entities", spec.n_entities, "Entities per entity-bearing domain");
  gen->add_option("--n-docs", spec.n_docs, "Documents per entity");

  // train {detect|select|generate}
  auto* train = app.add_subcommand("train", "Train one subtask and write its checkpoint");
  train->require_subcommand(1);
  Common tc;
  std::string train_target;
  for (const char* name : {"detect", "select", "generate"}) {
    auto* s = train->add_subcommand(name, std::string("Train ") + name);
    add_common(s, tc);
    s->callback([&train_target, name] { train_target = name; });
  }

  Common dc, sc, gnc, ec, pc, cc, ac;
  auto* det = app.add_subcommand("detect", "Knowledge-seeking turn detection");
  add_common(det, dc);
  auto* sel = app.add_subcommand("select", "Knowledge selection");
  add_common(sel, sc);
  auto* gnr = app.add_subcommand("generate", "Response generation from labeled knowledge");
  add_common(gnr, gnc);
  auto* ev = app.add_subcommand("eval", "Score all subtasks against labels");
  add_common(ev, ec);
  auto* pipe = app.add_subcommand("pipeline", "Run detect -> select -> generate");
  add_common(pipe, pc);
  auto* chat = app.add_subcommand("chat", "Interactive session on stdin/stdout");
  add_common(chat, cc);
  bool verbose = false;
  chat->add_flag("-v,--verbose", verbose, "Print detection, selection and candidate scores");

  std::size_t per_entity = 100;
  double shift_prob = 0.8;
  auto* aug = app.add_subcommand("augment", "Synthesize selection dialogues from the knowledge base");
  add_common(aug, ac);
  aug->add_option("--per-entity", per_entity, "Dialogues per entity");
  aug->add_option("--shift-prob", shift_prob, "Probability of a preceding topic-shift segment");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      const PipelineConfig cfg = resolve(gc);
      spec.seed = cfg.seed;
      const auto corpus = generate_synthetic_corpus(spec);
      const fs::path dir = output_dir(cfg);
      save_knowledge_base(dir / "knowledge.json", corpus.kb);
      save_logs(dir / "logs.json", dir / "labels.json", corpus.dialogues);
      std::cout << "wrote " << corpus.dialogues.size() << " dialogues and " << corpus.kb.total()
                << " snippets to " << dir.string() << "\n";
    } else if (train->parsed()) {
      const PipelineConfig cfg = resolve(tc);
      const Data d = load_data(cfg, true);
      TrainSummary s;
      if (train_target == "detect") s = train_detection(cfg, d.kb, d.dialogues);
      if (train_target == "select") s = train_selection(cfg, d.kb, d.dialogues);
      if (train_target == "generate") s = train_generation(cfg, d.kb, d.dialogues);
      const fs::path dir = output_dir(cfg);
      write_json_file(dir / ("train_" + train_target + ".json"), s.to_json());
      std::cout << s.to_json().dump() << "\n";
    } else if (det->parsed()) {
      const PipelineConfig cfg = resolve(dc);
      const Data d = load_data(cfg, false);
      const Models m = Models::load(cfg, {Subtask::kDetection});
      std::vector<json> out;
      for (const auto& log : d.dialogues) out.push_back(detect_one(cfg, m, d.kb, log));
      write_records(output_dir(cfg) / "detect.json", out);
    } else if (sel->parsed()) {
      const PipelineConfig cfg = resolve(sc);
      const Data d = load_data(cfg, false);
      const Models m = Models::load(cfg, {Subtask::kSelection});
      std::vector<json> out;
      // Labeled non-target dialogues are skipped (null), everything else is ranked.
      for (const auto& log : d.dialogues) {
        out.push_back(log.label && !log.label->target ? json(nullptr)
                                                      : select_one(cfg, m, d.kb, log));
      }
      write_records(output_dir(cfg) / "select.json", out);
    } else if (gnr->parsed()) {
      const PipelineConfig cfg = resolve(gnc);
      const Data d = load_data(cfg, true);
      const Models m = Models::load(cfg, {Subtask::kGeneration});
      std::vector<json> out;
      for (const auto& log : d.dialogues) {
        const KnowledgeSnippet* s =
            log.label && log.label->knowledge ? d.kb.find(*log.label->knowledge) : nullptr;
        out.push_back(s ? generate_one(cfg, m, *s, log) : json(nullptr));
      }
      write_records(output_dir(cfg) / "generate.json", out);
    } else if (ev->parsed()) {
      const PipelineConfig cfg = resolve(ec);
      const Data d = load_data(cfg, true);
      const Models m = Models::load(
          cfg, {Subtask::kDetection, Subtask::kSelection, Subtask::kGeneration});
      const json report = evaluate(cfg, m, d.kb, d.dialogues);
      const fs::path path = output_dir(cfg) / "metrics.json";
      write_json_file(path, report);
      std::cout << report.dump(2) << "\n";
    } else if (pipe->parsed()) {
      const PipelineConfig cfg = resolve(pc);
      const Models m = Models::load(
          cfg, {Subtask::kDetection, Subtask::kSelection, Subtask::kGeneration});
      const Data d = load_data(cfg, false);
      write_records(output_dir(cfg) / "pipeline.json", run_pipeline(cfg, m, d.kb, d.dialogues));
    } else if (chat->parsed()) {
      const PipelineConfig cfg = resolve(cc);
      const Models m = Models::load(
          cfg, {Subtask::kDetection, Subtask::kSelection, Subtask::kGeneration});
      const KnowledgeBase kb = load_knowledge_base(cfg.paths.knowledge);
      if (!cc.out.empty()) output_dir(cfg);
      std::cout << "type a message; /reset clears the dialogue, /quit exits\n";
      return chat_repl(cfg, m, kb, std::cin, std::cout, verbose);
    } else if (aug->parsed()) {
      const PipelineConfig cfg = resolve(ac);
      const KnowledgeBase kb = load_knowledge_base(cfg.paths.knowledge);
      Rng rng(cfg.seed);
      const auto augmented = selection::augment_dialogues(kb, per_entity, shift_prob, rng);
      std::vector<DialogueLog> logs;
      for (const auto& a : augmented) logs.push_back(a.log);
      const fs::path dir = output_dir(cfg);
      save_logs(dir / "augmented_logs.json", dir / "augmented_labels.json", logs);
      std::cout << "wrote " << logs.size() << " dialogues to " << dir.string() << "\n";
    }
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const ModelError& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
