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


// Python bindings. Structured values cross the boundary as JSON text; the
// kgdial package decodes them.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "kgdial/corpus.hpp"
#include "kgdial/error.hpp"
#include "kgdial/evalmetrics.hpp"
#include "kgdial/pipeline.hpp"
#include "kgdial/retrieval.hpp"
#include "kgdial/textsim.hpp"

namespace py = pybind11;
using namespace kgdial;

namespace {

pipeline::PipelineConfig parse_config(const std::string& text) {
  return pipeline::PipelineConfig::from_json(
      text.empty() ? nlohmann::json::object() : nlohmann::json::parse(text));
}

struct Loaded {
  KnowledgeBase kb;
  std::vector<DialogueLog> dialogues;
};

Loaded load(const pipeline::PipelineConfig& cfg, bool labels) {
  std::optional<std::filesystem::path> lp;
  if (labels) lp = cfg.paths.labels;
  return {load_knowledge_base(cfg.paths.knowledge), load_logs(cfg.paths.logs, lp)};
}

}  // namespace

PYBIND11_MODULE(_kgdial, m) {
  m.doc() = "kgdial native core";

  auto data_error = py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ModelError>(m, "ModelError", PyExc_RuntimeError);
  (void)data_error;

  m.def("tokens_of", &textsim::tokens_of, py::arg("text"));
  m.def("levenshtein_ratio", &textsim::levenshtein_ratio, py::arg("a"), py::arg("b"));
  m.def("jaro", &textsim::jaro, py::arg("a"), py::arg("b"));
  m.def("jaro_winkler", &textsim::jaro_winkler, py::arg("a"), py::arg("b"));
  m.def("generate_aliases", &retrieval::generate_aliases, py::arg("entity_name"));

  m.def(
      "bleu_n",
      [](const eval::Tokens& c, const eval::Tokens& r, std::size_t n) { return eval::bleu_n(c, r, n); },
      py::arg("candidate"), py::arg("reference"), py::arg("n"));
  m.def("rouge_n", &eval::rouge_n, py::arg("candidate"), py::arg("reference"), py::arg("n"));
  m.def("rouge_l", &eval::rouge_l, py::arg("candidate"), py::arg("reference"));
  m.def(
      "precision_recall_f1",
      [](const std::vector<bool>& pred, const std::vector<bool>& gold) {
        const auto p = eval::precision_recall_f1(pred, gold);
        return py::make_tuple(p.precision, p.recall, p.f1);
      },
      py::arg("pred"), py::arg("gold"));

  m.def(
      "synthetic_corpus_json",
      [](std::size_t n_dialogues, std::size_t n_entities, std::size_t n_docs, std::uint64_t seed) {
        SyntheticSpec spec;
        spec.n_dialogues = n_dialogues;
        spec.n_entities = n_entities;
        spec.n_docs = n_docs;
        spec.seed = seed;
        const auto c = generate_synthetic_corpus(spec);
        return py::make_tuple(knowledge_to_json(c.kb).dump(), logs_to_json(c.dialogues).dump(),
                              labels_to_json(c.dialogues).dump());
      },
      py::arg("n_dialogues") = 64, py::arg("n_entities") = 4, py::arg("n_docs") = 4,
      py::arg("seed") = 7);

  m.def("resolve_config_json", [](const std::string& text) { return parse_config(text).to_json().dump(); },
        py::arg("config_json") = "");

  m.def(
      "train_json",
      [](const std::string& subtask, const std::string& config_json) {
        const auto cfg = parse_config(config_json);
        py::gil_scoped_release release;
        const auto d = load(cfg, true);
        pipeline::TrainSummary s;
        if (subtask == "detect") {
          s = pipeline::train_detection(cfg, d.kb, d.dialogues);
        } else if (subtask == "select") {
          s = pipeline::train_selection(cfg, d.kb, d.dialogues);
        } else if (subtask == "generate") {
          s = pipeline::train_generation(cfg, d.kb, d.dialogues);
        } else {
          throw ValidationError("unknown subtask '" + subtask + "'");
        }
        return s.to_json().dump();
      },
      py::arg("subtask"), py::arg("config_json"));

  m.def(
      "run_pipeline_json",
      [](const std::string& config_json) {
        const auto cfg = parse_config(config_json);
        py::gil_scoped_release release;
        const auto d = load(cfg, false);
        return nlohmann::json(pipeline::run_pipeline(cfg, d.kb, d.dialogues)).dump();
      },
      py::arg("config_json"));
}
