# Copyright 2026 The kgdial Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.


"""Python front end for the kgdial native core."""

import json as _json

from . import _kgdial
from ._kgdial import (
    DataError,
    ModelError,
    bleu_n,
    generate_aliases,
    jaro,
    jaro_winkler,
    levenshtein_ratio,
    precision_recall_f1,
    rouge_l,
    rouge_n,
    tokens_of,
)

__all__ = [
    "DataError",
    "ModelError",
    "bleu_n",
    "default_config",
    "generate_aliases",
    "jaro",
    "jaro_winkler",
    "levenshtein_ratio",
    "precision_recall_f1",
    "resolve_config",
    "rouge_l",
    "rouge_n",
    "run_pipeline",
    "synthetic_corpus",
    "tokens_of",
    "train",
]


def synthetic_corpus(n_dialogues=64, n_entities=4, n_docs=4, seed=7):
    """Returns (knowledge, logs, labels) in the on-disk JSON schema."""
    k, l, b = _kgdial.synthetic_corpus_json(n_dialogues, n_entities, n_docs, seed)
    return _json.loads(k), _json.loads(l), _json.loads(b)


def resolve_config(config=None):
    """Fills defaults and validates; unknown keys raise DataError."""
    return _json.loads(_kgdial.resolve_config_json(_json.dumps(config or {})))


def default_config():
    return resolve_config({})


def train(subtask, config):
    """Trains 'detect', 'select' or 'generate' and writes its checkpoint."""
    return _json.loads(_kgdial.train_json(subtask, _json.dumps(config)))


def run_pipeline(config):
    """Runs detection, selection and generation over config['paths']['logs']."""
    return _json.loads(_kgdial.run_pipeline_json(_json.dumps(config)))
