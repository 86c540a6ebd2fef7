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


// Length-bounded beam search and first-word-fixed beam search over any
// next-token scorer.

#ifndef KGDIAL_DECODING_HPP_
#define KGDIAL_DECODING_HPP_

#include <cstddef>
#include <vector>

namespace kgdial::decoding {

struct StepOutput {
  std::vector<double> log_probs;  // one per id; -inf for impossible tokens
  double gate = 1.0;
};

class NextTokenScorer {
 public:
  virtual ~NextTokenScorer() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual int eos() const = 0;
  virtual StepOutput next(const std::vector<int>& prefix) = 0;
};

struct Hypothesis {
  std::vector<int> ids;  // generated ids, including a final <eos> if any
  std::vector<double> step_log_probs;
  std::vector<double> gates;
  double log_prob = 0.0;
  bool closed_at_max_len = false;  // max_len reached without <eos>
};

// Best-first order: higher log-probability, then lexicographically smaller ids.
bool better(const Hypothesis& a, const Hypothesis& b);

// Keeps `beam` live prefixes per step; every <eos> expansion is kept as a
// finished hypothesis, and prefixes reaching max_len ids are closed. Returns
// at most `beam` hypotheses, best first. Stops once no live prefix can beat
// the current beam-th finished one. `prefix` seeds every hypothesis and
// counts toward max_len.
std::vector<Hypothesis> beam_search(NextTokenScorer& scorer, std::size_t beam,
                                    std::size_t max_len, const Hypothesis& prefix = {});

struct FfbsResult {
  std::vector<Hypothesis> hypotheses;  // group by group, best first inside
  std::vector<int> first_tokens;
  bool fewer_groups = false;  // not enough tokens with non-zero probability
};

// The `groups` most probable first tokens other than <eos> each seed a beam
// search of width `beams_per_group`.
FfbsResult ffbs(NextTokenScorer& scorer, std::size_t groups, std::size_t beams_per_group,
                std::size_t max_len);

}  // namespace kgdial::decoding

#endif  // KGDIAL_DECODING_HPP_
