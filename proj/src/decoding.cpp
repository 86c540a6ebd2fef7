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


#include "kgdial/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "kgdial/error.hpp"

namespace kgdial::decoding {

bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  return a.ids < b.ids;
}

namespace {

Hypothesis extend(const Hypothesis& h, int id, double lp, double gate) {
  Hypothesis out = h;
  out.ids.push_back(id);
  out.step_log_probs.push_back(lp);
  out.gates.push_back(gate);
  out.log_prob += lp;
  return out;
}

}  // namespace

std::vector<Hypothesis> beam_search(NextTokenScorer& scorer, std::size_t beam,
                                    std::size_t max_len, const Hypothesis& prefix) {
  if (beam == 0) throw ValidationError("beam_search: beam must be positive");
  if (max_len == 0) throw ValidationError("beam_search: max_len must be positive");
  const int eos = scorer.eos();
  std::vector<Hypothesis> finished;
  std::vector<Hypothesis> live;
  if (!prefix.ids.empty() && prefix.ids.back() == eos) {
    finished.push_back(prefix);
  } else if (prefix.ids.size() >= max_len) {
    Hypothesis closed = prefix;
    closed.closed_at_max_len = true;
    finished.push_back(closed);
  } else {
    live.push_back(prefix);
  }

  auto kth_finished = [&]() {
    std::sort(finished.begin(), finished.end(), better);
    return finished.size() >= beam ? finished[beam - 1].log_prob
                                   : -std::numeric_limits<double>::infinity();
  };

  while (!live.empty()) {
    // Extending only lowers a score, so a full finished beam that beats every
    // live prefix is final.
    const double bar = kth_finished();
    double best_live = -std::numeric_limits<double>::infinity();
    for (const auto& h : live) best_live = std::max(best_live, h.log_prob);
    if (finished.size() >= beam && best_live <= bar) break;

    std::vector<Hypothesis> expansions;
    for (const auto& h : live) {
      const StepOutput step = scorer.next(h.ids);
      if (step.log_probs.size() != scorer.vocab_size()) {
        throw ValidationError("beam_search: scorer returned a wrong-sized distribution");
      }
      for (std::size_t id = 0; id < step.log_probs.size(); ++id) {
        const double lp = step.log_probs[id];
        if (!std::isfinite(lp)) continue;
        Hypothesis e = extend(h, static_cast<int>(id), lp, step.gate);
        if (static_cast<int>(id) == eos) {
          finished.push_back(std::move(e));
        } else {
          expansions.push_back(std::move(e));
        }
      }
    }
    std::sort(expansions.begin(), expansions.end(), better);
    if (expansions.size() > beam) expansions.resize(beam);
    live.clear();
    for (auto& e : expansions) {
      if (e.ids.size() >= max_len) {
        e.closed_at_max_len = true;
        finished.push_back(std::move(e));
      } else {
        live.push_back(std::move(e));
      }
    }
  }
  std::sort(finished.begin(), finished.end(), better);
  if (finished.size() > beam) finished.resize(beam);
  return finished;
}

FfbsResult ffbs(NextTokenScorer& scorer, std::size_t groups, std::size_t beams_per_group,
                std::size_t max_len) {
  if (groups == 0 || beams_per_group == 0) {
    throw ValidationError("ffbs: groups and beams must be positive");
  }
  const int eos = scorer.eos();
  const StepOutput first = scorer.next({});
  std::vector<int> ids;
  for (std::size_t id = 0; id < first.log_probs.size(); ++id) {
    if (static_cast<int>(id) != eos && std::isfinite(first.log_probs[id])) {
      ids.push_back(static_cast<int>(id));
    }
  }
  std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
    return first.log_probs[static_cast<std::size_t>(a)] >
           first.log_probs[static_cast<std::size_t>(b)];
  });
  FfbsResult result;
  if (ids.size() < groups) result.fewer_groups = true;
  if (ids.size() > groups) ids.resize(groups);
  for (int id : ids) {
    Hypothesis seed = extend({}, id, first.log_probs[static_cast<std::size_t>(id)], first.gate);
    for (auto& h : beam_search(scorer, beams_per_group, max_len, seed)) {
      result.hypotheses.push_back(std::move(h));
    }
    result.first_tokens.push_back(id);
  }
  return result;
}

}  // namespace kgdial::decoding
