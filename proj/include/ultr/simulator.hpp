/*
 * Copyright 2026 The ultr-lab Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Position-biased click simulation under the examination hypothesis:
// a displayed document is clicked iff it is examined (prob. nu_i^eta at
// position i) and perceived relevant (prob. eps + (1-eps)(2^y-1)/15).

#include <array>
#include <cmath>
#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "ultr/common.hpp"
#include "ultr/data.hpp"

namespace ultr {

inline constexpr std::size_t kDisplayCutoff = 10;

// Eye-tracking examination probabilities for positions 1..10.
inline constexpr std::array<double, kDisplayCutoff> kEyeTrackingExamination = {0.68, 0.61, 0.48, 0.34, 0.28,
                                                                             0.20, 0.11, 0.10, 0.08, 0.06};

struct ClickModel {
  std::array<double, kDisplayCutoff> nu = kEyeTrackingExamination;
  double eta = 1.0;      // bias severity
  double epsilon = 0.1;  // noisy-click probability

  static constexpr std::size_t display_cutoff = kDisplayCutoff;

  void validate() const {
    for (std::size_t i = 0; i < nu.size(); ++i)
      detail::require<ValidationError>(nu[i] > 0.0 && nu[i] <= 1.0, "nu_", i + 1, " = ", nu[i], " outside (0,1]");
    detail::require<ValidationError>(eta >= 0.0 && std::isfinite(eta), "eta must be >= 0");
    detail::require<ValidationError>(epsilon >= 0.0 && epsilon < 1.0, "epsilon must be in [0,1)");
  }
};

// P(o=1) at a 1-based position.
inline double examination_prob(const ClickModel& model, int position) {
  detail::require(position >= 1 && position <= static_cast<int>(kDisplayCutoff), "position ", position,
                  " outside [1,", kDisplayCutoff, "]");
  return std::pow(model.nu[static_cast<std::size_t>(position - 1)], model.eta);
}

// P(r=1 | label y).
inline double perceived_relevance_prob(int label, double epsilon) {
  detail::require(label >= 0 && label <= kMaxLabel, "label ", label, " outside [0,4]");
  detail::require(epsilon >= 0.0 && epsilon < 1.0, "epsilon must be in [0,1)");
  constexpr double kMaxGain = (1 << kMaxLabel) - 1;
  return epsilon + (1.0 - epsilon) * static_cast<double>((1 << label) - 1) / kMaxGain;
}

enum class Origin { kLogged, kOnline };

// One displayed list and its clicks. `displayed` holds candidate indices
// into the query, `query` the query's index in its Dataset.
struct Session {
  std::size_t query = 0;
  std::vector<std::size_t> displayed;
  std::vector<std::uint8_t> clicks;
  Origin origin = Origin::kOnline;

  std::size_t num_clicks() const {
    std::size_t n = 0;
    for (auto c : clicks) n += c;
    return n;
  }
  bool operator==(const Session&) const = default;
};

// Click bits for documents shown in the given label order; only the first
// ten positions are displayed. Two uniforms are drawn per displayed position.
inline std::vector<std::uint8_t> sample_clicks(const ClickModel& model, std::span<const int> labels, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const std::size_t n = std::min(labels.size(), kDisplayCutoff);
  std::vector<std::uint8_t> clicks(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const bool examined = unif(rng) < examination_prob(model, static_cast<int>(i + 1));
    const bool relevant = unif(rng) < perceived_relevance_prob(labels[i], model.epsilon);
    clicks[i] = examined && relevant;
  }
  return clicks;
}

// Displays `ranking` (truncated to the cutoff) and simulates clicks on it.
inline Session simulate_clicks(const ClickModel& model, const Query& query, std::size_t query_index,
                               std::span<const std::size_t> ranking, Origin origin, Rng& rng) {
  detail::require(!ranking.empty(), "cannot display an empty list");
  Session s;
  s.query = query_index;
  s.origin = origin;
  const std::size_t n = std::min(ranking.size(), kDisplayCutoff);
  s.displayed.assign(ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(n));
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = query.candidates.at(s.displayed[i]).label;
  s.clicks = sample_clicks(model, labels, rng);
  return s;
}

using PositionWeights = std::array<double, kDisplayCutoff>;

// Result randomization: shuffle each sampled query's full candidate set,
// display the top ten, and report per-position click rates relative to
// position 1 (E[c_k] is proportional to P(o_k=1) under shuffling).
inline PositionWeights estimate_propensity_by_randomization(const Dataset& dataset, const ClickModel& model,
                                                            std::size_t n_sessions, Rng& rng) {
  detail::require(n_sessions >= 1, "n_sessions must be >= 1");
  detail::require(!dataset.queries.empty(), "dataset has no queries");
  std::array<double, kDisplayCutoff> clicks{};
  std::array<double, kDisplayCutoff> shown{};
  std::uniform_int_distribution<std::size_t> pick(0, dataset.queries.size() - 1);
  std::vector<std::size_t> perm;
  std::vector<int> labels;
  for (std::size_t s = 0; s < n_sessions; ++s) {
    const auto& q = dataset.queries[pick(rng)];
    perm.resize(q.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const std::size_t n = std::min(perm.size(), kDisplayCutoff);
    labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = q.candidates[perm[i]].label;
    const auto c = sample_clicks(model, labels, rng);
    for (std::size_t i = 0; i < n; ++i) {
      shown[i] += 1;
      clicks[i] += c[i];
    }
  }
  PositionWeights rate{};
  for (std::size_t i = 0; i < kDisplayCutoff; ++i) {
    if (clicks[i] == 0) throw EstimationError(static_cast<int>(i + 1), "no clicks observed");
    rate[i] = clicks[i] / shown[i];
  }
  const double first = rate[0];
  for (auto& r : rate) r /= first;
  return rate;
}

}  // namespace ultr
