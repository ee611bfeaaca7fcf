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

// Bandit learners. DBGD, MGD and NSGD perturb the parameters, show an
// interleaved (or multileaved) list and move toward perturbations whose
// team collects more clicks. PDGD samples lists from a Plackett-Luce model
// and follows click-inferred pairwise preferences weighted by rho.

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "ultr/common.hpp"
#include "ultr/counterfactual.hpp"
#include "ultr/data.hpp"
#include "ultr/ranker.hpp"
#include "ultr/simulator.hpp"

namespace ultr {

// Uniform direction on the unit sphere (normalized standard normal draw).
inline std::vector<double> sample_unit_direction(std::size_t dim, Rng& rng) {
  detail::require(dim >= 1, "dim must be >= 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> u(dim);
  double norm2 = 0;
  do {
    norm2 = 0;
    for (auto& x : u) {
      x = normal(rng);
      norm2 += x * x;
    }
  } while (norm2 == 0);
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& x : u) x *= inv;
  return u;
}

// ---- Plackett-Luce --------------------------------------------------------

struct PlackettLuceSample {
  std::vector<std::size_t> ranking;
  double probability = 1;
};

// Sequential sampling without replacement, P(next = d) proportional to exp(score_d).
inline PlackettLuceSample plackett_luce_sample(std::span<const double> scores, Rng& rng) {
  const std::size_t n = scores.size();
  for (double s : scores) detail::require(std::isfinite(s), "scores must be finite");
  PlackettLuceSample out;
  out.ranking.reserve(n);
  std::vector<std::size_t> remaining(n);
  std::iota(remaining.begin(), remaining.end(), 0);
  std::vector<double> w(n);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double log_prob = 0;
  while (!remaining.empty()) {
    double mx = -std::numeric_limits<double>::infinity();
    for (auto d : remaining) mx = std::max(mx, scores[d]);
    double total = 0;
    for (std::size_t k = 0; k < remaining.size(); ++k) total += (w[k] = std::exp(scores[remaining[k]] - mx));
    double u = unif(rng) * total;
    std::size_t pick = remaining.size() - 1;
    for (std::size_t k = 0; k < remaining.size(); ++k) {
      if (u < w[k]) {
        pick = k;
        break;
      }
      u -= w[k];
    }
    log_prob += std::log(w[pick] / total);
    out.ranking.push_back(remaining[pick]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  out.probability = std::exp(log_prob);
  return out;
}

// log P(prefix) under Plackett-Luce over all candidates in `scores`:
// sum_k [ s(prefix_k) - log sum_{d not in prefix_<k} exp(s_d) ].
inline double plackett_luce_log_prob(std::span<const double> scores, std::span<const std::size_t> prefix) {
  const std::size_t n = scores.size();
  std::vector<bool> used(n, false);
  const double mx = *std::max_element(scores.begin(), scores.end());
  double lp = 0;
  for (auto d : prefix) {
    detail::require(d < n && !used[d], "prefix is not a partial permutation");
    double denom = 0;
    for (std::size_t k = 0; k < n; ++k)
      if (!used[k]) denom += std::exp(scores[k] - mx);
    lp += (scores[d] - mx) - std::log(denom);
    used[d] = true;
  }
  return lp;
}

// ---- Interleaving -----------------------------------------------------------

struct InterleavedList {
  std::vector<std::size_t> docs;
  std::vector<std::size_t> team_of;  // index of the contributing input list
};

// Team-draft interleaving (multileaving for more than two lists): in every
// round the teams pick in a random order, each adding its highest-ranked
// document not yet placed. Stops at `cutoff` documents.
inline InterleavedList team_draft_interleave(std::span<const std::vector<std::size_t>> lists, std::size_t cutoff,
                                             Rng& rng) {
  detail::require(!lists.empty(), "need at least one list");
  std::size_t n_docs = 0;
  for (const auto& l : lists) {
    detail::require(!l.empty(), "input lists must be non-empty");
    for (auto d : l) n_docs = std::max(n_docs, d + 1);
  }
  std::vector<bool> placed(n_docs, false);
  std::vector<std::size_t> cursor(lists.size(), 0);
  std::vector<std::size_t> order(lists.size());
  std::iota(order.begin(), order.end(), 0);
  InterleavedList out;
  const std::size_t target = std::min(cutoff, n_docs);
  bool progress = true;
  while (out.docs.size() < target && progress) {
    progress = false;
    std::shuffle(order.begin(), order.end(), rng);
    for (auto team : order) {
      if (out.docs.size() >= target) break;
      auto& c = cursor[team];
      while (c < lists[team].size() && placed[lists[team][c]]) ++c;
      if (c == lists[team].size()) continue;
      placed[lists[team][c]] = true;
      out.docs.push_back(lists[team][c]);
      out.team_of.push_back(team);
      progress = true;
    }
  }
  return out;
}

inline std::vector<std::size_t> team_clicks(const InterleavedList& list, std::span<const std::uint8_t> clicks,
                                            std::size_t n_teams) {
  std::vector<std::size_t> counts(n_teams, 0);
  for (std::size_t i = 0; i < clicks.size() && i < list.team_of.size(); ++i)
    if (clicks[i]) ++counts[list.team_of[i]];
  return counts;
}

// ---- Dueling / multileave gradient descent ---------------------------------

struct PerturbationState {
  double delta = 1.0;             // exploration radius
  double alpha = 0.01;            // step size
  std::size_t n_candidates = 1;   // 1 for DBGD
  std::size_t history_capacity = 10;
  std::deque<std::vector<double>> history;  // recent losing unit directions (NSGD)
  std::size_t fallbacks = 0;      // NSGD proposals that fell back to unrestricted sampling
};

// Default click environment: simulate a user on the displayed list.
struct SimulatedClickEnv {
  ClickModel model;
  Session operator()(const Query& q, std::size_t query_index, std::span<const std::size_t> ranking, Rng& rng) const {
    return simulate_clicks(model, q, query_index, ranking, Origin::kOnline, rng);
  }
};

// The list a ranker shows under an online paradigm.
inline std::vector<std::size_t> online_list(std::span<const double> scores, Paradigm paradigm, Rng& rng) {
  if (paradigm == Paradigm::kOnS) return plackett_luce_sample(scores, rng).ranking;
  return rank_by_scores(scores);
}

inline void require_online(Paradigm paradigm, const char* algorithm) {
  if (paradigm == Paradigm::kOff)
    throw ConfigError(std::string(algorithm) +
                      " requires control over the displayed lists and cannot run under the offline paradigm");
}

inline RankerParams perturbed(const RankerParams& params, std::span<const double> direction, double scale) {
  auto flat = params.flat();
  detail::require<ValidationError>(direction.size() == flat.size(), "direction has ", direction.size(),
                                   " entries, parameters have ", flat.size());
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] += scale * direction[i];
  RankerParams out = params;
  out.set_flat(flat);
  return out;
}

// theta <- theta + alpha * mean(winning directions); no winners, no change.
inline void apply_winning_directions(RankerParams& params, std::span<const std::vector<double>> winners, double alpha) {
  if (winners.empty()) return;
  auto flat = params.flat();
  const double scale = alpha / static_cast<double>(winners.size());
  std::vector<double> mean(flat.size(), 0.0);
  for (const auto& u : winners) {
    detail::require<ValidationError>(u.size() == flat.size(), "direction size mismatch");
    for (std::size_t i = 0; i < flat.size(); ++i) mean[i] += u[i];
  }
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] += scale * mean[i];
  params.set_flat(flat);
}

struct DuelOutcome {
  std::vector<std::size_t> winners;  // indices into the candidate directions
  std::vector<std::size_t> losers;
  InterleavedList list;
  Session session;
};

// Shows the current ranker (team 0) against theta + delta*u_k (team k+1)
// in one multileaved list and compares click credit.
template <typename ClickEnv>
DuelOutcome duel(const RankerParams& params, std::span<const std::vector<double>> directions, double delta,
                 const Query& query, std::size_t query_index, Paradigm paradigm, const ClickEnv& env, Rng& rng) {
  std::vector<std::vector<std::size_t>> lists;
  lists.reserve(directions.size() + 1);
  lists.push_back(online_list(score_query(params, query), paradigm, rng));
  for (const auto& u : directions) lists.push_back(online_list(score_query(perturbed(params, u, delta), query), paradigm, rng));
  DuelOutcome out;
  out.list = team_draft_interleave(lists, kDisplayCutoff, rng);
  out.session = env(query, query_index, out.list.docs, rng);
  const auto credit = team_clicks(out.list, out.session.clicks, lists.size());
  for (std::size_t k = 0; k < directions.size(); ++k) (credit[k + 1] > credit[0] ? out.winners : out.losers).push_back(k);
  return out;
}

namespace detail {
template <typename ClickEnv>
DuelOutcome duel_and_update(RankerParams& params, const PerturbationState& state,
                            std::span<const std::vector<double>> directions, const Query& query, std::size_t query_index,
                            Paradigm paradigm, const ClickEnv& env, Rng& rng) {
  auto outcome = duel(params, directions, state.delta, query, query_index, paradigm, env, rng);
  std::vector<std::vector<double>> winning;
  for (auto k : outcome.winners) winning.push_back(directions[k]);
  apply_winning_directions(params, winning, state.alpha);
  return outcome;
}
}  // namespace detail

template <typename ClickEnv>
RankerParams dbgd_step(RankerParams params, const PerturbationState& state, const Query& query,
                       std::size_t query_index, Paradigm paradigm, const ClickEnv& env, Rng& rng) {
  require_online(paradigm, "dbgd");
  const std::vector<std::vector<double>> dirs{sample_unit_direction(params.num_parameters(), rng)};
  detail::duel_and_update(params, state, dirs, query, query_index, paradigm, env, rng);
  return params;
}

template <typename ClickEnv>
RankerParams mgd_step(RankerParams params, const PerturbationState& state, const Query& query, std::size_t query_index,
                      Paradigm paradigm, const ClickEnv& env, Rng& rng) {
  require_online(paradigm, "mgd");
  detail::require(state.n_candidates >= 1, "n_candidates must be >= 1");
  std::vector<std::vector<double>> dirs;
  for (std::size_t k = 0; k < state.n_candidates; ++k) dirs.push_back(sample_unit_direction(params.num_parameters(), rng));
  detail::duel_and_update(params, state, dirs, query, query_index, paradigm, env, rng);
  return params;
}

// Removes from `raw` its projection onto span(history) (modified Gram-Schmidt
// against an orthonormalized history basis). Returns nullopt when the
// residual norm is below 1e-6.
inline std::optional<std::vector<double>> project_to_null_space(std::span<const double> raw,
                                                                const std::deque<std::vector<double>>& history) {
  std::vector<std::vector<double>> basis;
  for (const auto& h : history) {
    std::vector<double> v(h.begin(), h.end());
    for (const auto& b : basis) {
      double dot = 0;
      for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * b[i];
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= dot * b[i];
    }
    double n2 = 0;
    for (double x : v) n2 += x * x;
    if (n2 < 1e-20) continue;
    const double inv = 1.0 / std::sqrt(n2);
    for (auto& x : v) x *= inv;
    basis.push_back(std::move(v));
  }
  std::vector<double> r(raw.begin(), raw.end());
  // Two passes for numerical orthogonality.
  for (int pass = 0; pass < 2; ++pass)
    for (const auto& b : basis) {
      double dot = 0;
      for (std::size_t i = 0; i < r.size(); ++i) dot += r[i] * b[i];
      for (std::size_t i = 0; i < r.size(); ++i) r[i] -= dot * b[i];
    }
  double n2 = 0;
  for (double x : r) n2 += x * x;
  const double norm = std::sqrt(n2);
  if (norm < 1e-6) return std::nullopt;
  for (auto& x : r) x /= norm;
  return r;
}

inline constexpr int kNsgdMaxRetries = 3;

// A unit direction orthogonal to the stored losing directions. On a
// degenerate residual the oldest half of the history is dropped and the
// draw retried; after kNsgdMaxRetries it falls back to an unrestricted
// direction and counts the fallback in state.fallbacks.
inline std::vector<double> nsgd_propose(PerturbationState& state, std::size_t dim, Rng& rng) {
  for (int attempt = 0; attempt <= kNsgdMaxRetries; ++attempt) {
    const auto raw = sample_unit_direction(dim, rng);
    if (auto u = project_to_null_space(raw, state.history)) return *u;
    const std::size_t drop = std::max<std::size_t>(1, state.history.size() / 2);
    for (std::size_t k = 0; k < drop && !state.history.empty(); ++k) state.history.pop_front();
  }
  ++state.fallbacks;
  return sample_unit_direction(dim, rng);
}

inline void remember_losing_direction(PerturbationState& state, std::vector<double> u) {
  if (state.history_capacity == 0) return;
  state.history.push_back(std::move(u));
  while (state.history.size() > state.history_capacity) state.history.pop_front();
}

template <typename ClickEnv>
RankerParams nsgd_step(RankerParams params, PerturbationState& state, const Query& query, std::size_t query_index,
                       Paradigm paradigm, const ClickEnv& env, Rng& rng) {
  require_online(paradigm, "nsgd");
  detail::require(state.n_candidates >= 1, "n_candidates must be >= 1");
  std::vector<std::vector<double>> dirs;
  for (std::size_t k = 0; k < state.n_candidates; ++k) dirs.push_back(nsgd_propose(state, params.num_parameters(), rng));
  const auto outcome = detail::duel_and_update(params, state, dirs, query, query_index, paradigm, env, rng);
  if (outcome.session.num_clicks() > 0)
    for (auto k : outcome.losers) remember_losing_direction(state, dirs[k]);
  return params;
}

// ---- PDGD ---------------------------------------------------------------------

// Click-inferred preferences (preferred position, other position), 0-based:
// a clicked position i beats every non-clicked position j with j <= i + 1.
inline std::vector<std::pair<std::size_t, std::size_t>> pdgd_infer_pairs(std::span<const std::uint8_t> clicks) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < clicks.size(); ++i) {
    if (!clicks[i]) continue;
    for (std::size_t j = 0; j <= i + 1 && j < clicks.size(); ++j)
      if (j != i && !clicks[j]) pairs.emplace_back(i, j);
  }
  return pairs;
}

// rho = P(list with positions i,j swapped) / (P(list) + P(swapped)), list
// probabilities under Plackett-Luce over all candidates' `scores`.
inline double pdgd_pair_weight(std::span<const double> scores, std::span<const std::size_t> list, std::size_t i,
                               std::size_t j) {
  detail::require(i < list.size() && j < list.size(), "pair positions outside the list");
  std::vector<std::size_t> swapped(list.begin(), list.end());
  std::swap(swapped[i], swapped[j]);
  const double lp = plackett_luce_log_prob(scores, list);
  const double lp_swapped = plackett_luce_log_prob(scores, swapped);
  // P_s / (P + P_s) = sigmoid(lp_s - lp)
  return detail::sigmoid(lp_swapped - lp);
}

// Mean over sessions of sum_pairs rho * -log sigmoid(s_i - s_j). rho is
// computed from `rho_scores[b]` (all candidates of session b's query) and
// held fixed; when empty, the current model's scores are used.
inline LossAndGradient pdgd_loss(const RankerParams& params, const Dataset& ds, std::span<const Session> batch,
                                 std::span<const std::vector<double>> rho_scores = {}) {
  LossAndGradient out;
  out.grad = params.zero_gradient();
  out.n_terms = batch.size();
  if (batch.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  std::vector<double> upstream;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& s = batch[b];
    const auto pairs = pdgd_infer_pairs(s.clicks);
    if (pairs.empty()) continue;
    const auto& q = ds.queries.at(s.query);
    const auto all_scores = score_query(params, q);
    const auto& weight_scores = rho_scores.empty() ? all_scores : rho_scores[b];
    upstream.assign(s.displayed.size(), 0.0);
    for (const auto& [i, j] : pairs) {
      const double rho = pdgd_pair_weight(weight_scores, s.displayed, i, j) * inv_n;
      const double si = all_scores[s.displayed[i]], sj = all_scores[s.displayed[j]];
      out.loss += rho * detail::pair_loss(si, sj);
      const double g = rho * detail::pair_loss_grad(si, sj);
      upstream[i] += g;
      upstream[j] -= g;
    }
    detail::backprop_session(params, q, s.displayed, upstream, out.grad);
  }
  return out;
}

inline RankerParams pdgd_update(RankerParams params, const Dataset& ds, std::span<const Session> batch, double lr) {
  const auto lg = pdgd_loss(params, ds, batch);
  if (!lg.grad.is_zero()) apply_sgd(params, lg.grad, lr);
  return params;
}

}  // namespace ultr
