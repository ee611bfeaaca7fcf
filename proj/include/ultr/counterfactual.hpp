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

// Counterfactual learners: they keep the displayed lists as given and
// debias the loss computed from clicks. NA (no correction), IPW, REM, DLA
// and PairD each expose a loss-with-gradient routine and an update step.

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "ultr/common.hpp"
#include "ultr/data.hpp"
#include "ultr/ranker.hpp"
#include "ultr/simulator.hpp"

namespace ultr {

enum class PropensitySource { kRandomization, kRem, kDla, kPairD, kOracle };

inline std::string_view to_string(PropensitySource s) {
  switch (s) {
    case PropensitySource::kRandomization: return "randomization";
    case PropensitySource::kRem: return "rem";
    case PropensitySource::kDla: return "dla";
    case PropensitySource::kPairD: return "paird";
    case PropensitySource::kOracle: return "oracle";
  }
  return "?";
}

// Examination propensities per position, relative to position 1.
struct PropensityEstimate {
  PositionWeights weights{};
  PropensitySource source = PropensitySource::kRandomization;

  static PropensityEstimate ones() {
    PropensityEstimate p;
    p.weights.fill(1.0);
    return p;
  }

  // True nu_i^eta / nu_1^eta of a click model.
  static PropensityEstimate oracle(const ClickModel& model) {
    PropensityEstimate p;
    p.source = PropensitySource::kOracle;
    const double first = examination_prob(model, 1);
    for (std::size_t i = 0; i < kDisplayCutoff; ++i) p.weights[i] = examination_prob(model, static_cast<int>(i + 1)) / first;
    return p;
  }

  static PropensityEstimate from_weights(const PositionWeights& w, PropensitySource source) {
    PropensityEstimate p{w, source};
    p.validate();
    return p;
  }

  void validate() const {
    detail::require<ValidationError>(weights[0] == 1.0, "propensity at position 1 must be 1.0, got ", weights[0]);
    for (std::size_t i = 0; i < kDisplayCutoff; ++i)
      detail::require<ValidationError>(weights[i] > 0 && std::isfinite(weights[i]), "propensity at position ", i + 1,
                                       " must be positive");
  }
};

// Loss value and its gradient with respect to the ranker parameters.
struct LossAndGradient {
  double loss = 0;
  Gradient grad;
  std::size_t n_terms = 0;  // pairs, documents or sessions the loss averages over
};

namespace detail {

inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Pairwise logistic loss -log sigmoid(s_hi - s_lo) and d/d(s_hi).
inline double pair_loss(double s_hi, double s_lo) { return softplus(-(s_hi - s_lo)); }
inline double pair_loss_grad(double s_hi, double s_lo) { return -sigmoid(-(s_hi - s_lo)); }

inline std::vector<double> displayed_scores(const RankerParams& p, const Query& q, std::span<const std::size_t> shown) {
  std::vector<double> s(shown.size());
  for (std::size_t i = 0; i < shown.size(); ++i) s[i] = score(p, q.candidates[shown[i]].features);
  return s;
}

// Back-propagates per-document score gradients of one session.
inline void backprop_session(const RankerParams& p, const Query& q, std::span<const std::size_t> shown,
                             std::span<const double> upstream, Gradient& grad) {
  for (std::size_t i = 0; i < shown.size(); ++i)
    if (upstream[i] != 0.0) accumulate_gradient(p, q.candidates[shown[i]].features, upstream[i], grad);
}

}  // namespace detail

// Mean pairwise cross-entropy over every (clicked, non-clicked) displayed
// pair of the batch; each pair is scaled by weight(clicked_pos, nonclicked_pos)
// (0-based positions). A batch without pairs yields zero loss and gradient.
template <typename PairWeight>
LossAndGradient weighted_pairwise_loss(const RankerParams& params, const Dataset& ds, std::span<const Session> batch,
                                       PairWeight&& weight) {
  LossAndGradient out;
  out.grad = params.zero_gradient();
  std::size_t n_pairs = 0;
  for (const auto& s : batch) {
    const std::size_t clicked = s.num_clicks();
    n_pairs += clicked * (s.clicks.size() - clicked);
  }
  out.n_terms = n_pairs;
  if (n_pairs == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n_pairs);
  std::vector<double> upstream;
  for (const auto& s : batch) {
    const std::size_t clicked = s.num_clicks();
    if (clicked == 0 || clicked == s.clicks.size()) continue;
    const auto& q = ds.queries.at(s.query);
    const auto scores = detail::displayed_scores(params, q, s.displayed);
    upstream.assign(scores.size(), 0.0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (!s.clicks[i]) continue;
      for (std::size_t j = 0; j < scores.size(); ++j) {
        if (s.clicks[j]) continue;
        const double w = weight(i, j) * inv_n;
        out.loss += w * detail::pair_loss(scores[i], scores[j]);
        const double g = w * detail::pair_loss_grad(scores[i], scores[j]);
        upstream[i] += g;
        upstream[j] -= g;
      }
    }
    detail::backprop_session(params, q, s.displayed, upstream, out.grad);
  }
  return out;
}

// ---- NA ------------------------------------------------------------------

inline LossAndGradient na_loss(const RankerParams& params, const Dataset& ds, std::span<const Session> batch) {
  return weighted_pairwise_loss(params, ds, batch, [](std::size_t, std::size_t) { return 1.0; });
}

inline RankerParams na_update(RankerParams params, const Dataset& ds, std::span<const Session> batch, double lr) {
  detail::require(!batch.empty(), "batch must be non-empty");
  const auto lg = na_loss(params, ds, batch);
  if (lg.n_terms > 0) apply_sgd(params, lg.grad, lr);
  return params;
}

// ---- IPW -----------------------------------------------------------------

struct IpwOptions {
  // Upper bound on 1/propensity; <= 0 disables clipping.
  double max_inverse_weight = 0;
};

inline double inverse_propensity(const PropensityEstimate& prop, std::size_t position, const IpwOptions& opt = {}) {
  const double w = 1.0 / prop.weights[position];
  return opt.max_inverse_weight > 0 ? std::min(w, opt.max_inverse_weight) : w;
}

inline LossAndGradient ipw_loss(const RankerParams& params, const Dataset& ds, std::span<const Session> batch,
                                const PropensityEstimate& prop, const IpwOptions& opt = {}) {
  return weighted_pairwise_loss(params, ds, batch,
                                [&](std::size_t i, std::size_t) { return inverse_propensity(prop, i, opt); });
}

inline RankerParams ipw_update(RankerParams params, const Dataset& ds, std::span<const Session> batch,
                               const PropensityEstimate& prop, double lr, const IpwOptions& opt = {}) {
  detail::require(!batch.empty(), "batch must be non-empty");
  prop.validate();
  const auto lg = ipw_loss(params, ds, batch, prop, opt);
  if (lg.n_terms > 0) apply_sgd(params, lg.grad, lr);
  return params;
}

// Per-document loss Delta(d) = sum over the other displayed documents d' of
// -log sigmoid(s_d - s_d'); it does not depend on clicks.
inline std::vector<double> document_losses(std::span<const double> scores) {
  std::vector<double> delta(scores.size(), 0.0);
  for (std::size_t i = 0; i < scores.size(); ++i)
    for (std::size_t j = 0; j < scores.size(); ++j)
      if (i != j) delta[i] += detail::pair_loss(scores[i], scores[j]);
  return delta;
}

// sum_{clicked d} Delta(d) / P(o_pos(d)=1): the inverse-propensity-weighted
// click loss in its per-document form.
inline double ipw_document_loss(std::span<const double> scores, std::span<const std::uint8_t> clicks,
                                std::span<const double> examination) {
  const auto delta = document_losses(scores);
  double l = 0;
  for (std::size_t i = 0; i < clicks.size(); ++i)
    if (clicks[i]) l += delta[i] / examination[i];
  return l;
}

// E_r[sum_{r_d=1} Delta(d)] = sum_d P(r_d=1) Delta(d): the loss under full
// relevance information.
inline double full_information_document_loss(std::span<const double> scores, std::span<const double> relevance) {
  const auto delta = document_losses(scores);
  double l = 0;
  for (std::size_t i = 0; i < relevance.size(); ++i) l += relevance[i] * delta[i];
  return l;
}

// ---- REM -----------------------------------------------------------------

// Examination probabilities per position, each in (0,1).
struct RemState {
  PositionWeights beta{};

  static RemState uniform(double b = 0.5) {
    RemState s;
    s.beta.fill(b);
    return s;
  }
};

inline constexpr double kRemProbFloor = 1e-6;

struct RemPosterior {
  double examined;  // P(o=1 | c)
  double relevant;  // P(r=1 | c)
};

// Posteriors of the latent examination and relevance given one click bit.
inline RemPosterior rem_posteriors(double beta, double gamma, bool clicked) {
  detail::require(beta > 0 && beta < 1, "beta must be in (0,1), got ", beta);
  detail::require(gamma > 0 && gamma < 1, "gamma must be in (0,1), got ", gamma);
  if (clicked) return {1.0, 1.0};
  const double norm = 1.0 - beta * gamma;
  if (!(norm > 1e-12)) throw NumericError("P(c=0) = 1 - beta*gamma is numerically zero");
  return {beta * (1 - gamma) / norm, gamma * (1 - beta) / norm};
}

inline double clamp_probability(double p) { return std::clamp(p, kRemProbFloor, 1.0 - kRemProbFloor); }

// Pointwise sigmoid cross-entropy of every displayed document against its
// posterior relevance, averaged over displayed documents. `targets` must be
// aligned with the displayed documents of `batch`, session by session.
inline LossAndGradient rem_ranker_loss(const RankerParams& params, const Dataset& ds, std::span<const Session> batch,
                                       std::span<const std::vector<double>> targets) {
  LossAndGradient out;
  out.grad = params.zero_gradient();
  std::size_t n_docs = 0;
  for (const auto& s : batch) n_docs += s.displayed.size();
  out.n_terms = n_docs;
  if (n_docs == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n_docs);
  std::vector<double> upstream;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& s = batch[b];
    const auto& q = ds.queries.at(s.query);
    const auto scores = detail::displayed_scores(params, q, s.displayed);
    upstream.assign(scores.size(), 0.0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double t = targets[b][i];
      // -[t log sig(s) + (1-t) log(1-sig(s))] = softplus(s) - t*s
      out.loss += inv_n * (detail::softplus(scores[i]) - t * scores[i]);
      upstream[i] = inv_n * (detail::sigmoid(scores[i]) - t);
    }
    detail::backprop_session(params, q, s.displayed, upstream, out.grad);
  }
  return out;
}

// One online-EM step: E-step posteriors, beta_i moves toward the batch mean
// posterior examination at position i by `em_smoothing`, and the ranker
// takes one SGD step on the posterior relevance targets.
inline void rem_update(RankerParams& params, RemState& state, const Dataset& ds, std::span<const Session> batch,
                       double lr, double em_smoothing) {
  detail::require(!batch.empty(), "batch must be non-empty");
  detail::require(em_smoothing >= 0 && em_smoothing <= 1, "em_smoothing must be in [0,1]");
  std::vector<std::vector<double>> targets(batch.size());
  PositionWeights exam_sum{};
  std::array<std::size_t, kDisplayCutoff> exam_count{};
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& s = batch[b];
    const auto& q = ds.queries.at(s.query);
    const auto scores = detail::displayed_scores(params, q, s.displayed);
    targets[b].resize(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double gamma = clamp_probability(detail::sigmoid(scores[i]));
      const auto post = rem_posteriors(state.beta[i], gamma, s.clicks[i] != 0);
      targets[b][i] = post.relevant;
      exam_sum[i] += post.examined;
      exam_count[i] += 1;
    }
  }
  for (std::size_t i = 0; i < kDisplayCutoff; ++i) {
    if (exam_count[i] == 0) continue;
    const double batch_mean = exam_sum[i] / static_cast<double>(exam_count[i]);
    state.beta[i] = clamp_probability((1 - em_smoothing) * state.beta[i] + em_smoothing * batch_mean);
  }
  if (lr > 0) {
    const auto lg = rem_ranker_loss(params, ds, batch, targets);
    apply_sgd(params, lg.grad, lr);
  }
}

// ---- DLA -----------------------------------------------------------------

// Propensity logits g_1..g_10; P(o_i) is proportional to softmax(g)_i.
struct DlaState {
  PositionWeights logits{};

  // exp(g_1 - g_i): inverse propensity relative to position 1.
  double inverse_propensity(std::size_t position) const { return std::exp(logits[0] - logits[position]); }

  PropensityEstimate estimate() const {
    PropensityEstimate p;
    p.source = PropensitySource::kDla;
    for (std::size_t i = 0; i < kDisplayCutoff; ++i) p.weights[i] = std::exp(logits[i] - logits[0]);
    p.weights[0] = 1.0;
    return p;
  }
};

struct DlaOptions {
  // Upper bound on both inverse weights; <= 0 disables clipping.
  double max_weight = 0;
};

namespace detail {

inline std::vector<double> log_softmax(std::span<const double> x) {
  const double m = *std::max_element(x.begin(), x.end());
  double z = 0;
  for (double v : x) z += std::exp(v - m);
  const double lz = m + std::log(z);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - lz;
  return out;
}

inline double clip_weight(double w, double max_weight) { return max_weight > 0 ? std::min(w, max_weight) : w; }

}  // namespace detail

// Inverse relevance weights softmax_f(ref) / softmax_f(d) = exp(s_ref - s_d),
// with the document displayed at position 1 as reference.
inline std::vector<double> dla_relevance_weights(std::span<const double> displayed_scores, double max_weight = 0) {
  std::vector<double> v(displayed_scores.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = detail::clip_weight(std::exp(displayed_scores[0] - displayed_scores[i]), max_weight);
  return v;
}

// Ranker side: mean over sessions of sum_{clicked d} w_pos(d) * -log softmax_f(d),
// with the per-position inverse propensity weights held fixed.
inline LossAndGradient dla_ranker_loss(const RankerParams& params, const Dataset& ds, std::span<const Session> batch,
                                       std::span<const double> propensity_weights) {
  LossAndGradient out;
  out.grad = params.zero_gradient();
  out.n_terms = batch.size();
  if (batch.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  std::vector<double> upstream;
  for (const auto& s : batch) {
    if (s.num_clicks() == 0) continue;
    const auto& q = ds.queries.at(s.query);
    const auto scores = detail::displayed_scores(params, q, s.displayed);
    const auto logp = detail::log_softmax(scores);
    upstream.assign(scores.size(), 0.0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (!s.clicks[i]) continue;
      const double w = propensity_weights[i] * inv_n;
      out.loss -= w * logp[i];
      for (std::size_t j = 0; j < scores.size(); ++j) upstream[j] += w * std::exp(logp[j]);
      upstream[i] -= w;
    }
    detail::backprop_session(params, q, s.displayed, upstream, out.grad);
  }
  return out;
}

struct PropensityLossAndGradient {
  double loss = 0;
  PositionWeights grad{};
};

// Propensity side: mean over sessions of sum_{clicked d} v_d * -log softmax_g(pos(d)),
// the softmax running over the displayed positions. `relevance_weights[b]`
// is aligned with the displayed documents of session b and held fixed.
inline PropensityLossAndGradient dla_propensity_loss(const PositionWeights& logits, std::span<const Session> batch,
                                                     std::span<const std::vector<double>> relevance_weights) {
  PropensityLossAndGradient out;
  if (batch.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& s = batch[b];
    if (s.num_clicks() == 0) continue;
    const std::size_t n = s.displayed.size();
    const auto logp = detail::log_softmax(std::span<const double>(logits.data(), n));
    for (std::size_t i = 0; i < n; ++i) {
      if (!s.clicks[i]) continue;
      const double v = relevance_weights[b][i] * inv_n;
      out.loss -= v * logp[i];
      for (std::size_t j = 0; j < n; ++j) out.grad[j] += v * std::exp(logp[j]);
      out.grad[i] -= v;
    }
  }
  return out;
}

// One dual-learning step: both weight sets are computed from the current
// models, then the ranker and the propensity logits each take one SGD step.
inline void dla_update(RankerParams& params, DlaState& state, const Dataset& ds, std::span<const Session> batch,
                       double lr, double propensity_lr, const DlaOptions& opt = {}) {
  detail::require(!batch.empty(), "batch must be non-empty");
  std::vector<double> prop_w(kDisplayCutoff);
  for (std::size_t i = 0; i < kDisplayCutoff; ++i)
    prop_w[i] = detail::clip_weight(state.inverse_propensity(i), opt.max_weight);
  std::vector<std::vector<double>> rel_w(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b].num_clicks() == 0) continue;
    const auto& q = ds.queries.at(batch[b].query);
    rel_w[b] = dla_relevance_weights(detail::displayed_scores(params, q, batch[b].displayed), opt.max_weight);
  }
  const auto ranker = dla_ranker_loss(params, ds, batch, prop_w);
  const auto prop = dla_propensity_loss(state.logits, batch, rel_w);
  if (lr > 0) apply_sgd(params, ranker.grad, lr);
  if (propensity_lr > 0)
    for (std::size_t i = 0; i < kDisplayCutoff; ++i) state.logits[i] -= propensity_lr * prop.grad[i];
}

// ---- PairD ---------------------------------------------------------------

inline constexpr double kPairDMinRatio = 1e-3;

// Position-wise ratios for clicked (t_plus) and non-clicked (t_minus)
// documents, relative to position 1.
struct PairDState {
  PositionWeights t_plus{};
  PositionWeights t_minus{};
  double clip_max = 10.0;

  static PairDState ones(double clip_max = 10.0) {
    PairDState s;
    s.t_plus.fill(1.0);
    s.t_minus.fill(1.0);
    s.clip_max = clip_max;
    return s;
  }
};

inline double clip_ratio(double ratio, double clip_max) { return std::clamp(ratio, kPairDMinRatio, clip_max); }

inline LossAndGradient paird_loss(const RankerParams& params, const Dataset& ds, std::span<const Session> batch,
                                  const PairDState& state) {
  return weighted_pairwise_loss(params, ds, batch, [&](std::size_t i, std::size_t j) {
    return 1.0 / (state.t_plus[i] * state.t_minus[j]);
  });
}

// Re-estimates the ratios from the current model's pairwise losses:
//   t+_i ~ sqrt(sum_{pairs (i,j)} L_ij / t-_j), t-_j ~ sqrt(sum_{pairs (i,j)} L_ij / t+_i),
// each normalized to position 1, blended into the state by `smoothing`, and
// clipped to [kPairDMinRatio, clip_max]. Positions without pairs keep their value.
inline void paird_estimate_ratios(const RankerParams& params, PairDState& state, const Dataset& ds,
                                  std::span<const Session> batch, double smoothing) {
  PositionWeights plus_sum{}, minus_sum{};
  std::array<bool, kDisplayCutoff> plus_seen{}, minus_seen{};
  for (const auto& s : batch) {
    const std::size_t clicked = s.num_clicks();
    if (clicked == 0 || clicked == s.clicks.size()) continue;
    const auto scores = detail::displayed_scores(params, ds.queries.at(s.query), s.displayed);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (!s.clicks[i]) continue;
      for (std::size_t j = 0; j < scores.size(); ++j) {
        if (s.clicks[j]) continue;
        const double l = detail::pair_loss(scores[i], scores[j]);
        plus_sum[i] += l / state.t_minus[j];
        minus_sum[j] += l / state.t_plus[i];
        plus_seen[i] = minus_seen[j] = true;
      }
    }
  }
  auto blend = [&](PositionWeights& t, const PositionWeights& sum, const std::array<bool, kDisplayCutoff>& seen) {
    if (!seen[0] || sum[0] <= 0) return;
    for (std::size_t i = 0; i < kDisplayCutoff; ++i) {
      if (!seen[i]) continue;
      const double estimate = std::sqrt(sum[i] / sum[0]);
      t[i] = clip_ratio((1 - smoothing) * t[i] + smoothing * estimate, state.clip_max);
    }
    t[0] = 1.0;
  };
  blend(state.t_plus, plus_sum, plus_seen);
  blend(state.t_minus, minus_sum, minus_seen);
}

// One SGD step on the ratio-weighted pairwise loss, then ratio re-estimation.
inline void paird_update(RankerParams& params, PairDState& state, const Dataset& ds, std::span<const Session> batch,
                         double lr, double smoothing) {
  detail::require(!batch.empty(), "batch must be non-empty");
  const auto lg = paird_loss(params, ds, batch, state);
  paird_estimate_ratios(params, state, ds, batch, smoothing);
  if (lg.n_terms > 0) apply_sgd(params, lg.grad, lr);
}

// The single t that would make P(c=0) = t * P(r=0) hold for a document
// with examination probability `examination` and relevance `relevance`,
// given P(c=0) = 1 - P(o=1) P(r=1). It depends on the relevance whenever
// examination < 1, so no position-wise t can satisfy both equations.
inline double paird_implied_nonclick_ratio(double examination, double relevance) {
  detail::require(examination >= 0 && examination <= 1, "examination must be a probability");
  detail::require(relevance >= 0 && relevance < 1, "relevance must be in [0,1)");
  return (1.0 - examination * relevance) / (1.0 - relevance);
}

}  // namespace ultr
