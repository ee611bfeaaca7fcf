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

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ultr/common.hpp"
#include "ultr/data.hpp"
#include "ultr/ranker.hpp"

namespace ultr {

inline constexpr std::array<int, 4> kCutoffs = {1, 3, 5, 10};

namespace detail {
inline double gain(int label) { return static_cast<double>((1 << label) - 1); }
inline double dcg(std::span<const int> labels, std::size_t k) {
  double s = 0;
  for (std::size_t i = 0; i < std::min(k, labels.size()); ++i) s += gain(labels[i]) / std::log2(static_cast<double>(i) + 2.0);
  return s;
}
}  // namespace detail

// nDCG@k with gain 2^y-1 and discount 1/log2(rank+1). A list whose ideal
// DCG is zero scores 0.0.
inline double ndcg_at_k(std::span<const int> ranked_labels, int k) {
  detail::require(k >= 1, "k must be >= 1");
  const auto kk = static_cast<std::size_t>(k);
  std::vector<int> ideal(ranked_labels.begin(), ranked_labels.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double idcg = detail::dcg(ideal, kk);
  if (idcg <= 0) return 0.0;
  return detail::dcg(ranked_labels, kk) / idcg;
}

// ERR@k with satisfaction probability R = (2^y-1)/2^4.
inline double err_at_k(std::span<const int> ranked_labels, int k) {
  detail::require(k >= 1, "k must be >= 1");
  constexpr double kMaxGrade = 1 << kMaxLabel;
  double err = 0, not_satisfied = 1;
  const std::size_t n = std::min(static_cast<std::size_t>(k), ranked_labels.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double r = detail::gain(ranked_labels[i]) / kMaxGrade;
    err += not_satisfied * r / static_cast<double>(i + 1);
    not_satisfied *= 1 - r;
  }
  return err;
}

// Two-sided paired permutation test: random per-query sign flips of the
// differences; p = (1 + #{|mean flipped| >= |mean observed|}) / (1 + n).
inline double fisher_randomization_test(std::span<const double> a, std::span<const double> b,
                                        std::size_t n_permutations, Rng& rng) {
  detail::require<ValidationError>(a.size() == b.size(), "per-query lists differ in length: ", a.size(), " vs ",
                                   b.size());
  detail::require(!a.empty(), "per-query lists must be non-empty");
  detail::require(n_permutations >= 1, "n_permutations must be >= 1");
  const std::size_t n = a.size();
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = a[i] - b[i];
  const double observed = std::abs(std::accumulate(diff.begin(), diff.end(), 0.0));
  // Tolerance for sums that tie mathematically but differ in rounding.
  const double tol = 1e-9 * std::max(1.0, observed);
  std::bernoulli_distribution coin(0.5);
  std::size_t extreme = 0;
  for (std::size_t p = 0; p < n_permutations; ++p) {
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) sum += coin(rng) ? diff[i] : -diff[i];
    if (std::abs(sum) >= observed - tol) ++extreme;
  }
  return static_cast<double>(extreme + 1) / static_cast<double>(n_permutations + 1);
}

// Per-query metric values of one ranker on one dataset.
struct Evaluation {
  // [cutoff index][query]
  std::array<std::vector<double>, kCutoffs.size()> ndcg;
  std::array<std::vector<double>, kCutoffs.size()> err;

  static double mean(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  }
  double mean_ndcg(std::size_t cutoff_index) const { return mean(ndcg[cutoff_index]); }
  double mean_err(std::size_t cutoff_index) const { return mean(err[cutoff_index]); }
};

inline constexpr std::size_t cutoff_index(int k) {
  for (std::size_t i = 0; i < kCutoffs.size(); ++i)
    if (kCutoffs[i] == k) return i;
  return kCutoffs.size();
}

inline std::vector<int> ranked_labels(const Query& q, std::span<const std::size_t> order) {
  std::vector<int> labels;
  labels.reserve(order.size());
  for (auto i : order) labels.push_back(q.candidates[i].label);
  return labels;
}

inline Evaluation evaluate(const RankerParams& params, const Dataset& ds) {
  Evaluation e;
  for (auto& v : e.ndcg) v.reserve(ds.queries.size());
  for (auto& v : e.err) v.reserve(ds.queries.size());
  for (const auto& q : ds.queries) {
    const auto labels = ranked_labels(q, rank(params, q));
    for (std::size_t c = 0; c < kCutoffs.size(); ++c) {
      e.ndcg[c].push_back(ndcg_at_k(labels, kCutoffs[c]));
      e.err[c].push_back(err_at_k(labels, kCutoffs[c]));
    }
  }
  return e;
}

inline double mean_ndcg_at(const RankerParams& params, const Dataset& ds, int k) {
  double sum = 0;
  for (const auto& q : ds.queries) sum += ndcg_at_k(ranked_labels(q, rank(params, q)), k);
  return ds.queries.empty() ? 0.0 : sum / static_cast<double>(ds.queries.size());
}

// Summary of one system across repeats.
struct SystemSummary {
  std::string name;
  std::size_t n_repeats = 0;
  // [cutoff index]
  std::array<double, kCutoffs.size()> ndcg_mean{}, ndcg_std{}, err_mean{}, err_std{};
  std::array<double, kCutoffs.size()> ndcg_p{}, err_p{};  // vs baseline; 1.0 for the baseline itself
  // Per-query values pooled over repeats, aligned across systems.
  std::array<std::vector<double>, kCutoffs.size()> ndcg_per_query, err_per_query;
};

struct MetricReport {
  std::string baseline;
  std::vector<SystemSummary> systems;

  const SystemSummary* find(const std::string& name) const {
    for (const auto& s : systems)
      if (s.name == name) return &s;
    return nullptr;
  }
};

// Sample mean and standard deviation (n-1 denominator; 0 for one value).
inline std::pair<double, double> mean_std(std::span<const double> v) {
  if (v.empty()) return {0.0, 0.0};
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() == 1) return {m, 0.0};
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

}  // namespace ultr
