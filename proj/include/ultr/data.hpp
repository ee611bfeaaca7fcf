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

// Learning-to-rank datasets: LETOR/SVMrank text I/O, a synthetic generator
// with a hidden linear teacher, and train-fitted min-max normalization.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ultr/common.hpp"

namespace ultr {

inline constexpr int kMaxLabel = 4;

struct Document {
  std::string doc_id;
  std::vector<double> features;
  int label = 0;

  bool operator==(const Document&) const = default;
};

struct Query {
  std::string query_id;
  std::vector<Document> candidates;

  std::size_t size() const { return candidates.size(); }
  bool operator==(const Query&) const = default;
};

enum class SplitTag { kTrain, kValid, kTest };

inline std::string_view to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::kTrain: return "train";
    case SplitTag::kValid: return "valid";
    case SplitTag::kTest: return "test";
  }
  return "?";
}

struct Dataset {
  std::vector<Query> queries;
  std::size_t feature_dim = 0;
  SplitTag split_tag = SplitTag::kTrain;

  std::size_t num_documents() const {
    std::size_t n = 0;
    for (const auto& q : queries) n += q.size();
    return n;
  }
  bool operator==(const Dataset&) const = default;
};

// Throws ValidationError if any dataset invariant is broken.
inline void validate(const Dataset& ds) {
  detail::require<ValidationError>(ds.feature_dim > 0, "feature_dim must be positive");
  std::unordered_set<std::string> qids;
  for (const auto& q : ds.queries) {
    detail::require<ValidationError>(!q.candidates.empty(), "query ", q.query_id, " has no candidates");
    detail::require<ValidationError>(qids.insert(q.query_id).second, "duplicate query id ", q.query_id);
    std::unordered_set<std::string> dids;
    for (const auto& d : q.candidates) {
      detail::require<ValidationError>(d.label >= 0 && d.label <= kMaxLabel, "label ", d.label,
                                       " outside [0,", kMaxLabel, "] in query ", q.query_id);
      detail::require<ValidationError>(d.features.size() == ds.feature_dim, "document ", d.doc_id,
                                       " has ", d.features.size(), " features, expected ", ds.feature_dim);
      detail::require<ValidationError>(dids.insert(d.doc_id).second, "duplicate doc id ", d.doc_id,
                                       " in query ", q.query_id);
    }
  }
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  // std::from_chars for double is available in libstdc++ 11.
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace detail

// Parses LETOR/SVMrank text: `<label> qid:<qid> <fid>:<val> ... [# comment]`.
// Documents are grouped by qid in order of first appearance; missing feature
// ids are densified to 0.0. The comment, when present, becomes the doc id;
// otherwise (or on a clash within the query) ids are positional.
inline Dataset parse_letor(std::istream& in, SplitTag tag = SplitTag::kTrain) {
  struct Row {
    std::vector<std::pair<std::size_t, double>> feats;
    int label;
    std::string comment;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<Row>> rows;
  std::size_t max_fid = 0;
  std::size_t line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    std::string comment;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) {
      comment = std::string(detail::trim(view.substr(hash + 1)));
      view = view.substr(0, hash);
    }
    const auto tokens = detail::split_ws(detail::trim(view));
    if (tokens.empty()) continue;
    if (tokens.size() < 2) throw ParseError(line_no, "expected '<label> qid:<id> ...'");
    Row row;
    double label_value = 0;
    if (!detail::parse_double(tokens[0], label_value) || label_value != std::floor(label_value))
      throw ParseError(line_no, "label '" + std::string(tokens[0]) + "' is not an integer");
    if (label_value < 0 || label_value > kMaxLabel)
      throw ValidationError("line " + std::to_string(line_no) + ": label " + std::string(tokens[0]) +
                            " outside [0,4]");
    row.label = static_cast<int>(label_value);
    if (tokens[1].substr(0, 4) != "qid:" || tokens[1].size() == 4)
      throw ParseError(line_no, "second field must be qid:<id>");
    std::string qid(tokens[1].substr(4));
    std::size_t prev_fid = 0;
    for (std::size_t t = 2; t < tokens.size(); ++t) {
      const auto colon = tokens[t].find(':');
      if (colon == std::string_view::npos) throw ParseError(line_no, "feature '" + std::string(tokens[t]) + "' lacks ':'");
      std::size_t fid = 0;
      double value = 0;
      if (!detail::parse_int(tokens[t].substr(0, colon), fid) || fid == 0)
        throw ParseError(line_no, "feature id '" + std::string(tokens[t].substr(0, colon)) + "' is not a positive integer");
      if (!detail::parse_double(tokens[t].substr(colon + 1), value))
        throw ParseError(line_no, "feature value '" + std::string(tokens[t].substr(colon + 1)) + "' is not a number");
      if (fid <= prev_fid) throw ParseError(line_no, "feature ids must be strictly increasing");
      prev_fid = fid;
      max_fid = std::max(max_fid, fid);
      row.feats.emplace_back(fid, value);
    }
    row.comment = std::move(comment);
    auto [it, inserted] = rows.try_emplace(qid);
    if (inserted) order.push_back(qid);
    it->second.push_back(std::move(row));
  }
  if (order.empty()) throw ParseError(line_no, "no documents in input");
  if (max_fid == 0) throw ParseError(line_no, "no features in input");

  Dataset ds;
  ds.feature_dim = max_fid;
  ds.split_tag = tag;
  ds.queries.reserve(order.size());
  for (const auto& qid : order) {
    Query q;
    q.query_id = qid;
    auto& qrows = rows[qid];
    std::unordered_set<std::string> seen;
    bool comment_ids = true;
    for (const auto& r : qrows) comment_ids = comment_ids && !r.comment.empty() && seen.insert(r.comment).second;
    for (std::size_t i = 0; i < qrows.size(); ++i) {
      Document d;
      d.doc_id = comment_ids ? qrows[i].comment : std::to_string(i);
      d.label = qrows[i].label;
      d.features.assign(max_fid, 0.0);
      for (const auto& [fid, value] : qrows[i].feats) d.features[fid - 1] = value;
      q.candidates.push_back(std::move(d));
    }
    ds.queries.push_back(std::move(q));
  }
  return ds;
}

// Writes every feature explicitly at round-trip precision so that
// parse_letor(write_letor(ds)) == ds.
inline void write_letor(std::ostream& out, const Dataset& ds) {
  char buf[64];
  for (const auto& q : ds.queries) {
    for (const auto& d : q.candidates) {
      out << d.label << " qid:" << q.query_id;
      for (std::size_t f = 0; f < d.features.size(); ++f) {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), d.features[f]);
        out << ' ' << (f + 1) << ':' << std::string_view(buf, ptr - buf);
      }
      out << " # " << d.doc_id << '\n';
    }
  }
}

// Synthetic benchmark: i.i.d. standard-normal features, a hidden teacher
// weight vector drawn first from the seed, and labels 0..4 assigned by
// global rank of the teacher score (20/40/60/80 percentile buckets).
inline Dataset generate_synthetic(std::size_t n_queries, std::size_t docs_per_query, std::size_t feature_dim,
                                  std::uint64_t seed) {
  detail::require(n_queries >= 1, "n_queries must be >= 1");
  detail::require(docs_per_query >= 1, "docs_per_query must be >= 1");
  detail::require(feature_dim >= 1, "feature_dim must be >= 1");
  Rng rng = make_rng(seed, 0x5eed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> teacher(feature_dim);
  for (auto& w : teacher) w = normal(rng);

  Dataset ds;
  ds.feature_dim = feature_dim;
  std::vector<double> teacher_scores;
  teacher_scores.reserve(n_queries * docs_per_query);
  ds.queries.resize(n_queries);
  for (std::size_t qi = 0; qi < n_queries; ++qi) {
    auto& q = ds.queries[qi];
    q.query_id = std::to_string(qi + 1);
    q.candidates.resize(docs_per_query);
    for (std::size_t di = 0; di < docs_per_query; ++di) {
      auto& d = q.candidates[di];
      d.doc_id = std::to_string(di);
      d.features.resize(feature_dim);
      double s = 0;
      for (std::size_t f = 0; f < feature_dim; ++f) {
        d.features[f] = normal(rng);
        s += teacher[f] * d.features[f];
      }
      teacher_scores.push_back(s);
    }
  }
  const std::size_t n = teacher_scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return teacher_scores[a] < teacher_scores[b]; });
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t flat = order[r];
    ds.queries[flat / docs_per_query].candidates[flat % docs_per_query].label =
        static_cast<int>((r * (kMaxLabel + 1)) / n);
  }
  return ds;
}

// Contiguous query split by fractions; the remainder goes to test.
struct Splits {
  Dataset train, valid, test;
};

inline Splits split_dataset(const Dataset& ds, double train_fraction = 0.8, double valid_fraction = 0.1) {
  detail::require(train_fraction > 0 && valid_fraction >= 0 && train_fraction + valid_fraction <= 1.0,
                  "invalid split fractions");
  const std::size_t n = ds.queries.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * n));
  const auto n_valid = std::min(n - n_train, static_cast<std::size_t>(std::llround(valid_fraction * n)));
  Splits s;
  for (auto* part : {&s.train, &s.valid, &s.test}) part->feature_dim = ds.feature_dim;
  s.train.split_tag = SplitTag::kTrain;
  s.valid.split_tag = SplitTag::kValid;
  s.test.split_tag = SplitTag::kTest;
  s.train.queries.assign(ds.queries.begin(), ds.queries.begin() + n_train);
  s.valid.queries.assign(ds.queries.begin() + n_train, ds.queries.begin() + n_train + n_valid);
  s.test.queries.assign(ds.queries.begin() + n_train + n_valid, ds.queries.end());
  return s;
}

// Per-feature affine map x -> (x - min) / (max - min) fitted on a training split.
// Constant features map to 0.0; values outside the training range are not clamped.
struct FeatureScaler {
  std::vector<double> min;
  std::vector<double> inv_range;  // 0 for constant features

  static FeatureScaler fit(const Dataset& train) {
    FeatureScaler s;
    const std::size_t dim = train.feature_dim;
    std::vector<double> lo(dim, std::numeric_limits<double>::infinity());
    std::vector<double> hi(dim, -std::numeric_limits<double>::infinity());
    for (const auto& q : train.queries)
      for (const auto& d : q.candidates)
        for (std::size_t f = 0; f < dim; ++f) {
          lo[f] = std::min(lo[f], d.features[f]);
          hi[f] = std::max(hi[f], d.features[f]);
        }
    s.min.resize(dim);
    s.inv_range.resize(dim);
    for (std::size_t f = 0; f < dim; ++f) {
      const bool empty = !std::isfinite(lo[f]);
      s.min[f] = empty ? 0.0 : lo[f];
      const double range = empty ? 0.0 : hi[f] - lo[f];
      s.inv_range[f] = range > 0 ? 1.0 / range : 0.0;
    }
    return s;
  }

  void apply(std::span<double> x) const {
    for (std::size_t f = 0; f < x.size(); ++f) x[f] = (x[f] - min[f]) * inv_range[f];
  }

  Dataset transform(Dataset ds) const {
    detail::require<ValidationError>(ds.feature_dim == min.size(), "feature dimension mismatch: ", ds.feature_dim,
                                     " vs scaler ", min.size());
    for (auto& q : ds.queries)
      for (auto& d : q.candidates) apply(d.features);
    return ds;
  }
};

// Fits min-max scaling on `train` and applies it to train and every other split.
// Returns the transformed train split first, followed by `others` in order.
inline std::vector<Dataset> normalize_features(const Dataset& train, std::span<const Dataset> others) {
  for (const auto& o : others)
    detail::require<ValidationError>(o.feature_dim == train.feature_dim, "feature dimension mismatch: ",
                                     o.feature_dim, " vs train ", train.feature_dim);
  const auto scaler = FeatureScaler::fit(train);
  std::vector<Dataset> out;
  out.reserve(others.size() + 1);
  out.push_back(scaler.transform(train));
  for (const auto& o : others) out.push_back(scaler.transform(o));
  return out;
}

}  // namespace ultr
