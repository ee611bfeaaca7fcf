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

#include <gtest/gtest.h>

#include "testing.hpp"
#include "ultr/simulator.hpp"

namespace ultr {
namespace {

TEST(Examination, Examples) {
  ClickModel m;
  EXPECT_DOUBLE_EQ(examination_prob(m, 1), 0.68);
  m.eta = 0;
  for (int i = 1; i <= 10; ++i) EXPECT_EQ(examination_prob(m, i), 1.0);
  m.eta = 2;
  EXPECT_NEAR(examination_prob(m, 10), 0.0036, 1e-15);
  EXPECT_THROW(examination_prob(m, 0), PreconditionError);
  EXPECT_THROW(examination_prob(m, 11), PreconditionError);
}

TEST(Examination, NonIncreasingInPosition) {
  for (double eta : {0.0, 0.5, 1.0, 2.0}) {
    ClickModel m;
    m.eta = eta;
    for (int i = 1; i < 10; ++i) EXPECT_GE(examination_prob(m, i), examination_prob(m, i + 1));
  }
}

TEST(Relevance, Examples) {
  EXPECT_DOUBLE_EQ(perceived_relevance_prob(4, 0.1), 1.0);
  EXPECT_EQ(perceived_relevance_prob(0, 0.1), 0.1);
  EXPECT_EQ(perceived_relevance_prob(0, 0.37), 0.37);
  EXPECT_DOUBLE_EQ(perceived_relevance_prob(2, 0.1), 0.28);
  EXPECT_THROW(perceived_relevance_prob(5, 0.1), PreconditionError);
  EXPECT_THROW(perceived_relevance_prob(-1, 0.1), PreconditionError);
}

TEST(ClickModel, Validate) {
  ClickModel m;
  EXPECT_NO_THROW(m.validate());
  m.epsilon = 1.0;
  EXPECT_THROW(m.validate(), ValidationError);
  m = ClickModel{};
  m.eta = -1;
  EXPECT_THROW(m.validate(), ValidationError);
}

Query graded_query(std::size_t n, int label) {
  Query q;
  q.query_id = "q";
  for (std::size_t i = 0; i < n; ++i) q.candidates.push_back({std::to_string(i), {0.0}, label});
  return q;
}

std::vector<std::size_t> identity(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

TEST(SimulateClicks, CertainAndImpossibleClicks) {
  Rng rng = make_rng(1);
  ClickModel m;
  m.eta = 0;
  m.epsilon = 0;
  const auto all4 = graded_query(15, 4);
  const auto all0 = graded_query(15, 0);
  for (int t = 0; t < 100; ++t) {
    const auto s = simulate_clicks(m, all4, 0, identity(15), Origin::kLogged, rng);
    EXPECT_EQ(s.displayed.size(), 10u);
    EXPECT_EQ(s.num_clicks(), 10u);
    EXPECT_EQ(s.origin, Origin::kLogged);
  }
  m.eta = 1;
  for (int t = 0; t < 100; ++t) EXPECT_EQ(simulate_clicks(m, all0, 0, identity(15), Origin::kOnline, rng).num_clicks(), 0u);
}

TEST(SimulateClicks, ShortListsAndEmptyRanking) {
  Rng rng = make_rng(2);
  const auto q = graded_query(3, 2);
  const auto s = simulate_clicks(ClickModel{}, q, 7, identity(3), Origin::kOnline, rng);
  EXPECT_EQ(s.query, 7u);
  EXPECT_EQ(s.displayed.size(), 3u);
  EXPECT_EQ(s.clicks.size(), 3u);
  EXPECT_THROW(simulate_clicks(ClickModel{}, q, 0, std::vector<std::size_t>{}, Origin::kOnline, rng),
               PreconditionError);
}

TEST(SimulateClicks, TopPositionClickRate) {
  Rng rng = make_rng(3);
  const std::vector<int> labels = {4};
  constexpr int kTrials = 100000;
  int clicks = 0;
  for (int t = 0; t < kTrials; ++t) clicks += sample_clicks(ClickModel{}, labels, rng)[0];
  EXPECT_NEAR(static_cast<double>(clicks) / kTrials, 0.68, 0.01);
}

TEST(SimulateClicks, SeededDeterminism) {
  const auto q = graded_query(10, 3);
  Rng a = make_rng(4), b = make_rng(4);
  for (int t = 0; t < 20; ++t)
    EXPECT_EQ(simulate_clicks(ClickModel{}, q, 0, identity(10), Origin::kOnline, a),
              simulate_clicks(ClickModel{}, q, 0, identity(10), Origin::kOnline, b));
}

TEST(SimulateClicks, FactorizesPerCell) {
  // Every (position, grade) cell within 3 sigma of the product form.
  Rng rng = make_rng(5);
  ClickModel m;
  constexpr int kTrials = 3000;
  for (int y = 0; y <= 4; ++y) {
    const std::vector<int> labels(10, y);
    std::array<int, 10> clicks{};
    for (int t = 0; t < kTrials; ++t) {
      const auto c = sample_clicks(m, labels, rng);
      for (std::size_t i = 0; i < 10; ++i) clicks[i] += c[i];
    }
    for (int i = 1; i <= 10; ++i) {
      const double p = examination_prob(m, i) * perceived_relevance_prob(y, m.epsilon);
      const double sigma = std::sqrt(p * (1 - p) / kTrials);
      EXPECT_NEAR(clicks[static_cast<std::size_t>(i - 1)] / double(kTrials), p, 3 * sigma + 1e-12)
          << "position " << i << " grade " << y;
    }
  }
}

TEST(Propensity, RandomizationMatchesRatios) {
  Rng rng = make_rng(6);
  const auto ds = generate_synthetic(100, 20, 5, 3);
  const auto w = estimate_propensity_by_randomization(ds, ClickModel{}, 200000, rng);
  EXPECT_EQ(w[0], 1.0);
  EXPECT_NEAR(w[1], 0.61 / 0.68, 0.02);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(w[i], kEyeTrackingExamination[i] / 0.68, 0.02);
}

TEST(Propensity, UniformExamination) {
  Rng rng = make_rng(7);
  const auto ds = generate_synthetic(100, 20, 5, 3);
  ClickModel m;
  m.eta = 0;
  const auto w = estimate_propensity_by_randomization(ds, m, 200000, rng);
  for (double v : w) EXPECT_NEAR(v, 1.0, 0.02);
}

TEST(Propensity, Errors) {
  Rng rng = make_rng(8);
  const auto ds = generate_synthetic(10, 20, 5, 3);
  EXPECT_THROW(estimate_propensity_by_randomization(ds, ClickModel{}, 0, rng), PreconditionError);

  // Lists of three documents never fill position 4.
  Dataset short_lists;
  short_lists.feature_dim = 1;
  short_lists.queries.push_back(graded_query(3, 4));
  try {
    estimate_propensity_by_randomization(short_lists, ClickModel{}, 1000, rng);
    FAIL() << "expected EstimationError";
  } catch (const EstimationError& e) {
    EXPECT_EQ(e.position(), 4);
  }
}

}  // namespace
}  // namespace ultr
