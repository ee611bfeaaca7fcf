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

#include <Eigen/Dense>
#include <sstream>

#include "ultr/data.hpp"

namespace ultr {
namespace {

Dataset parse(const std::string& text) {
  std::istringstream in(text);
  return parse_letor(in);
}

TEST(ParseLetor, SingleLineDensifiesFeatures) {
  const auto ds = parse("2 qid:10 1:0.5 3:1.0 # d7\n");
  ASSERT_EQ(ds.queries.size(), 1u);
  EXPECT_EQ(ds.queries[0].query_id, "10");
  ASSERT_EQ(ds.queries[0].candidates.size(), 1u);
  const auto& d = ds.queries[0].candidates[0];
  EXPECT_EQ(d.label, 2);
  EXPECT_EQ(d.features, (std::vector<double>{0.5, 0.0, 1.0}));
  EXPECT_EQ(d.doc_id, "d7");
  EXPECT_EQ(ds.feature_dim, 3u);
}

TEST(ParseLetor, GroupsByQidInFileOrder) {
  const auto ds = parse("1 qid:10 1:0.1\n0 qid:11 1:0.3\n3 qid:10 2:0.2\n");
  ASSERT_EQ(ds.queries.size(), 2u);
  EXPECT_EQ(ds.queries[0].query_id, "10");
  ASSERT_EQ(ds.queries[0].candidates.size(), 2u);
  EXPECT_EQ(ds.queries[0].candidates[0].label, 1);
  EXPECT_EQ(ds.queries[0].candidates[1].label, 3);
  EXPECT_EQ(ds.queries[0].candidates[1].features, (std::vector<double>{0.0, 0.2}));
  EXPECT_EQ(ds.queries[1].query_id, "11");
}

TEST(ParseLetor, MissingCommentsFallBackToPositionalIds) {
  const auto ds = parse("1 qid:1 1:0.1\n0 qid:1 1:0.3 # x\n");
  EXPECT_EQ(ds.queries[0].candidates[0].doc_id, "0");
  EXPECT_EQ(ds.queries[0].candidates[1].doc_id, "1");
}

TEST(ParseLetor, LabelOutOfRangeIsValidationError) { EXPECT_THROW(parse("7 qid:1 1:0.1\n"), ValidationError); }

TEST(ParseLetor, MalformedLineReportsLineNumber) {
  try {
    parse("1 qid:1 1:0.1\n1 qid:1 x:2\n");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(parse("1 1:0.1\n"), ParseError);
  EXPECT_THROW(parse("1 qid:1 1:abc\n"), ParseError);
  EXPECT_THROW(parse("1.5 qid:1 1:0.1\n"), ParseError);
}

TEST(ParseLetor, EmptyStreamIsError) {
  EXPECT_THROW(parse(""), ParseError);
  EXPECT_THROW(parse("\n  \n# only a comment\n"), ParseError);
}

TEST(ParseLetor, RoundTripsThroughWriter) {
  auto ds = generate_synthetic(7, 6, 4, 3);
  std::ostringstream out;
  write_letor(out, ds);
  std::istringstream in(out.str());
  EXPECT_EQ(parse_letor(in), ds);
}

TEST(GenerateSynthetic, IsDeterministic) {
  EXPECT_EQ(generate_synthetic(1, 5, 2, 7), generate_synthetic(1, 5, 2, 7));
  EXPECT_NE(generate_synthetic(1, 5, 2, 7), generate_synthetic(1, 5, 2, 8));
}

TEST(GenerateSynthetic, LabelHistogramIsBalanced) {
  const auto ds = generate_synthetic(1000, 25, 20, 1);
  std::array<double, 5> hist{};
  for (const auto& q : ds.queries)
    for (const auto& d : q.candidates) hist[static_cast<std::size_t>(d.label)] += 1;
  for (double h : hist) EXPECT_NEAR(h / ds.num_documents(), 0.2, 0.02);
  EXPECT_NO_THROW(validate(ds));
}

TEST(GenerateSynthetic, LabelsFollowTeacherWithinDataset) {
  // Labels come from a linear teacher, so a least-squares fit on the
  // labels already separates grade 0 from grade 4.
  const auto ds = generate_synthetic(200, 10, 5, 11);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(ds.num_documents()), 5);
  Eigen::VectorXd y(X.rows());
  Eigen::Index r = 0;
  for (const auto& q : ds.queries)
    for (const auto& d : q.candidates) {
      for (int f = 0; f < 5; ++f) X(r, f) = d.features[static_cast<std::size_t>(f)];
      y(r++) = d.label;
    }
  const Eigen::VectorXd w = X.colPivHouseholderQr().solve(y);
  double max0 = -1e9, min4 = 1e9;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double s = X.row(i).dot(w);
    if (y(i) == 0) max0 = std::max(max0, s);
    if (y(i) == 4) min4 = std::min(min4, s);
  }
  EXPECT_LT(max0, min4);
}

TEST(GenerateSynthetic, ZeroSizesArePreconditionErrors) {
  EXPECT_THROW(generate_synthetic(10, 0, 3, 1), PreconditionError);
  EXPECT_THROW(generate_synthetic(0, 5, 3, 1), PreconditionError);
  EXPECT_THROW(generate_synthetic(10, 5, 0, 1), PreconditionError);
}

TEST(SplitDataset, EightyTenTen) {
  const auto s = split_dataset(generate_synthetic(1000, 3, 2, 1));
  EXPECT_EQ(s.train.queries.size(), 800u);
  EXPECT_EQ(s.valid.queries.size(), 100u);
  EXPECT_EQ(s.test.queries.size(), 100u);
  EXPECT_EQ(s.test.split_tag, SplitTag::kTest);
}

Dataset column(const std::vector<double>& values) {
  Dataset ds;
  ds.feature_dim = 1;
  Query q{"q", {}};
  for (std::size_t i = 0; i < values.size(); ++i) q.candidates.push_back({std::to_string(i), {values[i]}, 0});
  ds.queries.push_back(q);
  return ds;
}

TEST(NormalizeFeatures, MinMaxOnTrain) {
  const auto train = column({0, 5, 10});
  const std::vector<Dataset> others = {column({12, -5})};
  const auto out = normalize_features(train, others);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_DOUBLE_EQ(out[0].queries[0].candidates[0].features[0], 0.0);
  EXPECT_DOUBLE_EQ(out[0].queries[0].candidates[1].features[0], 0.5);
  EXPECT_DOUBLE_EQ(out[0].queries[0].candidates[2].features[0], 1.0);
  EXPECT_DOUBLE_EQ(out[1].queries[0].candidates[0].features[0], 1.2);
  EXPECT_DOUBLE_EQ(out[1].queries[0].candidates[1].features[0], -0.5);
}

TEST(NormalizeFeatures, ConstantColumnMapsToZero) {
  const auto out = normalize_features(column({3, 3, 3}), {});
  for (const auto& d : out[0].queries[0].candidates) EXPECT_EQ(d.features[0], 0.0);
}

TEST(NormalizeFeatures, IdempotentOnTrain) {
  const auto ds = generate_synthetic(20, 5, 4, 2);
  const auto once = normalize_features(ds, {})[0];
  const auto twice = normalize_features(once, {})[0];
  for (std::size_t q = 0; q < once.queries.size(); ++q)
    for (std::size_t d = 0; d < once.queries[q].size(); ++d)
      for (std::size_t f = 0; f < 4; ++f)
        EXPECT_NEAR(once.queries[q].candidates[d].features[f], twice.queries[q].candidates[d].features[f], 1e-12);
}

TEST(NormalizeFeatures, DimensionMismatchIsError) {
  const std::vector<Dataset> others = {generate_synthetic(2, 2, 3, 1)};
  EXPECT_THROW(normalize_features(generate_synthetic(2, 2, 2, 1), others), ValidationError);
}

TEST(Validate, RejectsBrokenInvariants) {
  auto ds = column({1, 2});
  ds.queries[0].candidates[1].doc_id = "0";
  EXPECT_THROW(validate(ds), ValidationError);
  ds = column({1, 2});
  ds.queries[0].candidates[0].features.push_back(1);
  EXPECT_THROW(validate(ds), ValidationError);
  ds = column({1});
  ds.queries.push_back(ds.queries[0]);
  EXPECT_THROW(validate(ds), ValidationError);
}

}  // namespace
}  // namespace ultr
