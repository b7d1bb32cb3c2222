#include <gtest/gtest.h>

#include <limits>

#include "rankpool/core_types.hpp"
#include "test_util.hpp"

using namespace rankpool;
using rankpool::test::seq;

namespace {

Dataset two_sequences() {
  Dataset d;
  d.class_names = {"a", "b"};
  d.sequences.push_back(seq({{1, 2}, {3, 4}}, "x", 0));
  d.sequences.push_back(seq({{5, 6}}, "y", 1));
  return d;
}

}  // namespace

TEST(ValidateDataset, WellFormedHasNoViolations) { EXPECT_TRUE(validate_dataset(two_sequences()).empty()); }

TEST(ValidateDataset, MixedDimensionsNamesTheSequence) {
  Dataset d = two_sequences();
  d.sequences[1].frames = {Vector::Zero(4), Vector::Zero(5)};
  d.sequences[1].id = "ragged";
  const auto v = validate_dataset(d);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].id, "ragged");
  EXPECT_NE(v[0].rule.find("mixed"), std::string::npos);
}

TEST(ValidateDataset, NonFiniteValue) {
  Dataset d = two_sequences();
  d.sequences[0].frames[1][0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_EQ(validate_dataset(d).size(), 1u);
  d.sequences[0].frames[1][0] = std::numeric_limits<double>::infinity();
  EXPECT_EQ(validate_dataset(d).size(), 1u);
}

TEST(ValidateDataset, EmptySequenceAndZeroDimension) {
  Dataset d = two_sequences();
  d.sequences[0].frames.clear();
  d.sequences[1].frames = {Vector()};
  const auto v = validate_dataset(d);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0].id, "x");
  EXPECT_EQ(v[1].id, "y");
}

TEST(ValidateDataset, LabelOutOfRange) {
  Dataset d = two_sequences();
  d.sequences[1].label = 2;
  EXPECT_EQ(validate_dataset(d).size(), 1u);
  d.sequences[1].label = -1;
  EXPECT_EQ(validate_dataset(d).size(), 1u);
}

TEST(ValidateDataset, IdempotentAndPure) {
  Dataset d = two_sequences();
  d.sequences[0].frames[0][1] = std::numeric_limits<double>::infinity();
  const Matrix before = d.sequences[1].matrix();
  const auto a = validate_dataset(d);
  const auto b = validate_dataset(d);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_EQ(a[i].rule, b[i].rule);
  }
  EXPECT_EQ(d.sequences[1].matrix(), before);
}

TEST(FrameSequence, MatrixRoundTripAndRaggedThrows) {
  const Matrix m = rankpool::test::rows({{1, 2, 3}, {4, 5, 6}});
  const auto s = FrameSequence::from_matrix(m, "id", 3);
  EXPECT_EQ(s.length(), 2u);
  EXPECT_EQ(s.dim(), 3u);
  EXPECT_EQ(s.matrix(), m);
  FrameSequence bad({Vector::Zero(2), Vector::Zero(3)}, "bad");
  EXPECT_THROW(bad.matrix(), InvalidInput);
  EXPECT_THROW(require_valid(bad), InvalidInput);
}

TEST(FrameSequence, SingleFrameIsValid) { EXPECT_NO_THROW(require_valid(seq({{7, -2}}))); }
