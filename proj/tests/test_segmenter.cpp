#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "seamstitch/segmenter.hpp"
#include "support.hpp"

using namespace seamstitch;
using testing_support::toy_bundle;

TEST(Plan, PaperParameters) {
  const SegmentPlan p = plan_segments(150, 60, 30);
  const std::vector<FrameRange> expected = {{1, 60}, {31, 90}, {61, 120}, {91, 150}};
  EXPECT_EQ(p.ranges, expected);
}

TEST(Plan, TailSegmentIsAnchoredAtTheEnd) {
  const SegmentPlan p = plan_segments(100, 60, 30);
  const std::vector<FrameRange> expected = {{1, 60}, {31, 90}, {41, 100}};
  EXPECT_EQ(p.ranges, expected);
}

TEST(Plan, SingleSegment) {
  const SegmentPlan p = plan_segments(60, 60, 30);
  ASSERT_EQ(p.num_segments(), 1);
  EXPECT_EQ(p.range(1), (FrameRange{1, 60}));
}

TEST(Plan, InvariantsOverManyShapes) {
  for (int n = 10; n <= 400; n += 7)
    for (int l : {5, 10, 60})
      for (int pp : {1, 2, l / 2, l - 1}) {
        if (l > n || pp < 1 || pp >= l) continue;
        const SegmentPlan p = plan_segments(n, l, pp);
        EXPECT_EQ(p.ranges.front().first, 1);
        EXPECT_EQ(p.ranges.back().last, n);
        for (int k = 1; k <= p.num_segments(); ++k) {
          EXPECT_EQ(p.range(k).length(), l);
          if (k > 1) EXPECT_GE(p.range(k - 1).last - p.range(k).first + 1, pp);
        }
        for (int f = 1; f <= n; ++f) {
          const int o = owner_segment(p, f);
          ASSERT_GE(o, 1);
          EXPECT_TRUE(p.range(o).contains(f));
        }
      }
}

TEST(Plan, Errors) {
  EXPECT_THROW(plan_segments(0, 60, 30), Error);
  EXPECT_THROW(plan_segments(100, 60, 60), Error);
  EXPECT_THROW(plan_segments(50, 60, 30), Error);
  EXPECT_THROW(plan_segments(100, 60, 0), Error);
}

TEST(Owner, EarliestSegmentOutsideLeadingHalf) {
  const SegmentPlan p = plan_segments(150, 60, 30);
  EXPECT_EQ(owner_segment(p, 1), 1);
  EXPECT_EQ(owner_segment(p, 60), 1);
  EXPECT_EQ(owner_segment(p, 61), 2);
  EXPECT_EQ(owner_segment(p, 150), 4);
  EXPECT_EQ(owner_segment(p, 151), 0);
}

TEST(Validate, CleanBundle) {
  const SegmentPlan p = plan_segments(20, 10, 5);
  const ValidationReport r = validate_bundle(toy_bundle(2, 6, 10), p);
  EXPECT_TRUE(r.ok()) << r.summary();
}

TEST(Validate, NanDepthNamesFrameAndPixel) {
  const SegmentPlan p = plan_segments(20, 10, 5);
  SegmentBundle b = toy_bundle(1, 1, 10);
  b.frames[3].depth.values(17) = std::numeric_limits<double>::quiet_NaN();
  const ValidationReport r = validate_bundle(b, p);
  ASSERT_EQ(r.issues.size(), 1u);
  EXPECT_EQ(r.issues[0].kind, ValidationIssue::Kind::NonFinite);
  EXPECT_EQ(r.issues[0].frame_id, 4);
  EXPECT_EQ(r.issues[0].pixel, 17);
}

TEST(Validate, ShortFrameListIsLengthMismatch) {
  const SegmentPlan p = plan_segments(120, 60, 30);
  const ValidationReport r = validate_bundle(toy_bundle(1, 1, 59, 4, 3), p);
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.issues[0].kind, ValidationIssue::Kind::LengthMismatch);
}

TEST(Validate, ShiftedFramesAreFrameMismatch) {
  const SegmentPlan p = plan_segments(20, 10, 5);
  const ValidationReport r = validate_bundle(toy_bundle(1, 2, 10), p);
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.issues[0].kind, ValidationIssue::Kind::FrameMismatch);
}

TEST(Validate, ShapeDescriptorAndPoseFaults) {
  const SegmentPlan p = plan_segments(20, 10, 5);
  {
    SegmentBundle b = toy_bundle(1, 1, 10);
    b.frames[2].confidence = ScalarMap(3, 3, 1.0);
    EXPECT_EQ(validate_bundle(b, p).issues.at(0).kind, ValidationIssue::Kind::ShapeMismatch);
  }
  {
    SegmentBundle b = toy_bundle(1, 1, 10);
    b.frames[5].descriptor = Eigen::VectorXd::Ones(7);
    EXPECT_EQ(validate_bundle(b, p).issues.at(0).kind, ValidationIssue::Kind::Descriptor);
  }
  {
    SegmentBundle b = toy_bundle(1, 1, 10);
    b.frames[0].pose.rotation(0, 0) = 1.5;
    EXPECT_EQ(validate_bundle(b, p).issues.at(0).kind, ValidationIssue::Kind::InvalidPose);
  }
}

TEST(Validate, LoopBundlesOnlyNeedFramesInRange) {
  const SegmentPlan p = plan_segments(20, 10, 5);
  SegmentBundle b = toy_bundle(9, 3, 4);
  b.loop_pair = std::make_pair(1, 3);
  b.frame_ids = {2, 3, 18, 19};
  EXPECT_TRUE(validate_bundle(b, p).ok());
  b.frame_ids.back() = 21;
  EXPECT_FALSE(validate_bundle(b, p).ok());
}

TEST(Bundle, SharedFramesAndLocalIndex) {
  const SegmentBundle a = toy_bundle(1, 1, 10), b = toy_bundle(2, 6, 10);
  EXPECT_EQ(shared_frames(a, b), (std::vector<int>{6, 7, 8, 9, 10}));
  EXPECT_EQ(b.local_index(6), 0);
  EXPECT_EQ(b.local_index(5), -1);
}
