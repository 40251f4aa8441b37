#include <algorithm>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "dualstream/error.hpp"
#include "dualstream/sampling.hpp"

namespace dualstream {
namespace {

void expect_times(const std::vector<double>& got, const std::vector<double>& want) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12) << i;
}

TEST(SampleRgb, ThreeSecondSegmentAtOffsetZero) {
  const auto ts = sample_rgb_timestamps({0.0, 3.0}, 30.0, {}, 0);
  expect_times(ts, {0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0});
}

TEST(SampleRgb, OffsetThreeFramesIsDisjoint) {
  const auto base = sample_rgb_timestamps({0.0, 3.0}, 30.0, {}, 0);
  const auto shifted = sample_rgb_timestamps({0.0, 3.0}, 30.0, {}, 3);
  expect_times(shifted, {0.1, 0.6, 1.1, 1.6, 2.1, 2.6});
  for (double t : shifted) {
    for (double b : base) EXPECT_GT(std::abs(t - b), 1e-9);
  }
}

TEST(SampleRgb, ShortSegmentKeepsFirstSample) {
  expect_times(sample_rgb_timestamps({0.0, 0.2}, 30.0, {}, 0), {0.0});
}

TEST(SampleRgb, SnapsToNearestFrameWithTiesEarlier) {
  // 10 fps source sampled at 4 fps: every other grid point falls halfway
  // between two source frames.
  SamplingConfig c;
  c.sample_fps = 4.0;
  expect_times(sample_rgb_timestamps({0.0, 1.0}, 10.0, c, 0), {0.0, 0.2, 0.5, 0.7, 1.0});
  // A start between frames snaps inside the segment.
  EXPECT_NEAR(sample_rgb_timestamps({0.35, 2.0}, 10.0, c, 0).front(), 0.4, 1e-12);
}

TEST(SampleRgb, TruncatesToMaxFramesKeepingEarliest) {
  SamplingConfig c;
  c.max_frames = 4;
  expect_times(sample_rgb_timestamps({0.0, 10.0}, 30.0, c, 0), {0.0, 0.5, 1.0, 1.5});
}

TEST(SampleRgb, Errors) {
  EXPECT_THROW(sample_rgb_timestamps({1.0, 1.0}, 30.0, {}, 0), DegenerateSegmentError);
  EXPECT_THROW(sample_rgb_timestamps({0.0, 0.05}, 30.0, {}, 3), DegenerateSegmentError);
  SamplingConfig bad;
  bad.tta_offsets_frames = {0, 6, 3};
  EXPECT_THROW(bad.validate(), ConfigurationError);
  bad = {};
  bad.sample_fps = 0.0;
  EXPECT_THROW(bad.validate(), ConfigurationError);
}

TEST(PairFlow, OnePairPerSample) {
  const std::vector<double> rgb{0.0, 0.5, 1.0};
  const auto pairs = pair_flow_timestamps(rgb, {}, {0.0, 1.5});
  ASSERT_EQ(pairs.size(), 3u);
  EXPECT_DOUBLE_EQ(pairs[2].first_s, 1.0);
  EXPECT_DOUBLE_EQ(pairs[2].second_s, 1.5);
  EXPECT_EQ(flow_starts(pairs), rgb);
}

TEST(PairFlow, ClipsToSegmentEnd) {
  const std::vector<double> rgb{1.4};
  const auto pairs = pair_flow_timestamps(rgb, {}, {0.0, 1.5});
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_NEAR(pairs[0].second_s - pairs[0].first_s, 0.1, 1e-12);
}

TEST(PairFlow, ZeroSpanIsDegenerate) {
  const std::vector<double> rgb{1.5};
  EXPECT_THROW(pair_flow_timestamps(rgb, {}, {0.0, 1.5}), DegenerateSegmentError);
  const std::vector<double> two{1.0, 1.5};
  EXPECT_EQ(pair_flow_timestamps(two, {}, {0.0, 1.5}).size(), 1u);
}

TEST(Tta, ThreeDistinctVariants) {
  const auto v = tta_variants({0.0, 3.0}, 30.0, {});
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[0].offset_frames, 0);
  EXPECT_NEAR(v[1].rgb.front(), 0.1, 1e-12);
  EXPECT_NEAR(v[2].rgb.front(), 0.2, 1e-12);
  // No timestamp is shared between the offset-0 variant and the others.
  for (std::size_t k = 1; k < 3; ++k) {
    for (double t : v[k].rgb) {
      for (double b : v[0].rgb) EXPECT_GT(std::abs(t - b), 1e-9);
    }
  }
}

TEST(Tta, ShortSegmentCollapsesToOneVariant) {
  const auto v = tta_variants({0.0, 0.15}, 30.0, {});
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].offset_frames, 0);
}

TEST(Tta, Deterministic) {
  const auto a = tta_variants({1.0, 4.3}, 25.0, {});
  const auto b = tta_variants({1.0, 4.3}, 25.0, {});
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].rgb, b[i].rgb);
    EXPECT_EQ(flow_starts(a[i].flow), flow_starts(b[i].flow));
  }
}

TEST(SamplingProperty, InBoundsAndIncreasing) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> start(0.0, 100.0), len(0.05, 20.0), sfps(0.5, 8.0);
  std::uniform_int_distribution<int> src(10, 60), maxf(1, 80), off(0, 9);
  for (int trial = 0; trial < 2000; ++trial) {
    SamplingConfig c;
    c.sample_fps = sfps(rng);
    c.max_frames = maxf(rng);
    const double fps = src(rng);
    // Segment bounds on the source-frame grid, as annotation tools emit them.
    const double s = std::round(start(rng) * fps) / fps;
    const Segment seg{s, s + std::max(1.0, std::round(len(rng) * fps)) / fps};
    const int offset = off(rng);
    if (2.0 * offset / fps >= seg.duration()) continue;
    const auto ts = sample_rgb_timestamps(seg, fps, c, offset);
    ASSERT_FALSE(ts.empty());
    ASSERT_LE(static_cast<int>(ts.size()), c.max_frames);
    for (std::size_t i = 0; i < ts.size(); ++i) {
      EXPECT_GE(ts[i], seg.start_s - 1e-9);
      EXPECT_LE(ts[i], seg.end_s + 1e-9);
      EXPECT_NEAR(ts[i] * fps, std::round(ts[i] * fps), 1e-6);
      if (i > 0) EXPECT_GT(ts[i], ts[i - 1]);
    }
  }
}

}  // namespace
}  // namespace dualstream
