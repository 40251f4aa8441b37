#pragma once

#include <span>
#include <vector>

namespace dualstream {

struct SamplingConfig {
  double sample_fps = 2.0;
  double flow_span_s = 0.5;
  /// Test-time offsets counted in source-video frames.
  std::vector<int> tta_offsets_frames{0, 3, 6};
  int max_frames = 64;

  void validate() const;
};

struct Segment {
  double start_s = 0.0;
  double end_s = 0.0;

  double duration() const { return end_s - start_s; }
};

struct FlowPair {
  double first_s = 0.0;
  double second_s = 0.0;
};

/// Start-aligned samples at `sample_fps`, shifted by `offset_frames` source
/// frames and snapped to the nearest source frame (ties go to the earlier
/// frame). Keeps at most `max_frames` of the earliest samples.
std::vector<double> sample_rgb_timestamps(const Segment& segment, double source_fps,
                                          const SamplingConfig& config, int offset_frames);

/// One pair per RGB sample, the second frame clipped to the segment end.
/// Zero-span pairs are dropped; throws DegenerateSegmentError if none remain.
std::vector<FlowPair> pair_flow_timestamps(std::span<const double> rgb_timestamps,
                                           const SamplingConfig& config, const Segment& segment);

std::vector<double> flow_starts(std::span<const FlowPair> pairs);

struct SampledInput {
  int offset_frames = 0;
  std::vector<double> rgb;
  std::vector<FlowPair> flow;
};

SampledInput sample_input(const Segment& segment, double source_fps, const SamplingConfig& config,
                          int offset_frames);

/// The test-time variants in offset order. A non-zero offset is usable only
/// while the skipped lead-in is shorter than what remains of the segment
/// (2 * offset < duration); unusable offsets collapse onto offset 0 and are
/// deduplicated.
std::vector<SampledInput> tta_variants(const Segment& segment, double source_fps,
                                       const SamplingConfig& config);

}  // namespace dualstream
