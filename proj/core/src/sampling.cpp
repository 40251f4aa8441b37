#include "dualstream/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dualstream/error.hpp"

namespace dualstream {

namespace {

constexpr double kEps = 1e-9;

void check_segment(const Segment& segment, double source_fps) {
  if (!(segment.end_s > segment.start_s)) {
    throw DegenerateSegmentError("segment needs end_s > start_s");
  }
  if (!(source_fps > 0.0)) throw ArgumentError("source fps must be positive");
}

}  // namespace

void SamplingConfig::validate() const {
  if (!(sample_fps > 0.0)) throw ConfigurationError("sample_fps must be positive");
  if (!(flow_span_s > 0.0)) throw ConfigurationError("flow_span_s must be positive");
  if (max_frames < 1) throw ConfigurationError("max_frames must be at least 1");
  if (tta_offsets_frames.empty()) throw ConfigurationError("at least one TTA offset is required");
  for (std::size_t i = 0; i < tta_offsets_frames.size(); ++i) {
    if (tta_offsets_frames[i] < 0) throw ConfigurationError("TTA offsets must be non-negative");
    if (i > 0 && tta_offsets_frames[i] <= tta_offsets_frames[i - 1]) {
      throw ConfigurationError("TTA offsets must be strictly increasing");
    }
  }
}

std::vector<double> sample_rgb_timestamps(const Segment& segment, double source_fps,
                                          const SamplingConfig& config, int offset_frames) {
  check_segment(segment, source_fps);
  config.validate();
  if (offset_frames < 0) throw ArgumentError("offset_frames must be non-negative");
  if (offset_frames / source_fps >= segment.duration()) {
    throw DegenerateSegmentError("offset of " + std::to_string(offset_frames) +
                                 " frames does not fit in the segment");
  }

  // Work in source-frame units so the grid matches stored frame timestamps.
  const double first = segment.start_s * source_fps + offset_frames;
  const double step = source_fps / config.sample_fps;
  const double last_frame = segment.end_s * source_fps;
  const double first_frame = segment.start_s * source_fps;

  std::vector<double> out;
  long previous = -1;
  for (long k = 0; static_cast<int>(out.size()) < config.max_frames; ++k) {
    const double position = first + static_cast<double>(k) * step;
    if (position > last_frame + kEps) break;
    auto index = static_cast<long>(std::ceil(position - 0.5 - kEps));
    if (static_cast<double>(index) > last_frame + kEps) --index;
    if (static_cast<double>(index) < first_frame - kEps) ++index;
    if (index <= previous) continue;
    previous = index;
    out.push_back(static_cast<double>(index) / source_fps);
  }
  if (out.empty()) throw DegenerateSegmentError("segment yields no samples");
  return out;
}

std::vector<FlowPair> pair_flow_timestamps(std::span<const double> rgb_timestamps,
                                           const SamplingConfig& config, const Segment& segment) {
  if (rgb_timestamps.empty()) throw ArgumentError("no RGB timestamps to pair");
  std::vector<FlowPair> pairs;
  pairs.reserve(rgb_timestamps.size());
  for (double t : rgb_timestamps) {
    const double second = std::min(t + config.flow_span_s, segment.end_s);
    if (second - t > kEps) pairs.push_back({t, second});
  }
  if (pairs.empty()) throw DegenerateSegmentError("every flow pair has zero span");
  return pairs;
}

std::vector<double> flow_starts(std::span<const FlowPair> pairs) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.first_s);
  return out;
}

SampledInput sample_input(const Segment& segment, double source_fps, const SamplingConfig& config,
                          int offset_frames) {
  SampledInput input;
  input.offset_frames = offset_frames;
  input.rgb = sample_rgb_timestamps(segment, source_fps, config, offset_frames);
  input.flow = pair_flow_timestamps(input.rgb, config, segment);
  return input;
}

std::vector<SampledInput> tta_variants(const Segment& segment, double source_fps,
                                       const SamplingConfig& config) {
  check_segment(segment, source_fps);
  config.validate();
  std::vector<int> offsets;
  for (int offset : config.tta_offsets_frames) {
    const bool usable = 2.0 * offset / source_fps < segment.duration();
    const int chosen = usable ? offset : 0;
    if (std::find(offsets.begin(), offsets.end(), chosen) == offsets.end()) {
      offsets.push_back(chosen);
    }
  }
  std::vector<SampledInput> variants;
  variants.reserve(offsets.size());
  for (int offset : offsets) variants.push_back(sample_input(segment, source_fps, config, offset));
  return variants;
}

}  // namespace dualstream
