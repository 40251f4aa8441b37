#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dualstream/datamodel.hpp"
#include "dualstream/features.hpp"

namespace dualstream {

/// How class identity is written into the synthetic frame features.
enum class SyntheticMode {
  content,  // each class shifts the frame-feature mean, independently per modality
  order,    // the two halves of a segment carry opposite signs; classes differ in which half is negative
  dual,     // rgb carries c mod 2, flow carries c / 2; each modality alone is ambiguous
  planted,  // one sampled rgb frame per segment carries a marker plus the class; all else is noise
};

std::string_view to_string(SyntheticMode mode);
SyntheticMode parse_synthetic_mode(std::string_view name);

struct SyntheticSpec {
  /// Must match a taxonomy size: 2 skill, 3 subphase, 4 suturing, 6 dissection.
  int n_classes = 2;
  int videos_per_class = 10;
  int segments_per_video = 4;
  /// Segment lengths are whole seconds drawn uniformly from this range.
  int min_segment_s = 2;
  int max_segment_s = 4;
  int feature_dim = 32;
  SyntheticMode mode = SyntheticMode::content;
  double source_fps = 30.0;
  double noise = 1.0;
  double signal = 3.0;
  /// Extra videos in the media index with features but no annotations.
  int unlabeled_videos = 0;
  double unlabeled_duration_s = 120.0;
  std::uint64_t seed = 0;
  /// Sampling settings the data is built for; match the training config.
  double sample_fps = 2.0;
  double flow_span_s = 0.5;
};

struct PlantedFrame {
  std::string video_id;
  double segment_start_s = 0.0;
  double timestamp = 0.0;
};

struct SyntheticDataset {
  DatasetManifest manifest;
  FeatureStore features;
  std::vector<std::string> unlabeled_video_ids;
  std::vector<PlantedFrame> planted;  // labelled segments only, planted mode only
};

TaskKind synthetic_task_kind(int n_classes);

/// Segment j of video v is labelled (v + j) mod C, separated by 1 s of noise.
/// Features exist for every source frame of both modalities.
SyntheticDataset generate_synthetic_dataset(const SyntheticSpec& spec);

}  // namespace dualstream
