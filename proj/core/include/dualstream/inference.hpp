#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dualstream/checkpoint.hpp"
#include "dualstream/features.hpp"
#include "dualstream/metrics.hpp"
#include "dualstream/sampling.hpp"

namespace dualstream {

/// Looks up the rgb rows and the flow rows (keyed by pair start) of one sample.
ModelInput gather_input(const FeatureProvider& provider, const std::string& video_id,
                        const SampledInput& sample);

/// Every feature lookup `sample` would make that the provider cannot serve.
std::vector<MissingFeature> missing_features(const FeatureProvider& provider,
                                             const std::string& video_id,
                                             const SampledInput& sample);

/// Softmax over prototype similarities for one gathered input.
Eigen::VectorXd predict_input(const TemporalModel& model, const ModelOptions& options,
                              const ModelInput& input);

/// Mean of the per-variant distributions when `use_tta`, else the offset-0
/// distribution alone.
Eigen::VectorXd predict_segment(const ModelCheckpoint& model, const FeatureProvider& provider,
                                const std::string& video_id, const Segment& segment,
                                double source_fps, bool use_tta);

/// Shannon entropy in nats, with 0 ln 0 = 0.
double entropy(const Eigen::VectorXd& distribution);

inline double default_entropy_threshold(std::size_t n_classes) {
  return 0.5 * std::log(static_cast<double>(n_classes));
}

struct EnsemblePrediction {
  Eigen::MatrixXd per_model;  // M x C
  Eigen::VectorXd mean;
  double entropy = 0.0;
  bool gated = false;  // true when entropy <= threshold
  std::optional<std::size_t> predicted;
};

/// Averages the M rows and applies the entropy gate.
EnsemblePrediction ensemble_from_distributions(const Eigen::MatrixXd& per_model,
                                               double threshold);

/// Throws TaxonomyMismatchError unless every model has the same categories.
void check_ensemble(std::span<const ModelCheckpoint> models);

EnsemblePrediction ensemble_predict(std::span<const ModelCheckpoint> models,
                                    const FeatureProvider& provider, const std::string& video_id,
                                    const Segment& segment, double source_fps, double threshold,
                                    bool use_tta = true);

struct IntervalPrediction {
  double start_s = 0.0;
  double end_s = 0.0;
  EnsemblePrediction prediction;
};

struct TimelineEvent {
  std::size_t category = 0;
  double start_s = 0.0;
  double end_s = 0.0;

  bool operator==(const TimelineEvent&) const = default;
};

inline constexpr double kMergeGapS = 2.0;

/// Folds predicted intervals into events. An interval joins the previous
/// event when it has the same category and starts less than `max_gap_s`
/// after that event ends. Abstained intervals are skipped; a prediction of
/// another category closes the running event. Throws ArgumentError when the
/// intervals are not sorted and non-overlapping.
std::vector<TimelineEvent> merge_predictions(std::span<const IntervalPrediction> intervals,
                                             double max_gap_s = kMergeGapS);
/// The same rule applied to events; merging merged events changes nothing.
std::vector<TimelineEvent> merge_events(std::span<const TimelineEvent> events,
                                        double max_gap_s = kMergeGapS);

struct TimelinePrediction {
  std::string video_id;
  std::vector<std::string> categories;
  double threshold = 0.0;
  std::vector<IntervalPrediction> intervals;
  std::vector<TimelineEvent> events;
};

/// Tiles [0, duration) with floor(duration) one-second intervals and
/// ensemble-predicts each.
TimelinePrediction segment_timeline(std::span<const ModelCheckpoint> models,
                                    const FeatureProvider& provider, const std::string& video_id,
                                    const MediaInfo& media, double threshold, bool use_tta = true);

std::string timeline_to_json(const TimelinePrediction& timeline);

struct Explanation {
  std::string video_id;
  AttentionSource source = AttentionSource::rollout;
  std::vector<double> timestamps;
  Eigen::VectorXd weights;
  Eigen::VectorXd probabilities;
  std::size_t predicted = 0;
  std::string predicted_label;
};

/// CLS attention over the offset-0 rgb frames. Throws UnsupportedModeError
/// for checkpoints trained without self-attention.
Explanation explain(const ModelCheckpoint& model, const FeatureProvider& provider,
                    const std::string& video_id, const Segment& segment, double source_fps,
                    AttentionSource source = AttentionSource::rollout);

std::string explanation_to_json(const Explanation& explanation);

/// Grayscale strip, one column block per frame, brightness proportional to weight.
void write_attention_strip(const Explanation& explanation, const std::filesystem::path& path,
                           int cell_width = 24, int height = 32);

struct SegmentScores {
  Eigen::MatrixXd scores;  // N x C probabilities
  std::vector<std::size_t> labels;
};

/// Scores every labelled segment of `kind` in `video_ids`.
SegmentScores score_segments(const ModelCheckpoint& model, const FeatureProvider& provider,
                             const DatasetManifest& manifest,
                             const std::vector<std::string>& video_ids, TaskKind kind,
                             bool use_tta);

}  // namespace dualstream
