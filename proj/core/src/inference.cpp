#include "dualstream/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <nlohmann/json.hpp>

#include "dualstream/error.hpp"
#include "dualstream/image.hpp"
#include "dualstream/prototypes.hpp"

namespace dualstream {

namespace {

constexpr double kTimeEps = 1e-9;

nlohmann::json vector_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace

ModelInput gather_input(const FeatureProvider& provider, const std::string& video_id,
                        const SampledInput& sample) {
  const auto starts = flow_starts(sample.flow);
  return {provider.features(video_id, Modality::rgb, sample.rgb),
          provider.features(video_id, Modality::flow, starts)};
}

std::vector<MissingFeature> missing_features(const FeatureProvider& provider,
                                             const std::string& video_id,
                                             const SampledInput& sample) {
  auto out = provider.missing(video_id, Modality::rgb, sample.rgb);
  const auto starts = flow_starts(sample.flow);
  for (auto& m : provider.missing(video_id, Modality::flow, starts)) out.push_back(std::move(m));
  return out;
}

Eigen::VectorXd predict_input(const TemporalModel& model, const ModelOptions& options,
                              const ModelInput& input) {
  const auto h = forward(model, input, options);
  return classify(h, model.bank, model.config.temperature).probabilities;
}

Eigen::VectorXd predict_segment(const ModelCheckpoint& model, const FeatureProvider& provider,
                                const std::string& video_id, const Segment& segment,
                                double source_fps, bool use_tta) {
  const auto& sampling = model.config.sampling;
  const auto options = model.options();
  if (!use_tta) {
    const auto sample = sample_input(segment, source_fps, sampling, 0);
    return predict_input(model.model, options, gather_input(provider, video_id, sample));
  }
  const auto variants = tta_variants(segment, source_fps, sampling);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.model.bank.size()));
  for (const auto& v : variants) {
    sum += predict_input(model.model, options, gather_input(provider, video_id, v));
  }
  return sum / static_cast<double>(variants.size());
}

double entropy(const Eigen::VectorXd& distribution) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < distribution.size(); ++i) {
    const double p = distribution[i];
    if (p > 0.0) s -= p * std::log(p);
  }
  return std::max(0.0, s);
}

EnsemblePrediction ensemble_from_distributions(const Eigen::MatrixXd& per_model,
                                               double threshold) {
  if (per_model.rows() < 1 || per_model.cols() < 1) {
    throw ArgumentError("ensemble needs at least one model and one category");
  }
  EnsemblePrediction out;
  out.per_model = per_model;
  out.mean = per_model.colwise().sum().transpose() / static_cast<double>(per_model.rows());
  out.entropy = entropy(out.mean);
  out.gated = out.entropy <= threshold;
  if (out.gated) out.predicted = argmax(out.mean);
  return out;
}

void check_ensemble(std::span<const ModelCheckpoint> models) {
  if (models.empty()) throw ArgumentError("ensemble needs at least one model");
  for (const auto& m : models) {
    if (m.task_kind != models.front().task_kind ||
        m.model.bank.categories != models.front().model.bank.categories) {
      throw TaxonomyMismatchError("ensemble members disagree on the category set");
    }
  }
}

EnsemblePrediction ensemble_predict(std::span<const ModelCheckpoint> models,
                                    const FeatureProvider& provider, const std::string& video_id,
                                    const Segment& segment, double source_fps, double threshold,
                                    bool use_tta) {
  check_ensemble(models);
  const auto n_classes = static_cast<Eigen::Index>(models.front().model.bank.size());
  Eigen::MatrixXd per_model(static_cast<Eigen::Index>(models.size()), n_classes);
  for (std::size_t i = 0; i < models.size(); ++i) {
    per_model.row(static_cast<Eigen::Index>(i)) =
        predict_segment(models[i], provider, video_id, segment, source_fps, use_tta).transpose();
  }
  return ensemble_from_distributions(per_model, threshold);
}

std::vector<TimelineEvent> merge_events(std::span<const TimelineEvent> events, double max_gap_s) {
  std::vector<TimelineEvent> out;
  double previous_end = -std::numeric_limits<double>::infinity();
  for (const auto& e : events) {
    if (!(e.end_s > e.start_s)) throw ArgumentError("event needs end_s > start_s");
    if (e.start_s < previous_end - kTimeEps) {
      throw ArgumentError("events must be sorted by start time and non-overlapping");
    }
    previous_end = e.end_s;
    if (!out.empty() && out.back().category == e.category &&
        e.start_s - out.back().end_s < max_gap_s) {
      out.back().end_s = std::max(out.back().end_s, e.end_s);
    } else {
      out.push_back(e);
    }
  }
  return out;
}

std::vector<TimelineEvent> merge_predictions(std::span<const IntervalPrediction> intervals,
                                             double max_gap_s) {
  std::vector<TimelineEvent> predicted;
  double previous_end = -std::numeric_limits<double>::infinity();
  for (const auto& interval : intervals) {
    if (interval.start_s < previous_end - kTimeEps) {
      throw ArgumentError("intervals must be sorted by start time and non-overlapping");
    }
    previous_end = interval.end_s;
    if (interval.prediction.predicted) {
      predicted.push_back({*interval.prediction.predicted, interval.start_s, interval.end_s});
    }
  }
  return merge_events(predicted, max_gap_s);
}

TimelinePrediction segment_timeline(std::span<const ModelCheckpoint> models,
                                    const FeatureProvider& provider, const std::string& video_id,
                                    const MediaInfo& media, double threshold, bool use_tta) {
  check_ensemble(models);
  if (media.duration_s < 1.0) throw ArgumentError("timeline needs a video of at least 1 s");
  TimelinePrediction out;
  out.video_id = video_id;
  out.categories = models.front().model.bank.categories;
  out.threshold = threshold;
  const auto n = static_cast<long>(std::floor(media.duration_s));
  for (long k = 0; k < n; ++k) {
    const Segment interval{static_cast<double>(k), static_cast<double>(k + 1)};
    out.intervals.push_back({interval.start_s, interval.end_s,
                             ensemble_predict(models, provider, video_id, interval, media.fps,
                                              threshold, use_tta)});
  }
  out.events = merge_predictions(out.intervals);
  return out;
}

std::string timeline_to_json(const TimelinePrediction& timeline) {
  nlohmann::json intervals = nlohmann::json::array();
  for (const auto& i : timeline.intervals) {
    const auto& p = i.prediction;
    intervals.push_back({{"start_s", i.start_s},
                         {"end_s", i.end_s},
                         {"probs", vector_json(p.mean)},
                         {"entropy", p.entropy},
                         {"predicted", p.predicted ? nlohmann::json(timeline.categories[*p.predicted])
                                                   : nlohmann::json()}});
  }
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : timeline.events) {
    events.push_back(
        {{"label", timeline.categories[e.category]}, {"start_s", e.start_s}, {"end_s", e.end_s}});
  }
  const nlohmann::json doc = {{"video_id", timeline.video_id},
                              {"categories", timeline.categories},
                              {"threshold", timeline.threshold},
                              {"intervals", intervals},
                              {"events", events}};
  return doc.dump(2) + "\n";
}

Explanation explain(const ModelCheckpoint& model, const FeatureProvider& provider,
                    const std::string& video_id, const Segment& segment, double source_fps,
                    AttentionSource source) {
  const auto options = model.options();
  if (options.encoding != EncodingMode::self_attention) {
    throw UnsupportedModeError("explanations need a self-attention checkpoint, got " +
                               std::string(to_string(model.config.ablation)));
  }
  const auto sample = sample_input(segment, source_fps, model.config.sampling, 0);
  const auto input = gather_input(provider, video_id, sample);

  Explanation out;
  out.video_id = video_id;
  out.source = source;
  out.timestamps = sample.rgb;
  out.weights = extract_temporal_attention(input.rgb, model.model.encoder, options.encoding, source);
  out.probabilities =
      predict_segment(model, provider, video_id, segment, source_fps, model.uses_tta());
  out.predicted = argmax(out.probabilities);
  out.predicted_label = model.model.bank.categories[out.predicted];
  return out;
}

std::string explanation_to_json(const Explanation& explanation) {
  const nlohmann::json doc = {{"video_id", explanation.video_id},
                              {"attention", std::string(to_string(explanation.source))},
                              {"timestamps", explanation.timestamps},
                              {"weights", vector_json(explanation.weights)},
                              {"probs", vector_json(explanation.probabilities)},
                              {"predicted", explanation.predicted_label}};
  return doc.dump(2) + "\n";
}

void write_attention_strip(const Explanation& explanation, const std::filesystem::path& path,
                           int cell_width, int height) {
  const auto n = static_cast<int>(explanation.weights.size());
  if (n == 0 || cell_width < 1 || height < 1) throw ArgumentError("nothing to draw");
  const double peak = explanation.weights.maxCoeff();
  Image strip(n * cell_width, height, 1);
  for (int f = 0; f < n; ++f) {
    const auto v = static_cast<float>(peak > 0.0 ? explanation.weights[f] / peak : 0.0);
    for (int y = 0; y < height; ++y) {
      for (int x = f * cell_width; x < (f + 1) * cell_width; ++x) strip.at(x, y) = v;
    }
  }
  write_pnm(strip, path);
}

SegmentScores score_segments(const ModelCheckpoint& model, const FeatureProvider& provider,
                             const DatasetManifest& manifest,
                             const std::vector<std::string>& video_ids, TaskKind kind,
                             bool use_tta) {
  const std::set<std::string> wanted(video_ids.begin(), video_ids.end());
  std::vector<LabeledSegment> segments;
  for (auto& s : labeled_segments(manifest, kind)) {
    if (wanted.count(s.video_id) != 0) segments.push_back(std::move(s));
  }
  SegmentScores out;
  out.scores.resize(static_cast<Eigen::Index>(segments.size()),
                    static_cast<Eigen::Index>(model.model.bank.size()));
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    out.scores.row(static_cast<Eigen::Index>(i)) =
        predict_segment(model, provider, s.video_id, {s.start_s, s.end_s},
                        manifest.media(s.video_id).fps, use_tta)
            .transpose();
    out.labels.push_back(s.label);
  }
  return out;
}

}  // namespace dualstream
