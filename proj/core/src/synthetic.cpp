#include "dualstream/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "dualstream/error.hpp"
#include "dualstream/sampling.hpp"

namespace dualstream {

namespace {

using Eigen::VectorXd;

struct Directions {
  std::vector<VectorXd> rgb;
  std::vector<VectorXd> flow;
  VectorXd marker;
};

VectorXd unit_gaussian(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = normal(rng);
  return v / v.norm();
}

std::string numbered(char prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%c%03d", prefix, i);
  return buf;
}

// One labelled span of a generated video, in source-frame indices [first, last].
struct Span {
  long first = 0;
  long last = 0;
  std::size_t label = 0;
  long planted = -1;  // frame index carrying the marker, planted mode only
};

class Generator {
 public:
  explicit Generator(const SyntheticSpec& spec) : spec_(spec), rng_(spec.seed) {
    const int c = spec.n_classes;
    for (int k = 0; k < c; ++k) dirs_.rgb.push_back(unit_gaussian(spec.feature_dim, rng_));
    for (int k = 0; k < c; ++k) dirs_.flow.push_back(unit_gaussian(spec.feature_dim, rng_));
    dirs_.marker = unit_gaussian(spec.feature_dim, rng_);
  }

  int segment_length() {
    std::uniform_int_distribution<int> pick(spec_.min_segment_s, spec_.max_segment_s);
    return pick(rng_);
  }

  long planted_frame(long first, long last) {
    const double fps = spec_.source_fps;
    SamplingConfig sampling;
    sampling.sample_fps = spec_.sample_fps;
    sampling.max_frames = 1 << 20;
    const auto ts = sample_rgb_timestamps({first / fps, last / fps}, fps, sampling, 0);
    std::uniform_int_distribution<std::size_t> pick(0, ts.size() - 1);
    return std::lround(ts[pick(rng_)] * fps);
  }

  /// Fills both modality tables for a video of `n_frames` frames.
  void emit(const std::string& video_id, long n_frames, const std::vector<Span>& spans,
            FeatureStore& store) {
    const int dim = spec_.feature_dim;
    FeatureTable rgb{dim, {}, {}}, flow{dim, {}, {}};
    std::normal_distribution<double> normal(0.0, 1.0);
    std::size_t span_index = 0;
    for (long f = 0; f < n_frames; ++f) {
      while (span_index < spans.size() && spans[span_index].last < f) ++span_index;
      const Span* span =
          span_index < spans.size() && spans[span_index].first <= f ? &spans[span_index] : nullptr;
      VectorXd x_rgb = VectorXd::Zero(dim), x_flow = VectorXd::Zero(dim);
      if (span != nullptr) signal(*span, f, x_rgb, x_flow);
      for (int i = 0; i < dim; ++i) x_rgb[i] += spec_.noise * normal(rng_);
      for (int i = 0; i < dim; ++i) x_flow[i] += spec_.noise * normal(rng_);
      const double t = static_cast<double>(f) / spec_.source_fps;
      rgb.timestamps.push_back(t);
      flow.timestamps.push_back(t);
      for (int i = 0; i < dim; ++i) rgb.values.push_back(static_cast<float>(x_rgb[i]));
      for (int i = 0; i < dim; ++i) flow.values.push_back(static_cast<float>(x_flow[i]));
    }
    store.put(video_id, Modality::rgb, std::move(rgb));
    store.put(video_id, Modality::flow, std::move(flow));
  }

 private:
  void signal(const Span& span, long f, VectorXd& x_rgb, VectorXd& x_flow) const {
    const double s = spec_.signal;
    const auto c = span.label;
    switch (spec_.mode) {
      case SyntheticMode::content:
        x_rgb += s * dirs_.rgb[c];
        x_flow += s * dirs_.flow[c];
        break;
      case SyntheticMode::order: {
        // Classes 2k and 2k+1 share a direction and differ only in which half
        // of the segment carries its negation. A flow row describes the pair
        // starting at f, so its half is decided by the pair midpoint.
        const double parity = c % 2 == 0 ? 1.0 : -1.0;
        x_rgb += s * parity * half_sign(2 * f, span) * dirs_.rgb[c / 2];
        x_flow += s * parity * half_sign(2 * f + flow_span_frames_, span) * dirs_.flow[c / 2];
        break;
      }
      case SyntheticMode::dual:
        x_rgb += s * dirs_.rgb[c % 2];
        x_flow += s * dirs_.flow[c / 2];
        break;
      case SyntheticMode::planted:
        if (f == span.planted) x_rgb += s * (dirs_.marker + dirs_.rgb[c]);
        break;
    }
  }

  // -1 before the segment centre, +1 after, 0 on it; `twice_f` is in half frames.
  static double half_sign(long twice_f, const Span& span) {
    const long d = twice_f - (span.first + span.last);
    return d < 0 ? -1.0 : (d > 0 ? 1.0 : 0.0);
  }

  const SyntheticSpec& spec_;
  long flow_span_frames_ = std::lround(spec_.flow_span_s * spec_.source_fps);
  std::mt19937_64 rng_;
  Directions dirs_;
};

void validate(const SyntheticSpec& spec) {
  if (spec.n_classes < 2) throw ArgumentError("synthetic data needs at least 2 classes");
  if (spec.feature_dim < 2) throw ArgumentError("synthetic data needs feature_dim >= 2");
  if (spec.videos_per_class < 1 || spec.segments_per_video < 1) {
    throw ArgumentError("synthetic data needs videos and segments");
  }
  if (spec.min_segment_s < 1 || spec.max_segment_s < spec.min_segment_s) {
    throw ArgumentError("synthetic segment lengths need 1 <= min <= max");
  }
  if (!(spec.source_fps > 0.0) || std::abs(spec.source_fps - std::round(spec.source_fps)) > 0) {
    throw ArgumentError("synthetic source fps must be a positive integer");
  }
  if (!(spec.noise >= 0.0) || !(spec.sample_fps > 0.0) || !(spec.flow_span_s > 0.0)) {
    throw ArgumentError("synthetic noise must be >= 0, sample_fps and flow_span_s > 0");
  }
  if (spec.mode == SyntheticMode::dual && spec.n_classes != 4) {
    throw ArgumentError("dual mode encodes two binary factors and needs 4 classes");
  }
  if (spec.unlabeled_videos < 0 || (spec.unlabeled_videos > 0 && spec.unlabeled_duration_s < 1.0)) {
    throw ArgumentError("unlabeled videos need a duration of at least 1 s");
  }
}

}  // namespace

std::string_view to_string(SyntheticMode mode) {
  switch (mode) {
    case SyntheticMode::content: return "content";
    case SyntheticMode::order: return "order";
    case SyntheticMode::dual: return "dual";
    case SyntheticMode::planted: return "planted";
  }
  return "unknown";
}

SyntheticMode parse_synthetic_mode(std::string_view name) {
  for (auto m : {SyntheticMode::content, SyntheticMode::order, SyntheticMode::dual,
                 SyntheticMode::planted}) {
    if (to_string(m) == name) return m;
  }
  throw ArgumentError("unknown synthetic mode '" + std::string(name) + "'");
}

TaskKind synthetic_task_kind(int n_classes) {
  switch (n_classes) {
    case 2: return TaskKind::skill;
    case 3: return TaskKind::subphase;
    case 4: return TaskKind::suturing_gesture;
    case 6: return TaskKind::dissection_gesture;
    default:
      throw ArgumentError("synthetic class count must match a taxonomy (2, 3, 4 or 6), got " +
                          std::to_string(n_classes));
  }
}

SyntheticDataset generate_synthetic_dataset(const SyntheticSpec& spec) {
  validate(spec);
  const auto kind = synthetic_task_kind(spec.n_classes);
  const auto& categories = Taxonomy::of(kind).categories();
  const double fps = spec.source_fps;
  const long gap = std::lround(fps);

  Generator gen(spec);
  SyntheticDataset out;
  std::vector<AnnotationRecord> records;
  std::map<std::string, MediaInfo> media;

  const int n_videos = spec.n_classes * spec.videos_per_class;
  for (int v = 0; v < n_videos; ++v) {
    const auto video_id = numbered('v', v);
    std::vector<Span> spans;
    long cursor = gap;
    for (int j = 0; j < spec.segments_per_video; ++j) {
      const long length = gen.segment_length() * gap;
      Span span{cursor, cursor + length, static_cast<std::size_t>((v + j) % spec.n_classes)};
      if (spec.mode == SyntheticMode::planted) {
        span.planted = gen.planted_frame(span.first, span.last);
        out.planted.push_back({video_id, span.first / fps, span.planted / fps});
      }
      spans.push_back(span);
      records.push_back({video_id, "s" + std::to_string(v % 5), span.first / fps, span.last / fps,
                         categories[span.label], "synth", kind});
      cursor = span.last + gap;
    }
    media[video_id] = {fps, cursor / fps, "synthetic://" + video_id};
    gen.emit(video_id, cursor + 1, spans, out.features);
  }

  std::uniform_int_distribution<int> pick_label(0, spec.n_classes - 1);
  std::mt19937_64 label_rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  for (int u = 0; u < spec.unlabeled_videos; ++u) {
    const auto video_id = numbered('u', u);
    const long n_frames = std::lround(spec.unlabeled_duration_s * fps);
    std::vector<Span> spans;
    for (long cursor = 0; cursor < n_frames;) {
      const long last = std::min(cursor + gen.segment_length() * gap, n_frames);
      Span span{cursor, last, static_cast<std::size_t>(pick_label(label_rng))};
      if (spec.mode == SyntheticMode::planted && last > cursor) {
        span.planted = gen.planted_frame(span.first, span.last);
      }
      spans.push_back(span);
      cursor = last + 1;
    }
    media[video_id] = {fps, n_frames / fps, "synthetic://" + video_id};
    gen.emit(video_id, n_frames + 1, spans, out.features);
    out.unlabeled_video_ids.push_back(video_id);
  }

  out.manifest = make_manifest(std::move(records), std::move(media));
  return out;
}

}  // namespace dualstream
