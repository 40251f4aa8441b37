#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dualstream/error.hpp"
#include "dualstream/flow.hpp"
#include "dualstream/image.hpp"

namespace dualstream {

enum class Modality { rgb, flow };

std::string_view to_string(Modality modality);
Modality parse_modality(std::string_view name);

enum class ExtractorBackend { precomputed, mock, external };

struct FeatureExtractorConfig {
  int input_size = 224;
  int patch_size = 16;
  int feature_dim = 384;
  ExtractorBackend backend = ExtractorBackend::precomputed;

  void validate() const;
};

/// Frames of one modality. `frames` may be empty when the sequence only
/// references stored features by (video_id, timestamps).
struct FrameSequence {
  Modality modality = Modality::rgb;
  std::string video_id;
  std::vector<double> timestamps;
  std::vector<Image> frames;
};

/// T x D frame features, one row per timestamp.
struct EmbeddingSequence {
  Modality modality = Modality::rgb;
  std::vector<double> timestamps;
  Eigen::MatrixXd vectors;
};

/// Anything that can hand the model frame features for sampled timestamps.
/// Flow features are keyed by the first timestamp of their frame pair.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  /// Throws MissingFeatureError listing every absent timestamp.
  virtual Eigen::MatrixXd features(const std::string& video_id, Modality modality,
                                   std::span<const double> timestamps) const = 0;
  virtual std::vector<MissingFeature> missing(const std::string& video_id, Modality modality,
                                              std::span<const double> timestamps) const = 0;
};

struct FeatureTable {
  int dim = 0;
  std::vector<double> timestamps;  // strictly increasing
  std::vector<float> values;       // row-major, timestamps.size() x dim

  std::size_t rows() const { return timestamps.size(); }
  /// Row whose timestamp is within 1e-6 s of `t`, if any.
  std::optional<std::size_t> find_row(double t) const;
};

/// In-memory view of the on-disk feature store: one `<video>.<modality>.rffs`
/// binary (magic "RFFS", version, T, D, then T*D little-endian float32) plus a
/// `<video>.<modality>.json` sidecar mapping timestamps to rows.
class FeatureStore final : public FeatureProvider {
 public:
  static constexpr std::uint32_t kVersion = 1;

  void put(const std::string& video_id, Modality modality, FeatureTable table);
  const FeatureTable* find(const std::string& video_id, Modality modality) const;
  std::size_t size() const { return tables_.size(); }

  Eigen::MatrixXd features(const std::string& video_id, Modality modality,
                           std::span<const double> timestamps) const override;
  std::vector<MissingFeature> missing(const std::string& video_id, Modality modality,
                                      std::span<const double> timestamps) const override;

  void save(const std::filesystem::path& dir) const;
  static FeatureStore load(const std::filesystem::path& dir);

  static void write_table(const FeatureTable& table, const std::filesystem::path& binary_path,
                          const std::filesystem::path& index_path);
  static FeatureTable read_table(const std::filesystem::path& binary_path,
                                 const std::filesystem::path& index_path);

 private:
  std::map<std::pair<std::string, Modality>, FeatureTable> tables_;
};

/// Frozen per-frame feature extractor. Identical input gives identical output.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual EmbeddingSequence extract(const FrameSequence& frames) const = 0;
  virtual int dim() const = 0;
};

class PrecomputedExtractor final : public FeatureExtractor {
 public:
  explicit PrecomputedExtractor(const FeatureProvider& provider, int dim)
      : provider_(provider), dim_(dim) {}
  EmbeddingSequence extract(const FrameSequence& frames) const override;
  int dim() const override { return dim_; }

 private:
  const FeatureProvider& provider_;
  int dim_;
};

/// Seeded random linear projection of patch-averaged luma. Linear in the
/// pixel values, so it stands in for a frozen backbone in tests.
class MockExtractor final : public FeatureExtractor {
 public:
  MockExtractor(FeatureExtractorConfig config, std::uint64_t seed);
  EmbeddingSequence extract(const FrameSequence& frames) const override;
  int dim() const override { return config_.feature_dim; }

  Eigen::VectorXd extract_frame(const Image& frame) const;

 private:
  FeatureExtractorConfig config_;
  Eigen::MatrixXd projection_;  // D x (grid * grid)
};

/// Wraps a caller-supplied backbone. An empty function means the backend is
/// not available and every call throws BackendError.
class ExternalExtractor final : public FeatureExtractor {
 public:
  using Backbone = std::function<Eigen::VectorXd(const Image&)>;

  ExternalExtractor(int dim, Backbone backbone) : dim_(dim), backbone_(std::move(backbone)) {}
  EmbeddingSequence extract(const FrameSequence& frames) const override;
  int dim() const override { return dim_; }

 private:
  int dim_;
  Backbone backbone_;
};

std::unique_ptr<FeatureExtractor> make_extractor(const FeatureExtractorConfig& config,
                                                 const FeatureProvider* store,
                                                 std::uint64_t seed = 0,
                                                 ExternalExtractor::Backbone backbone = {});

EmbeddingSequence extract_features(const FrameSequence& frames, const FeatureExtractor& extractor);

/// Source of decoded frames; video decoding itself lives outside the library.
class FrameReader {
 public:
  virtual ~FrameReader() = default;
  virtual Image read(const std::string& video_id, double timestamp) const = 0;
  virtual double duration(const std::string& video_id) const = 0;
};

class InMemoryFrameReader final : public FrameReader {
 public:
  void add_video(const std::string& video_id, double fps, std::vector<Image> frames);
  Image read(const std::string& video_id, double timestamp) const override;
  double duration(const std::string& video_id) const override;

 private:
  struct Video {
    double fps = 0.0;
    std::vector<Image> frames;
  };
  std::map<std::string, Video> videos_;
};

/// Computes features on demand from decoded frames. Flow features come from
/// rendering the estimated flow between t and t + flow_span_s (clipped to the
/// video) and passing the rendering through the same extractor.
class ExtractingFeatureProvider final : public FeatureProvider {
 public:
  ExtractingFeatureProvider(const FrameReader& reader, const FeatureExtractor& extractor,
                            const FlowEstimator& flow, double flow_span_s)
      : reader_(reader), extractor_(extractor), flow_(flow), flow_span_s_(flow_span_s) {}

  Eigen::MatrixXd features(const std::string& video_id, Modality modality,
                           std::span<const double> timestamps) const override;
  std::vector<MissingFeature> missing(const std::string&, Modality,
                                      std::span<const double>) const override {
    return {};
  }

 private:
  const FrameReader& reader_;
  const FeatureExtractor& extractor_;
  const FlowEstimator& flow_;
  double flow_span_s_;
};

}  // namespace dualstream
