#include "dualstream/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

namespace dualstream {

namespace {

constexpr double kTimestampTolerance = 1e-6;
constexpr char kMagic[4] = {'R', 'F', 'F', 'S'};

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(sizeof(T) == 4);
  std::uint32_t bits;
  std::memcpy(&bits, &value, 4);
  unsigned char bytes[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                            static_cast<unsigned char>(bits >> 16),
                            static_cast<unsigned char>(bits >> 24)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

template <typename T>
T read_le(std::istream& in, const std::filesystem::path& path) {
  static_assert(sizeof(T) == 4);
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) {
    throw ParseError(path.string(), 0, "truncated feature file");
  }
  const std::uint32_t bits = std::uint32_t{bytes[0]} | (std::uint32_t{bytes[1]} << 8) |
                             (std::uint32_t{bytes[2]} << 16) | (std::uint32_t{bytes[3]} << 24);
  T value;
  std::memcpy(&value, &bits, 4);
  return value;
}

std::string table_stem(const std::string& video_id, Modality modality) {
  return video_id + "." + std::string(to_string(modality));
}

}  // namespace

std::string_view to_string(Modality modality) {
  return modality == Modality::rgb ? "rgb" : "flow";
}

Modality parse_modality(std::string_view name) {
  if (name == "rgb") return Modality::rgb;
  if (name == "flow") return Modality::flow;
  throw ArgumentError("unknown modality '" + std::string(name) + "'");
}

void FeatureExtractorConfig::validate() const {
  if (patch_size < 1 || input_size < patch_size || input_size % patch_size != 0) {
    throw ConfigurationError("input_size must be a positive multiple of patch_size");
  }
  if (feature_dim < 1) throw ConfigurationError("feature_dim must be at least 1");
}

std::optional<std::size_t> FeatureTable::find_row(double t) const {
  auto it = std::lower_bound(timestamps.begin(), timestamps.end(), t - kTimestampTolerance);
  if (it == timestamps.end() || std::abs(*it - t) > kTimestampTolerance) return std::nullopt;
  return static_cast<std::size_t>(it - timestamps.begin());
}

void FeatureStore::put(const std::string& video_id, Modality modality, FeatureTable table) {
  if (table.dim < 1) throw ArgumentError("feature table needs dim >= 1");
  if (table.values.size() != table.rows() * static_cast<std::size_t>(table.dim)) {
    throw ArgumentError("feature table values do not match rows x dim");
  }
  if (!std::is_sorted(table.timestamps.begin(), table.timestamps.end()) ||
      std::adjacent_find(table.timestamps.begin(), table.timestamps.end()) !=
          table.timestamps.end()) {
    throw ArgumentError("feature timestamps must be strictly increasing");
  }
  if (!std::all_of(table.values.begin(), table.values.end(),
                   [](float v) { return std::isfinite(v); })) {
    throw ArgumentError("feature values must be finite");
  }
  tables_[{video_id, modality}] = std::move(table);
}

const FeatureTable* FeatureStore::find(const std::string& video_id, Modality modality) const {
  const auto it = tables_.find({video_id, modality});
  return it == tables_.end() ? nullptr : &it->second;
}

std::vector<MissingFeature> FeatureStore::missing(const std::string& video_id, Modality modality,
                                                  std::span<const double> timestamps) const {
  std::vector<MissingFeature> out;
  const auto* table = find(video_id, modality);
  for (double t : timestamps) {
    if (table == nullptr || !table->find_row(t)) {
      out.push_back({video_id, std::string(to_string(modality)), t});
    }
  }
  return out;
}

Eigen::MatrixXd FeatureStore::features(const std::string& video_id, Modality modality,
                                       std::span<const double> timestamps) const {
  const auto* table = find(video_id, modality);
  if (table == nullptr) throw MissingFeatureError(missing(video_id, modality, timestamps));
  Eigen::MatrixXd out(static_cast<Eigen::Index>(timestamps.size()), table->dim);
  for (std::size_t i = 0; i < timestamps.size(); ++i) {
    const auto row = table->find_row(timestamps[i]);
    if (!row) throw MissingFeatureError(missing(video_id, modality, timestamps));
    const float* src = table->values.data() + *row * static_cast<std::size_t>(table->dim);
    for (int d = 0; d < table->dim; ++d) out(static_cast<Eigen::Index>(i), d) = src[d];
  }
  return out;
}

void FeatureStore::write_table(const FeatureTable& table, const std::filesystem::path& binary_path,
                               const std::filesystem::path& index_path) {
  std::ofstream out(binary_path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write " + binary_path.string());
  out.write(kMagic, 4);
  write_le<std::uint32_t>(out, kVersion);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(table.rows()));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(table.dim));
  for (float v : table.values) write_le<float>(out, v);

  nlohmann::json index = nlohmann::json::array();
  for (std::size_t i = 0; i < table.rows(); ++i) {
    index.push_back({{"t", table.timestamps[i]}, {"row", i}});
  }
  std::ofstream sidecar(index_path, std::ios::binary);
  if (!sidecar) throw ArgumentError("cannot write " + index_path.string());
  sidecar << nlohmann::json{{"rows", index}}.dump() << '\n';
}

FeatureTable FeatureStore::read_table(const std::filesystem::path& binary_path,
                                      const std::filesystem::path& index_path) {
  std::ifstream in(binary_path, std::ios::binary);
  if (!in) throw ParseError(binary_path.string(), 0, "cannot open feature file");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw ParseError(binary_path.string(), 0, "bad magic, expected RFFS");
  }
  const auto version = read_le<std::uint32_t>(in, binary_path);
  if (version != kVersion) {
    throw ParseError(binary_path.string(), 0, "unsupported version " + std::to_string(version));
  }
  const auto rows = read_le<std::uint32_t>(in, binary_path);
  const auto dim = read_le<std::uint32_t>(in, binary_path);
  FeatureTable table;
  table.dim = static_cast<int>(dim);
  table.values.resize(static_cast<std::size_t>(rows) * dim);
  for (auto& v : table.values) v = read_le<float>(in, binary_path);

  std::ifstream sidecar(index_path);
  if (!sidecar) throw ParseError(index_path.string(), 0, "cannot open feature index");
  try {
    const auto doc = nlohmann::json::parse(sidecar);
    table.timestamps.assign(rows, 0.0);
    std::vector<bool> seen(rows, false);
    for (const auto& entry : doc.at("rows")) {
      const auto row = entry.at("row").get<std::size_t>();
      if (row >= rows || seen[row]) throw ParseError(index_path.string(), 0, "bad row index");
      seen[row] = true;
      table.timestamps[row] = entry.at("t").get<double>();
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
      throw ParseError(index_path.string(), 0, "index does not cover every row");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(index_path.string(), 0, e.what());
  }
  return table;
}

void FeatureStore::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  for (const auto& [key, table] : tables_) {
    const auto stem = table_stem(key.first, key.second);
    write_table(table, dir / (stem + ".rffs"), dir / (stem + ".json"));
  }
}

FeatureStore FeatureStore::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw ArgumentError("feature store '" + dir.string() + "' is not a directory");
  }
  std::vector<std::filesystem::path> binaries;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".rffs") binaries.push_back(entry.path());
  }
  std::sort(binaries.begin(), binaries.end());
  FeatureStore store;
  for (const auto& path : binaries) {
    const auto stem = path.stem().string();
    const auto dot = stem.rfind('.');
    if (dot == std::string::npos) {
      throw ParseError(path.string(), 0, "expected <video_id>.<modality>.rffs");
    }
    const auto modality = parse_modality(stem.substr(dot + 1));
    auto index_path = path;
    index_path.replace_extension(".json");
    store.put(stem.substr(0, dot), modality, read_table(path, index_path));
  }
  return store;
}

EmbeddingSequence PrecomputedExtractor::extract(const FrameSequence& frames) const {
  EmbeddingSequence seq{frames.modality, frames.timestamps,
                        provider_.features(frames.video_id, frames.modality, frames.timestamps)};
  if (seq.vectors.cols() != dim_) throw ArgumentError("stored feature dim does not match");
  return seq;
}

MockExtractor::MockExtractor(FeatureExtractorConfig config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  const int grid = config_.input_size / config_.patch_size;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / grid);
  projection_.resize(config_.feature_dim, grid * grid);
  for (Eigen::Index i = 0; i < projection_.size(); ++i) projection_.data()[i] = normal(rng);
}

Eigen::VectorXd MockExtractor::extract_frame(const Image& frame) const {
  const Image gray =
      to_grayscale(resize_bilinear(frame, config_.input_size, config_.input_size));
  const int grid = config_.input_size / config_.patch_size;
  const int patch = config_.patch_size;
  Eigen::VectorXd pooled(grid * grid);
  for (int gy = 0; gy < grid; ++gy) {
    for (int gx = 0; gx < grid; ++gx) {
      double sum = 0.0;
      for (int y = 0; y < patch; ++y) {
        for (int x = 0; x < patch; ++x) sum += gray.at(gx * patch + x, gy * patch + y);
      }
      pooled(gy * grid + gx) = sum / (patch * patch);
    }
  }
  return projection_ * pooled;
}

EmbeddingSequence MockExtractor::extract(const FrameSequence& frames) const {
  if (frames.frames.size() != frames.timestamps.size()) {
    throw ArgumentError("mock extraction needs one decoded frame per timestamp");
  }
  EmbeddingSequence seq{frames.modality, frames.timestamps,
                        Eigen::MatrixXd(static_cast<Eigen::Index>(frames.frames.size()),
                                        config_.feature_dim)};
  for (std::size_t i = 0; i < frames.frames.size(); ++i) {
    seq.vectors.row(static_cast<Eigen::Index>(i)) = extract_frame(frames.frames[i]).transpose();
  }
  return seq;
}

EmbeddingSequence ExternalExtractor::extract(const FrameSequence& frames) const {
  if (!backbone_) throw BackendError("external feature backend is not available");
  if (frames.frames.size() != frames.timestamps.size()) {
    throw ArgumentError("external extraction needs one decoded frame per timestamp");
  }
  EmbeddingSequence seq{frames.modality, frames.timestamps,
                        Eigen::MatrixXd(static_cast<Eigen::Index>(frames.frames.size()), dim_)};
  for (std::size_t i = 0; i < frames.frames.size(); ++i) {
    const Eigen::VectorXd v = backbone_(frames.frames[i]);
    if (v.size() != dim_) throw BackendError("external backend returned the wrong dimension");
    seq.vectors.row(static_cast<Eigen::Index>(i)) = v.transpose();
  }
  return seq;
}

std::unique_ptr<FeatureExtractor> make_extractor(const FeatureExtractorConfig& config,
                                                 const FeatureProvider* store, std::uint64_t seed,
                                                 ExternalExtractor::Backbone backbone) {
  config.validate();
  switch (config.backend) {
    case ExtractorBackend::precomputed:
      if (store == nullptr) throw BackendError("precomputed backend needs a feature store");
      return std::make_unique<PrecomputedExtractor>(*store, config.feature_dim);
    case ExtractorBackend::mock:
      return std::make_unique<MockExtractor>(config, seed);
    case ExtractorBackend::external:
      return std::make_unique<ExternalExtractor>(config.feature_dim, std::move(backbone));
  }
  throw BackendError("unknown extractor backend");
}

EmbeddingSequence extract_features(const FrameSequence& frames, const FeatureExtractor& extractor) {
  auto seq = extractor.extract(frames);
  if (seq.vectors.rows() != static_cast<Eigen::Index>(seq.timestamps.size())) {
    throw ArgumentError("extractor returned a row count that does not match the timestamps");
  }
  if (!seq.vectors.allFinite()) throw BackendError("extractor produced non-finite features");
  return seq;
}

void InMemoryFrameReader::add_video(const std::string& video_id, double fps,
                                    std::vector<Image> frames) {
  if (!(fps > 0.0) || frames.empty()) throw ArgumentError("video needs fps > 0 and frames");
  videos_[video_id] = Video{fps, std::move(frames)};
}

Image InMemoryFrameReader::read(const std::string& video_id, double timestamp) const {
  const auto it = videos_.find(video_id);
  if (it == videos_.end()) throw ArgumentError("unknown video '" + video_id + "'");
  const auto index = static_cast<long>(std::ceil(timestamp * it->second.fps - 0.5 - 1e-9));
  if (index < 0 || index >= static_cast<long>(it->second.frames.size())) {
    throw MissingFeatureError({{video_id, "rgb", timestamp}});
  }
  return it->second.frames[static_cast<std::size_t>(index)];
}

double InMemoryFrameReader::duration(const std::string& video_id) const {
  const auto it = videos_.find(video_id);
  if (it == videos_.end()) throw ArgumentError("unknown video '" + video_id + "'");
  return static_cast<double>(it->second.frames.size() - 1) / it->second.fps;
}

Eigen::MatrixXd ExtractingFeatureProvider::features(const std::string& video_id,
                                                    Modality modality,
                                                    std::span<const double> timestamps) const {
  FrameSequence seq{modality, video_id, {timestamps.begin(), timestamps.end()}, {}};
  seq.frames.reserve(timestamps.size());
  const double end = reader_.duration(video_id);
  for (double t : timestamps) {
    if (modality == Modality::rgb) {
      seq.frames.push_back(reader_.read(video_id, t));
    } else {
      const Image first = reader_.read(video_id, t);
      const Image second = reader_.read(video_id, std::min(t + flow_span_s_, end));
      seq.frames.push_back(render_flow(flow_.estimate(first, second)));
    }
  }
  return extract_features(seq, extractor_).vectors;
}

}  // namespace dualstream
