#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dualstream {

enum class TaskKind { dissection_gesture, suturing_gesture, subphase, skill };

std::string_view to_string(TaskKind kind);
/// Throws TaxonomyError for unknown names.
TaskKind parse_task_kind(std::string_view name);

/// Ordered category codes for one task. Row order of every per-class output
/// (probabilities, prototypes, AUC tables) follows `categories()`.
class Taxonomy {
 public:
  static const Taxonomy& of(TaskKind kind);

  TaskKind kind() const noexcept { return kind_; }
  const std::vector<std::string>& categories() const noexcept { return categories_; }
  std::size_t size() const noexcept { return categories_.size(); }

  std::optional<std::size_t> find(std::string_view code) const;
  /// Like find() but throws TaxonomyError naming the code and task.
  std::size_t index_of(std::string_view code) const;
  bool contains(std::string_view code) const { return find(code).has_value(); }

 private:
  Taxonomy(TaskKind kind, std::vector<std::string> categories);

  TaskKind kind_;
  std::vector<std::string> categories_;
};

struct AnnotationRecord {
  std::string video_id;
  std::string surgeon_id;
  double start_s = 0.0;
  double end_s = 0.0;
  std::string label;
  std::string rater_id;
  TaskKind task_kind = TaskKind::subphase;
};

struct MediaInfo {
  double fps = 30.0;
  double duration_s = 0.0;
  std::string path;
};

struct DatasetManifest {
  std::vector<AnnotationRecord> records;
  std::map<std::string, MediaInfo> media_index;

  /// Sorted ids of videos that carry at least one record. Media entries
  /// without records (unlabelled videos) are not part of this set.
  std::vector<std::string> video_ids() const;
  const MediaInfo& media(const std::string& video_id) const;
};

/// Validates every record and sorts by (video_id, start_s). Throws
/// ValidationError or TaxonomyError.
DatasetManifest make_manifest(std::vector<AnnotationRecord> records,
                              std::map<std::string, MediaInfo> media_index);

/// Reads the annotation CSV and its JSON media index. The single-argument form
/// expects `media_index.json` beside the CSV.
DatasetManifest load_manifest(const std::filesystem::path& csv_path,
                              const std::filesystem::path& media_index_path);
DatasetManifest load_manifest(const std::filesystem::path& csv_path);

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& csv_path,
                   const std::filesystem::path& media_index_path);

/// Worst-score rule: "low" if any rater said low, else "high".
std::string aggregate_skill_labels(std::span<const AnnotationRecord> records);

/// Mean pairwise exact-agreement proportion over all (segment, rater pair)
/// combinations. Records from raters outside `raters` are ignored.
double inter_rater_reliability(std::span<const AnnotationRecord> records,
                               const std::vector<std::string>& raters);

inline constexpr double kReliabilityGate = 0.8;

inline bool reliability_accepted(double reliability, double gate = kReliabilityGate) {
  return reliability > gate;
}

/// How multi-rater labels collapse to one label per segment.
enum class Adjudication {
  worst_score,        // skill only
  majority,           // ties go to the lowest taxonomy index
  require_consensus,  // throws ValidationError on disagreement
};

struct LabeledSegment {
  std::string video_id;
  std::string surgeon_id;
  double start_s = 0.0;
  double end_s = 0.0;
  std::size_t label = 0;
};

/// One entry per distinct (video, start, end) of `kind`, in manifest order.
/// Defaults to worst_score for skill and majority otherwise.
std::vector<LabeledSegment> labeled_segments(const DatasetManifest& manifest, TaskKind kind,
                                             std::optional<Adjudication> rule = std::nullopt);

struct FoldSplit {
  int fold_id = 0;
  std::vector<std::string> train_video_ids;
  std::vector<std::string> val_video_ids;
  std::vector<std::string> test_video_ids;
  std::uint64_t seed = 0;
};

/// Test = max(1, round(0.1 n)) videos, validation = max(1, round(0.1 (n - test)))
/// of the rest, each fold drawn independently from (seed, fold_id).
std::vector<FoldSplit> make_monte_carlo_splits(const DatasetManifest& manifest, int n_folds,
                                               std::uint64_t seed);
FoldSplit make_monte_carlo_split(const std::vector<std::string>& video_ids, int fold_id,
                                 std::uint64_t seed);

std::string fold_to_json(const FoldSplit& fold);
FoldSplit fold_from_json(std::string_view text);

}  // namespace dualstream
