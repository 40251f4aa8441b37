#include "dualstream/datamodel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "dualstream/error.hpp"

namespace dualstream {

namespace {

constexpr std::string_view kManifestHeader =
    "video_id,surgeon_id,start_s,end_s,label,rater_id,task_kind";
constexpr double kTimeTolerance = 1e-9;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_row(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t begin = 0;
  while (true) {
    const auto comma = line.find(',', begin);
    if (comma == std::string_view::npos) {
      fields.push_back(trim(line.substr(begin)));
      break;
    }
    fields.push_back(trim(line.substr(begin, comma - begin)));
    begin = comma + 1;
  }
  return fields;
}

std::optional<double> parse_double(std::string_view s) {
  double value = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) return std::nullopt;
  return value;
}

void validate_record(const AnnotationRecord& r, const std::map<std::string, MediaInfo>& media) {
  if (r.video_id.empty()) throw ValidationError("record has an empty video_id");
  const auto it = media.find(r.video_id);
  if (it == media.end()) {
    throw ValidationError("video '" + r.video_id + "' is not in the media index");
  }
  if (!(r.start_s >= 0.0)) {
    throw ValidationError("record on '" + r.video_id + "' starts before 0 s");
  }
  if (!(r.end_s > r.start_s)) {
    throw ValidationError("record on '" + r.video_id + "' has end_s <= start_s");
  }
  if (r.end_s > it->second.duration_s + kTimeTolerance) {
    throw ValidationError("record on '" + r.video_id + "' ends after the media duration");
  }
  const auto& taxonomy = Taxonomy::of(r.task_kind);
  if (!taxonomy.contains(r.label)) {
    throw TaxonomyError("label '" + r.label + "' is not a " + std::string(to_string(r.task_kind)) +
                        " category");
  }
}

auto record_order(const AnnotationRecord& r) {
  return std::tie(r.video_id, r.start_s, r.end_s, r.task_kind, r.rater_id, r.label);
}

using SegmentKey = std::tuple<std::string, double, double>;

SegmentKey segment_key(const AnnotationRecord& r) { return {r.video_id, r.start_s, r.end_s}; }

}  // namespace

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::dissection_gesture: return "dissection_gesture";
    case TaskKind::suturing_gesture: return "suturing_gesture";
    case TaskKind::subphase: return "subphase";
    case TaskKind::skill: return "skill";
  }
  return "unknown";
}

TaskKind parse_task_kind(std::string_view name) {
  for (auto kind : {TaskKind::dissection_gesture, TaskKind::suturing_gesture, TaskKind::subphase,
                    TaskKind::skill}) {
    if (to_string(kind) == name) return kind;
  }
  throw TaxonomyError("unknown task kind '" + std::string(name) + "'");
}

Taxonomy::Taxonomy(TaskKind kind, std::vector<std::string> categories)
    : kind_(kind), categories_(std::move(categories)) {}

const Taxonomy& Taxonomy::of(TaskKind kind) {
  static const Taxonomy dissection(TaskKind::dissection_gesture, {"c", "h", "k", "m", "p", "r"});
  static const Taxonomy suturing(TaskKind::suturing_gesture, {"R1", "R2", "L1", "C1"});
  static const Taxonomy subphase(TaskKind::subphase,
                                 {"needle_handling", "needle_driving", "needle_withdrawal"});
  static const Taxonomy skill(TaskKind::skill, {"low", "high"});
  switch (kind) {
    case TaskKind::dissection_gesture: return dissection;
    case TaskKind::suturing_gesture: return suturing;
    case TaskKind::subphase: return subphase;
    case TaskKind::skill: return skill;
  }
  throw TaxonomyError("unknown task kind");
}

std::optional<std::size_t> Taxonomy::find(std::string_view code) const {
  const auto it = std::find(categories_.begin(), categories_.end(), code);
  if (it == categories_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - categories_.begin());
}

std::size_t Taxonomy::index_of(std::string_view code) const {
  if (auto index = find(code)) return *index;
  throw TaxonomyError("label '" + std::string(code) + "' is not a " +
                      std::string(to_string(kind_)) + " category");
}

std::vector<std::string> DatasetManifest::video_ids() const {
  std::set<std::string> ids;
  for (const auto& r : records) ids.insert(r.video_id);
  return {ids.begin(), ids.end()};
}

const MediaInfo& DatasetManifest::media(const std::string& video_id) const {
  const auto it = media_index.find(video_id);
  if (it == media_index.end()) {
    throw ValidationError("video '" + video_id + "' is not in the media index");
  }
  return it->second;
}

DatasetManifest make_manifest(std::vector<AnnotationRecord> records,
                              std::map<std::string, MediaInfo> media_index) {
  for (const auto& [id, info] : media_index) {
    if (!(info.fps > 0.0) || !(info.duration_s > 0.0)) {
      throw ValidationError("media entry '" + id + "' needs fps > 0 and duration_s > 0");
    }
  }
  for (const auto& r : records) validate_record(r, media_index);
  std::sort(records.begin(), records.end(),
            [](const auto& a, const auto& b) { return record_order(a) < record_order(b); });
  return DatasetManifest{std::move(records), std::move(media_index)};
}

DatasetManifest load_manifest(const std::filesystem::path& csv_path,
                              const std::filesystem::path& media_index_path) {
  std::ifstream media_in(media_index_path);
  if (!media_in) throw ParseError(media_index_path.string(), 0, "cannot open media index");
  std::map<std::string, MediaInfo> media;
  try {
    const auto doc = nlohmann::json::parse(media_in);
    for (const auto& [id, entry] : doc.items()) {
      MediaInfo info;
      info.fps = entry.at("fps").get<double>();
      info.duration_s = entry.at("duration_s").get<double>();
      info.path = entry.value("path", std::string{});
      media.emplace(id, std::move(info));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(media_index_path.string(), 0, e.what());
  }

  std::ifstream in(csv_path);
  if (!in) throw ParseError(csv_path.string(), 0, "cannot open manifest");
  const auto source = csv_path.string();
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(source, 1, "missing header");
  ++line_no;
  if (trim(line) != kManifestHeader) {
    throw ParseError(source, line_no, "expected header '" + std::string(kManifestHeader) + "'");
  }

  std::vector<AnnotationRecord> records;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_row(line);
    if (fields.size() != 7) {
      throw ParseError(source, line_no, "expected 7 fields, found " + std::to_string(fields.size()));
    }
    AnnotationRecord r;
    r.video_id = std::string(fields[0]);
    r.surgeon_id = std::string(fields[1]);
    const auto start = parse_double(fields[2]);
    const auto end = parse_double(fields[3]);
    if (!start || !end) throw ParseError(source, line_no, "start_s/end_s must be finite numbers");
    r.start_s = *start;
    r.end_s = *end;
    r.label = std::string(fields[4]);
    r.rater_id = std::string(fields[5]);
    try {
      r.task_kind = parse_task_kind(fields[6]);
      validate_record(r, media);
    } catch (const TaxonomyError& e) {
      throw TaxonomyError(source + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
    records.push_back(std::move(r));
  }
  return make_manifest(std::move(records), std::move(media));
}

DatasetManifest load_manifest(const std::filesystem::path& csv_path) {
  return load_manifest(csv_path, csv_path.parent_path() / "media_index.json");
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& csv_path,
                   const std::filesystem::path& media_index_path) {
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write " + csv_path.string());
  out << kManifestHeader << '\n';
  char buf[64];
  for (const auto& r : manifest.records) {
    out << r.video_id << ',' << r.surgeon_id << ',';
    auto res = std::to_chars(buf, buf + sizeof buf, r.start_s);
    out.write(buf, res.ptr - buf);
    out << ',';
    res = std::to_chars(buf, buf + sizeof buf, r.end_s);
    out.write(buf, res.ptr - buf);
    out << ',' << r.label << ',' << r.rater_id << ',' << to_string(r.task_kind) << '\n';
  }

  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [id, info] : manifest.media_index) {
    doc[id] = {{"fps", info.fps}, {"duration_s", info.duration_s}, {"path", info.path}};
  }
  std::ofstream media_out(media_index_path, std::ios::binary);
  if (!media_out) throw ArgumentError("cannot write " + media_index_path.string());
  media_out << doc.dump(2) << '\n';
}

std::string aggregate_skill_labels(std::span<const AnnotationRecord> records) {
  if (records.empty()) throw ArgumentError("aggregate_skill_labels needs at least one record");
  const auto key = segment_key(records.front());
  bool any_low = false;
  for (const auto& r : records) {
    if (r.task_kind != TaskKind::skill) throw ArgumentError("record is not a skill label");
    if (segment_key(r) != key) throw ArgumentError("records span more than one segment");
    const auto index = Taxonomy::of(TaskKind::skill).index_of(r.label);
    any_low = any_low || index == 0;
  }
  return any_low ? "low" : "high";
}

double inter_rater_reliability(std::span<const AnnotationRecord> records,
                               const std::vector<std::string>& raters) {
  const std::set<std::string> pool(raters.begin(), raters.end());
  if (pool.size() < 2) throw ArgumentError("reliability needs at least two distinct raters");

  std::map<SegmentKey, std::map<std::string, std::string>> labels;
  for (const auto& r : records) {
    if (!pool.contains(r.rater_id)) continue;
    auto [it, inserted] = labels[segment_key(r)].emplace(r.rater_id, r.label);
    if (!inserted && it->second != r.label) {
      throw ArgumentError("rater '" + r.rater_id + "' labelled one segment twice");
    }
  }
  if (labels.empty()) throw ArgumentError("no segments annotated by the rater pool");

  std::size_t agreements = 0;
  std::size_t comparisons = 0;
  for (const auto& [key, by_rater] : labels) {
    if (by_rater.size() != pool.size()) {
      throw ArgumentError("segment on '" + std::get<0>(key) +
                          "' is not annotated by every rater in the pool");
    }
    for (auto a = by_rater.begin(); a != by_rater.end(); ++a) {
      for (auto b = std::next(a); b != by_rater.end(); ++b) {
        agreements += a->second == b->second ? 1 : 0;
        ++comparisons;
      }
    }
  }
  return static_cast<double>(agreements) / static_cast<double>(comparisons);
}

std::vector<LabeledSegment> labeled_segments(const DatasetManifest& manifest, TaskKind kind,
                                             std::optional<Adjudication> rule) {
  const auto policy =
      rule.value_or(kind == TaskKind::skill ? Adjudication::worst_score : Adjudication::majority);
  if (policy == Adjudication::worst_score && kind != TaskKind::skill) {
    throw ArgumentError("worst-score adjudication only applies to skill labels");
  }
  const auto& taxonomy = Taxonomy::of(kind);

  std::vector<LabeledSegment> out;
  std::vector<AnnotationRecord> group;
  auto flush = [&] {
    if (group.empty()) return;
    LabeledSegment seg{group.front().video_id, group.front().surgeon_id, group.front().start_s,
                       group.front().end_s, 0};
    if (policy == Adjudication::worst_score) {
      seg.label = taxonomy.index_of(aggregate_skill_labels(group));
    } else {
      std::vector<int> votes(taxonomy.size(), 0);
      for (const auto& r : group) ++votes[taxonomy.index_of(r.label)];
      const auto best = std::max_element(votes.begin(), votes.end());
      if (policy == Adjudication::require_consensus &&
          static_cast<std::size_t>(*best) != group.size()) {
        throw ValidationError("raters disagree on segment of '" + seg.video_id + "' at " +
                              std::to_string(seg.start_s) + " s");
      }
      seg.label = static_cast<std::size_t>(best - votes.begin());
    }
    out.push_back(std::move(seg));
    group.clear();
  };

  for (const auto& r : manifest.records) {
    if (r.task_kind != kind) continue;
    if (!group.empty() && segment_key(group.front()) != segment_key(r)) flush();
    group.push_back(r);
  }
  flush();
  return out;
}

FoldSplit make_monte_carlo_split(const std::vector<std::string>& video_ids, int fold_id,
                                 std::uint64_t seed) {
  const auto n = static_cast<long>(video_ids.size());
  if (n < 10) {
    throw ConfigurationError("Monte Carlo splits need at least 10 videos, got " +
                             std::to_string(n));
  }
  const long n_test = std::max(1L, std::lround(0.10 * static_cast<double>(n)));
  const long n_val = std::max(1L, std::lround(0.10 * static_cast<double>(n - n_test)));
  if (n - n_test - n_val < 1) throw ConfigurationError("too few videos to populate train/val/test");

  std::vector<std::string> order(video_ids);
  std::sort(order.begin(), order.end());
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(fold_id)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);

  FoldSplit split;
  split.fold_id = fold_id;
  split.seed = seed;
  split.test_video_ids.assign(order.begin(), order.begin() + n_test);
  split.val_video_ids.assign(order.begin() + n_test, order.begin() + n_test + n_val);
  split.train_video_ids.assign(order.begin() + n_test + n_val, order.end());
  std::sort(split.test_video_ids.begin(), split.test_video_ids.end());
  std::sort(split.val_video_ids.begin(), split.val_video_ids.end());
  std::sort(split.train_video_ids.begin(), split.train_video_ids.end());
  return split;
}

std::vector<FoldSplit> make_monte_carlo_splits(const DatasetManifest& manifest, int n_folds,
                                               std::uint64_t seed) {
  if (n_folds < 1) throw ConfigurationError("n_folds must be at least 1");
  const auto ids = manifest.video_ids();
  std::vector<FoldSplit> folds;
  folds.reserve(static_cast<std::size_t>(n_folds));
  for (int k = 0; k < n_folds; ++k) folds.push_back(make_monte_carlo_split(ids, k, seed));
  return folds;
}

std::string fold_to_json(const FoldSplit& fold) {
  nlohmann::json doc = {{"fold_id", fold.fold_id},
                        {"seed", fold.seed},
                        {"train", fold.train_video_ids},
                        {"val", fold.val_video_ids},
                        {"test", fold.test_video_ids}};
  return doc.dump(2) + "\n";
}

FoldSplit fold_from_json(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    FoldSplit fold;
    fold.fold_id = doc.at("fold_id").get<int>();
    fold.seed = doc.at("seed").get<std::uint64_t>();
    fold.train_video_ids = doc.at("train").get<std::vector<std::string>>();
    fold.val_video_ids = doc.at("val").get<std::vector<std::string>>();
    fold.test_video_ids = doc.at("test").get<std::vector<std::string>>();
    return fold;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("fold", 0, e.what());
  }
}

}  // namespace dualstream
