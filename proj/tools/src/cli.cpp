#include "dualstream_cli/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <tuple>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dualstream/checkpoint.hpp"
#include "dualstream/datamodel.hpp"
#include "dualstream/features.hpp"
#include "dualstream/inference.hpp"
#include "dualstream/json.hpp"
#include "dualstream/metrics.hpp"
#include "dualstream/synthetic.hpp"
#include "dualstream/training.hpp"
#include "dualstream_cli/run_config.hpp"

namespace dualstream::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigurationError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string fixed(double value, int digits = 4) {
  if (!std::isfinite(value)) return "nan";
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << value;
  return s.str();
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json summary_json(const FoldSummary& s) {
  return {{"mean", std::isfinite(s.mean) ? json(s.mean) : json(nullptr)},
          {"std", std::isfinite(s.std) ? json(s.std) : json(nullptr)}};
}

// Flags shared by the commands that read a run configuration.
struct CommonFlags {
  std::string config;
  std::string manifest;
  std::string features;
  std::string out;
  std::string task;
  std::string run_id;
  std::string splits;
  std::optional<int> folds;
  std::optional<std::uint64_t> seed;
  std::optional<double> threshold;
  std::optional<int> epochs;
  int jobs = 1;
  bool no_tta = false;
  bool plots = false;
};

void add_config_flags(CLI::App& cmd, CommonFlags& f) {
  cmd.add_option("--config", f.config, "Run configuration JSON");
  cmd.add_option("--manifest", f.manifest, "Annotation CSV (media_index.json beside it)");
  cmd.add_option("--features", f.features, "Feature store directory (default $ROBOFLOW_CACHE)");
  cmd.add_option("--out", f.out, "Output directory");
  cmd.add_option("--task", f.task, "Task kind, e.g. suturing_gesture");
}

void add_run_flags(CLI::App& cmd, CommonFlags& f) {
  add_config_flags(cmd, f);
  cmd.add_option("--folds", f.folds, "Number of Monte Carlo folds");
  cmd.add_option("--seed", f.seed, "Seed for splits and training");
  cmd.add_option("--epochs", f.epochs, "Training epochs");
  cmd.add_option("--splits", f.splits, "Directory of fold<k>.json files to use instead of drawing splits");
  cmd.add_option("--run-id", f.run_id, "Run directory name under --out");
  cmd.add_option("--jobs", f.jobs, "Folds trained concurrently")->check(CLI::PositiveNumber);
  cmd.add_flag("--no-tta", f.no_tta, "Evaluate without test-time augmentation");
  cmd.add_flag("--plots", f.plots, "Write ROC plots");
}

RunConfig resolve_config(const CommonFlags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  if (!f.manifest.empty()) c.manifest = f.manifest;
  if (!f.features.empty()) c.features = f.features;
  if (!f.out.empty()) c.out = f.out;
  if (!f.task.empty()) c.task = parse_task_kind(f.task);
  if (f.folds) c.n_folds = *f.folds;
  if (f.seed) c.train.seed = *f.seed;
  if (f.threshold) c.threshold = *f.threshold;
  if (f.epochs) c.train.epochs = *f.epochs;
  c.validate();
  return c;
}

DatasetManifest open_manifest(const RunConfig& c) {
  if (c.manifest.empty()) throw ConfigurationError("no manifest given (--manifest or config)");
  if (!fs::exists(c.manifest)) throw ConfigurationError("manifest not found: " + c.manifest.string());
  return load_manifest(c.manifest);
}

FeatureStore open_features(const RunConfig& c) {
  const auto dir = resolve_feature_dir(c);
  if (dir.empty()) throw ConfigurationError("no feature directory (--features or ROBOFLOW_CACHE)");
  if (!fs::is_directory(dir)) throw ConfigurationError("feature directory not found: " + dir.string());
  return FeatureStore::load(dir);
}

std::vector<FoldSplit> read_splits(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigurationError("split directory not found: " + dir.string());
  const std::regex name(R"(fold(\d+)\.json)");
  std::map<int, FoldSplit> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const auto file = entry.path().filename().string();
    if (!std::regex_match(file, m, name)) continue;
    auto fold = fold_from_json(read_text(entry.path()));
    found[fold.fold_id] = std::move(fold);
  }
  if (found.empty()) throw ConfigurationError("no fold<k>.json files in " + dir.string());
  std::vector<FoldSplit> out;
  for (auto& [id, fold] : found) out.push_back(std::move(fold));
  return out;
}

void write_roc_plot(const fs::path& path, const std::vector<FoldResult>& folds,
                    const std::vector<std::string>& categories) {
  std::vector<std::string> labels;
  std::vector<RocBand> bands;
  for (std::size_t c = 0; c < categories.size(); ++c) {
    std::vector<RocCurve> curves;
    for (const auto& f : folds) {
      const auto& s = f.test_scores;
      const auto n = s.labels.size();
      std::vector<double> scores(n);
      auto positive = std::make_unique<bool[]>(n);  // std::vector<bool> has no span view
      std::size_t n_pos = 0;
      for (std::size_t i = 0; i < n; ++i) {
        scores[i] = s.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
        positive[i] = s.labels[i] == c;
        n_pos += positive[i] ? 1 : 0;
      }
      if (n_pos == 0 || n_pos == n) continue;
      curves.push_back(roc_curve(scores, std::span<const bool>(positive.get(), n)));
    }
    if (curves.empty()) continue;
    labels.push_back(categories[c]);
    bands.push_back(average_roc(curves));
  }
  if (!bands.empty()) write_roc_svg(path, labels, bands);
}

json fold_report(const FoldResult& r) {
  auto doc = json::parse(report_to_json(r.test));
  doc["fold_id"] = r.split.fold_id;
  doc["ablation"] = std::string(to_string(r.checkpoint.config.ablation));
  doc["best_epoch"] = r.checkpoint.best_epoch;
  doc["tta"] = r.used_tta;
  return doc;
}

// Reports for one setting: fold<k>.json per fold plus summary.json.
json write_reports(const fs::path& run_dir, const CrossValidationResult& cv, bool plots) {
  json folds = json::array();
  for (const auto& r : cv.folds) {
    write_text(run_dir / ("fold" + std::to_string(r.split.fold_id) + ".json"),
               fold_report(r).dump(2) + "\n");
    folds.push_back({{"fold_id", r.split.fold_id},
                     {"best_epoch", r.checkpoint.best_epoch},
                     {"macro_auc", optional_number(r.test.auc.macro)},
                     {"macro_ppv", optional_number(r.test.ppv.macro)}});
  }
  json summary = {{"ablation", std::string(to_string(cv.folds.front().checkpoint.config.ablation))},
                  {"categories", cv.folds.front().test.categories},
                  {"macro_auc", summary_json(cv.macro_auc)},
                  {"macro_ppv", summary_json(cv.macro_ppv)},
                  {"folds", folds}};
  write_text(run_dir / "summary.json", summary.dump(2) + "\n");
  if (plots) write_roc_plot(run_dir / "roc.svg", cv.folds, cv.folds.front().test.categories);
  return summary;
}

void write_fold_artifacts(const fs::path& run_dir, const FoldResult& r) {
  const auto dir = run_dir / ("fold" + std::to_string(r.split.fold_id));
  fs::create_directories(dir);
  write_text(dir / "split.json", fold_to_json(r.split));
  save_checkpoint(r.checkpoint, dir / "checkpoint.bin");
}

CrossValidationOptions cv_options(const fs::path& run_dir, int jobs) {
  CrossValidationOptions options;
  options.jobs = jobs;
  options.epoch_callback = [run_dir](int fold_id) -> EpochCallback {
    const auto dir = run_dir / ("fold" + std::to_string(fold_id));
    fs::create_directories(dir);
    auto log = std::make_shared<std::ofstream>(dir / "train_log.jsonl", std::ios::binary);
    if (!*log) throw ArgumentError("cannot write " + (dir / "train_log.jsonl").string());
    return [log](const EpochRecord& record) {
      *log << json(record).dump() << "\n";
      log->flush();
    };
  };
  return options;
}

void print_summary(std::ostream& out, const std::string& name, const CrossValidationResult& cv) {
  for (const auto& r : cv.folds) {
    out << name << " fold " << r.split.fold_id << ": macro AUC "
        << (r.test.auc.macro ? fixed(*r.test.auc.macro) : "undefined") << ", macro PPV "
        << (r.test.ppv.macro ? fixed(*r.test.ppv.macro) : "undefined") << ", best epoch "
        << r.checkpoint.best_epoch << "\n";
  }
  out << name << ": macro AUC " << fixed(cv.macro_auc.mean) << " +- " << fixed(cv.macro_auc.std)
      << ", macro PPV " << fixed(cv.macro_ppv.mean) << " +- " << fixed(cv.macro_ppv.std) << " over "
      << cv.folds.size() << " fold(s)\n";
}

std::vector<FoldSplit> splits_for(const CommonFlags& f, const RunConfig& c,
                                  const DatasetManifest& manifest) {
  if (!f.splits.empty()) return read_splits(f.splits);
  return make_monte_carlo_splits(manifest, c.n_folds, c.train.seed);
}

CrossValidationResult summarize_folds(std::vector<FoldResult> folds) {
  CrossValidationResult cv;
  std::vector<std::optional<double>> aucs, ppvs;
  for (const auto& r : folds) {
    aucs.push_back(r.test.auc.macro);
    ppvs.push_back(r.test.ppv.macro);
  }
  cv.macro_auc = summarize(aucs);
  cv.macro_ppv = summarize(ppvs);
  cv.folds = std::move(folds);
  return cv;
}

// ---- synth ---------------------------------------------------------------

struct SynthFlags {
  std::string out;
  std::string mode = "content";
  SyntheticSpec spec;
};

int heads_for(int dim) {
  for (int h : {6, 4, 2}) {
    if (dim % h == 0) return h;
  }
  return 1;
}

int cmd_synth(const SynthFlags& f, std::ostream& out) {
  auto spec = f.spec;
  spec.mode = parse_synthetic_mode(f.mode);
  const auto data = generate_synthetic_dataset(spec);
  const fs::path dir = f.out;
  fs::create_directories(dir);
  save_manifest(data.manifest, dir / "annotations.csv", dir / "media_index.json");
  data.features.save(dir / "features");

  RunConfig config;
  config.task = synthetic_task_kind(spec.n_classes);
  config.manifest = dir / "annotations.csv";
  config.features = dir / "features";
  config.out = dir / "runs";
  config.train.seed = spec.seed;
  config.train.learning_rate = 0.01;
  config.train.model.encoder.dim = spec.feature_dim;
  config.train.model.encoder.heads = heads_for(spec.feature_dim);
  config.train.model.embed_dim = std::max(8, spec.feature_dim / 2);
  config.train.sampling.sample_fps = spec.sample_fps;
  config.train.sampling.flow_span_s = spec.flow_span_s;
  config.extractor.feature_dim = spec.feature_dim;
  save_run_config(config, dir / "config.json");

  if (!data.planted.empty()) {
    json planted = json::array();
    for (const auto& p : data.planted) {
      planted.push_back({{"video_id", p.video_id},
                         {"segment_start_s", p.segment_start_s},
                         {"timestamp", p.timestamp}});
    }
    write_text(dir / "planted.json", planted.dump(2) + "\n");
  }
  out << "wrote " << data.manifest.video_ids().size() << " labelled and "
      << data.unlabeled_video_ids.size() << " unlabelled video(s) to " << dir.string() << "\n";
  return kOk;
}

// ---- split ---------------------------------------------------------------

int cmd_split(const CommonFlags& f, std::ostream& out) {
  const auto c = resolve_config(f);
  const auto manifest = open_manifest(c);
  const auto folds = make_monte_carlo_splits(manifest, c.n_folds, c.train.seed);
  fs::create_directories(c.out);
  for (const auto& fold : folds) {
    write_text(c.out / ("fold" + std::to_string(fold.fold_id) + ".json"), fold_to_json(fold));
  }
  out << "wrote " << folds.size() << " fold file(s) to " << c.out.string() << "\n";
  return kOk;
}

// ---- train ---------------------------------------------------------------

int cmd_train(const CommonFlags& f, std::ostream& out) {
  auto c = resolve_config(f);
  if (f.no_tta && c.train.ablation == Ablation::full) c.train.ablation = Ablation::no_tta;
  const auto manifest = open_manifest(c);
  const auto splits = splits_for(f, c, manifest);
  const auto store = open_features(c);
  const auto run_dir =
      c.out / (f.run_id.empty() ? std::string(to_string(c.train.ablation)) : f.run_id);

  const auto cv = run_cross_validation(manifest, store, c.task, splits, c.train,
                                       cv_options(run_dir, f.jobs));
  for (const auto& r : cv.folds) write_fold_artifacts(run_dir, r);
  save_run_config(c, run_dir / "config.json");
  write_reports(run_dir, cv, f.plots);
  print_summary(out, std::string(to_string(c.train.ablation)), cv);
  return kOk;
}

// ---- evaluate ------------------------------------------------------------

std::vector<fs::path> fold_dirs(const fs::path& run_dir) {
  std::vector<std::pair<int, fs::path>> found;
  if (fs::is_directory(run_dir)) {
    const std::regex name(R"(fold(\d+))");
    for (const auto& entry : fs::directory_iterator(run_dir)) {
      std::smatch m;
      const auto file = entry.path().filename().string();
      if (entry.is_directory() && std::regex_match(file, m, name) &&
          fs::exists(entry.path() / "checkpoint.bin")) {
        found.emplace_back(std::stoi(m[1].str()), entry.path());
      }
    }
  }
  std::sort(found.begin(), found.end());
  std::vector<fs::path> out;
  for (auto& [id, path] : found) out.push_back(std::move(path));
  return out;
}

int cmd_evaluate(const CommonFlags& f, std::ostream& out) {
  const auto c = resolve_config(f);
  const auto run_dir =
      c.out / (f.run_id.empty() ? std::string(to_string(c.train.ablation)) : f.run_id);
  const auto dirs = fold_dirs(run_dir);
  if (dirs.empty()) throw NoCheckpointsError("no fold<k>/checkpoint.bin under " + run_dir.string());
  const auto manifest = open_manifest(c);
  const auto store = open_features(c);

  std::vector<std::pair<FoldSplit, ModelCheckpoint>> loaded;
  for (const auto& dir : dirs) {
    auto ck = load_checkpoint(dir / "checkpoint.bin");
    auto split = fold_from_json(read_text(dir / "split.json"));
    const bool tta = f.no_tta ? false : ck.uses_tta();
    SamplingConfig sampling = ck.config.sampling;
    if (!tta) sampling.tta_offsets_frames = {0};
    require_features(manifest, store, split.test_video_ids, ck.task_kind, sampling);
    loaded.emplace_back(std::move(split), std::move(ck));
  }
  std::vector<FoldResult> results;
  for (auto& [split, ck] : loaded) {
    const std::optional<bool> tta = f.no_tta ? std::optional<bool>(false) : std::nullopt;
    results.push_back(evaluate_fold(manifest, store, split, std::move(ck), tta));
  }
  const auto cv = summarize_folds(std::move(results));
  write_reports(run_dir / (f.no_tta ? "eval_no_tta" : "eval"), cv, f.plots);
  print_summary(out, "evaluate", cv);
  return kOk;
}

// ---- ablate --------------------------------------------------------------

int cmd_ablate(const CommonFlags& f, std::ostream& out) {
  auto c = resolve_config(f);
  const auto manifest = open_manifest(c);
  const auto splits = splits_for(f, c, manifest);
  const auto store = open_features(c);
  const auto root = c.out / (f.run_id.empty() ? std::string("ablate") : f.run_id);

  std::vector<std::pair<Ablation, CrossValidationResult>> settings;
  auto train = [&](Ablation ablation) {
    auto config = c.train;
    config.ablation = ablation;
    const auto dir = root / std::string(to_string(ablation));
    auto cv = run_cross_validation(manifest, store, c.task, splits, config, cv_options(dir, f.jobs));
    for (const auto& r : cv.folds) write_fold_artifacts(dir, r);
    write_reports(dir, cv, f.plots);
    print_summary(out, std::string(to_string(ablation)), cv);
    return cv;
  };

  const auto full = train(Ablation::full);
  settings.emplace_back(Ablation::full, full);
  {
    // Same parameters as full; only the test-time sampling differs.
    std::vector<FoldResult> results;
    for (const auto& r : full.folds) {
      auto ck = r.checkpoint;
      ck.config.ablation = Ablation::no_tta;
      results.push_back(evaluate_fold(manifest, store, r.split, std::move(ck)));
    }
    auto cv = summarize_folds(std::move(results));
    const auto dir = root / "no_tta";
    for (const auto& r : cv.folds) write_fold_artifacts(dir, r);
    write_reports(dir, cv, f.plots);
    print_summary(out, "no_tta", cv);
    settings.emplace_back(Ablation::no_tta, std::move(cv));
  }
  for (auto a : {Ablation::no_rgb, Ablation::no_flow, Ablation::no_sa}) {
    settings.emplace_back(a, train(a));
  }

  json table = json::array();
  std::ostringstream csv;
  csv << "setting,macro_auc_mean,macro_auc_std,macro_ppv_mean,macro_ppv_std,delta_auc,delta_ppv\n";
  out << "\nsetting   macro_auc        macro_ppv        dAUC      dPPV\n";
  for (const auto& [a, cv] : settings) {
    const double d_auc = cv.macro_auc.mean - full.macro_auc.mean;
    const double d_ppv = cv.macro_ppv.mean - full.macro_ppv.mean;
    const auto name = std::string(to_string(a));
    table.push_back({{"setting", name},
                     {"macro_auc", summary_json(cv.macro_auc)},
                     {"macro_ppv", summary_json(cv.macro_ppv)},
                     {"delta_auc", std::isfinite(d_auc) ? json(d_auc) : json(nullptr)},
                     {"delta_ppv", std::isfinite(d_ppv) ? json(d_ppv) : json(nullptr)}});
    csv << name << "," << fixed(cv.macro_auc.mean, 6) << "," << fixed(cv.macro_auc.std, 6) << ","
        << fixed(cv.macro_ppv.mean, 6) << "," << fixed(cv.macro_ppv.std, 6) << ","
        << fixed(d_auc, 6) << "," << fixed(d_ppv, 6) << "\n";
    out << std::left << std::setw(10) << name << fixed(cv.macro_auc.mean, 3) << " +- "
        << fixed(cv.macro_auc.std, 3) << "   " << fixed(cv.macro_ppv.mean, 3) << " +- "
        << fixed(cv.macro_ppv.std, 3) << "   " << std::setw(8) << fixed(d_auc, 3) << "  "
        << fixed(d_ppv, 3) << "\n";
  }
  write_text(root / "ablation.json", table.dump(2) + "\n");
  write_text(root / "ablation.csv", csv.str());
  return kOk;
}

// ---- infer ---------------------------------------------------------------

struct InferFlags {
  CommonFlags common;
  std::vector<std::string> models;
  std::string video;
};

std::vector<ModelCheckpoint> load_models(const std::vector<std::string>& paths) {
  std::vector<ModelCheckpoint> models;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      for (const auto& dir : fold_dirs(p)) models.push_back(load_checkpoint(dir / "checkpoint.bin"));
    } else if (fs::exists(p)) {
      models.push_back(load_checkpoint(p));
    } else {
      throw NoCheckpointsError("checkpoint not found: " + p);
    }
  }
  if (models.empty()) throw NoCheckpointsError("no checkpoints to load");
  return models;
}

void require_timeline_features(std::span<const ModelCheckpoint> models, const FeatureProvider& store,
                               const std::string& video_id, const MediaInfo& media, bool use_tta) {
  std::set<std::tuple<std::string, double>> seen;
  std::vector<MissingFeature> missing;
  const auto n = static_cast<long>(std::floor(media.duration_s));
  for (const auto& model : models) {
    const bool tta = use_tta && model.uses_tta();
    for (long i = 0; i < n; ++i) {
      const Segment seg{static_cast<double>(i), static_cast<double>(i + 1)};
      const auto variants = tta ? tta_variants(seg, media.fps, model.config.sampling)
                                : std::vector<SampledInput>{
                                      sample_input(seg, media.fps, model.config.sampling, 0)};
      for (const auto& v : variants) {
        for (auto& m : missing_features(store, video_id, v)) {
          if (seen.emplace(m.modality, m.timestamp).second) missing.push_back(std::move(m));
        }
      }
    }
  }
  if (!missing.empty()) throw MissingFeatureError(std::move(missing));
}

void write_timeline_svg(const fs::path& path, const TimelinePrediction& t) {
  static const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                   "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  const double scale = 8.0;
  const double width = std::max(1.0, t.intervals.empty() ? 1.0 : t.intervals.back().end_s) * scale;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width + 20 << "\" height=\""
    << 60 + 14 * t.categories.size() << "\">\n";
  for (const auto& iv : t.intervals) {
    const char* colour =
        iv.prediction.predicted ? kPalette[*iv.prediction.predicted % 8] : "#cccccc";
    s << "<rect x=\"" << 10 + iv.start_s * scale << "\" y=\"10\" width=\""
      << (iv.end_s - iv.start_s) * scale << "\" height=\"14\" fill=\"" << colour << "\"/>\n";
  }
  for (const auto& e : t.events) {
    s << "<rect x=\"" << 10 + e.start_s * scale << "\" y=\"28\" width=\""
      << (e.end_s - e.start_s) * scale << "\" height=\"14\" fill=\"" << kPalette[e.category % 8]
      << "\"/>\n";
  }
  for (std::size_t c = 0; c < t.categories.size(); ++c) {
    const auto y = 56 + 14 * c;
    s << "<rect x=\"10\" y=\"" << y - 9 << "\" width=\"10\" height=\"10\" fill=\"" << kPalette[c % 8]
      << "\"/><text x=\"24\" y=\"" << y << "\" font-size=\"10\">" << t.categories[c]
      << "</text>\n";
  }
  s << "</svg>\n";
  write_text(path, s.str());
}

int cmd_infer(const InferFlags& f, std::ostream& out) {
  const auto c = resolve_config(f.common);
  const auto models = load_models(f.models);
  check_ensemble(models);
  const auto manifest = open_manifest(c);
  const auto& media = manifest.media(f.video);
  const auto store = open_features(c);
  const bool use_tta = !f.common.no_tta;
  require_timeline_features(models, store, f.video, media, use_tta);

  const double threshold =
      c.threshold.value_or(default_entropy_threshold(models.front().model.bank.size()));
  const auto timeline = segment_timeline(models, store, f.video, media, threshold, use_tta);
  const fs::path dir = c.out;
  write_text(dir / (f.video + ".timeline.json"), timeline_to_json(timeline));
  if (f.common.plots) write_timeline_svg(dir / (f.video + ".timeline.svg"), timeline);

  const auto abstained = std::count_if(timeline.intervals.begin(), timeline.intervals.end(),
                                       [](const auto& i) { return !i.prediction.gated; });
  out << f.video << ": " << timeline.intervals.size() << " interval(s), " << abstained
      << " abstained, " << timeline.events.size() << " event(s), threshold " << fixed(threshold)
      << "\n";
  return kOk;
}

// ---- explain -------------------------------------------------------------

struct ExplainFlags {
  CommonFlags common;
  std::string checkpoint;
  std::string video;
  double start_s = 0.0;
  double end_s = 0.0;
  std::string attention = "rollout";
};

int cmd_explain(const ExplainFlags& f, std::ostream& out) {
  const auto c = resolve_config(f.common);
  const auto source = parse_attention_source(f.attention);
  if (!fs::exists(f.checkpoint)) throw NoCheckpointsError("checkpoint not found: " + f.checkpoint);
  const auto ck = load_checkpoint(f.checkpoint);
  if (ck.options().encoding != EncodingMode::self_attention) {
    throw UnsupportedModeError("checkpoint was trained without self-attention (" +
                               std::string(to_string(ck.config.ablation)) + ")");
  }
  const auto manifest = open_manifest(c);
  const auto& media = manifest.media(f.video);
  const auto store = open_features(c);
  const Segment segment{f.start_s, f.end_s};
  for (const auto& v : tta_variants(segment, media.fps, ck.config.sampling)) {
    auto missing = missing_features(store, f.video, v);
    if (!missing.empty()) throw MissingFeatureError(std::move(missing));
  }

  const auto e = explain(ck, store, f.video, segment, media.fps, source);
  char stem[128];
  std::snprintf(stem, sizeof stem, "%s_%.3f_%.3f", f.video.c_str(), f.start_s, f.end_s);
  const fs::path dir = c.out;
  write_text(dir / (std::string(stem) + ".explain.json"), explanation_to_json(e));
  if (f.common.plots) {
    fs::create_directories(dir);
    write_attention_strip(e, dir / (std::string(stem) + ".attention.pgm"));
  }
  Eigen::Index top = 0;
  e.weights.maxCoeff(&top);
  out << f.video << " [" << fixed(f.start_s, 3) << ", " << fixed(f.end_s, 3) << "]: predicted "
      << e.predicted_label << ", peak attention at " << fixed(e.timestamps[static_cast<std::size_t>(top)], 3)
      << " s (weight " << fixed(e.weights[top]) << ")\n";
  return kOk;
}

void report_error(std::exception_ptr error, std::ostream& err) {
  try {
    std::rethrow_exception(error);
  } catch (const MissingFeatureError& e) {
    err << "error: " << e.what() << "\n";
    for (const auto& m : e.missing()) {
      err << "  missing " << m.video_id << " " << m.modality << " " << fixed(m.timestamp, 6) << "\n";
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    try {
      std::rethrow_if_nested(e);
    } catch (...) {
      report_error(std::current_exception(), err);
    }
  } catch (...) {
    err << "error: unknown exception\n";
  }
}

}  // namespace

int exit_code_for(std::exception_ptr error) {
  try {
    std::rethrow_exception(error);
  } catch (const FoldError& e) {
    try {
      std::rethrow_if_nested(e);
    } catch (...) {
      return exit_code_for(std::current_exception());
    }
    return kFailure;
  } catch (const MissingFeatureError&) {
    return kMissingFeatures;
  } catch (const NoCheckpointsError&) {
    return kNoCheckpoints;
  } catch (const TaxonomyMismatchError&) {
    return kTaxonomyMismatch;
  } catch (const UnsupportedModeError&) {
    return kUnsupportedMode;
  } catch (const ConfigurationError&) {
    return kInvalidInput;
  } catch (const ParseError&) {
    return kInvalidInput;
  } catch (const ValidationError&) {
    return kInvalidInput;
  } catch (const TaxonomyError&) {
    return kInvalidInput;
  } catch (const ArgumentError&) {
    return kInvalidInput;
  } catch (...) {
    return kFailure;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual-stream temporal transformer for surgical video classification"};
  app.require_subcommand(1);

  SynthFlags synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset with features");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--mode", synth.mode, "content | order | dual | planted");
  synth_cmd->add_option("--classes", synth.spec.n_classes, "2, 3, 4 or 6");
  synth_cmd->add_option("--videos-per-class", synth.spec.videos_per_class);
  synth_cmd->add_option("--segments", synth.spec.segments_per_video, "Segments per video");
  synth_cmd->add_option("--min-segment", synth.spec.min_segment_s, "Shortest segment, whole seconds");
  synth_cmd->add_option("--max-segment", synth.spec.max_segment_s, "Longest segment, whole seconds");
  synth_cmd->add_option("--dim", synth.spec.feature_dim, "Feature dimension");
  synth_cmd->add_option("--noise", synth.spec.noise);
  synth_cmd->add_option("--signal", synth.spec.signal);
  synth_cmd->add_option("--seed", synth.spec.seed);
  synth_cmd->add_option("--unlabeled", synth.spec.unlabeled_videos, "Unannotated videos to add");
  synth_cmd->add_option("--unlabeled-duration", synth.spec.unlabeled_duration_s, "Seconds");

  CommonFlags split;
  auto* split_cmd = app.add_subcommand("split", "Write Monte Carlo fold files");
  add_config_flags(*split_cmd, split);
  split_cmd->add_option("--folds", split.folds, "Number of folds");
  split_cmd->add_option("--seed", split.seed, "Split seed");

  CommonFlags train;
  auto* train_cmd = app.add_subcommand("train", "Train and test one checkpoint per fold");
  add_run_flags(*train_cmd, train);

  CommonFlags evaluate;
  auto* eval_cmd = app.add_subcommand("evaluate", "Re-evaluate the checkpoints of a run");
  add_config_flags(*eval_cmd, evaluate);
  eval_cmd->add_option("--run-id", evaluate.run_id, "Run directory name under --out");
  eval_cmd->add_flag("--no-tta", evaluate.no_tta, "Evaluate without test-time augmentation");
  eval_cmd->add_flag("--plots", evaluate.plots, "Write ROC plots");

  CommonFlags ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "Run full, no_tta, no_rgb, no_flow and no_sa");
  add_run_flags(*ablate_cmd, ablate);

  InferFlags infer;
  auto* infer_cmd = app.add_subcommand("infer", "Ensemble timeline for an unlabelled video");
  add_config_flags(*infer_cmd, infer.common);
  infer_cmd->add_option("--models", infer.models, "Checkpoint files or run directories")->required();
  infer_cmd->add_option("--video", infer.video, "Video id in the media index")->required();
  infer_cmd->add_option("--threshold", infer.common.threshold, "Entropy gate in nats");
  infer_cmd->add_flag("--no-tta", infer.common.no_tta, "Predict from offset 0 only");
  infer_cmd->add_flag("--plots", infer.common.plots, "Write a timeline SVG");

  ExplainFlags expl;
  auto* explain_cmd = app.add_subcommand("explain", "Temporal attention for one segment");
  add_config_flags(*explain_cmd, expl.common);
  explain_cmd->add_option("--checkpoint", expl.checkpoint)->required();
  explain_cmd->add_option("--video", expl.video)->required();
  explain_cmd->add_option("--start", expl.start_s, "Segment start in seconds")->required();
  explain_cmd->add_option("--end", expl.end_s, "Segment end in seconds")->required();
  explain_cmd->add_option("--attention", expl.attention, "rollout | final_layer");
  explain_cmd->add_flag("--plots", expl.common.plots, "Write a PGM attention strip");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInvalidInput;
  }

  try {
    if (*synth_cmd) return cmd_synth(synth, out);
    if (*split_cmd) return cmd_split(split, out);
    if (*train_cmd) return cmd_train(train, out);
    if (*eval_cmd) return cmd_evaluate(evaluate, out);
    if (*ablate_cmd) return cmd_ablate(ablate, out);
    if (*infer_cmd) return cmd_infer(infer, out);
    if (*explain_cmd) return cmd_explain(expl, out);
  } catch (...) {
    const auto error = std::current_exception();
    report_error(error, err);
    return exit_code_for(error);
  }
  return kFailure;
}

}  // namespace dualstream::cli
