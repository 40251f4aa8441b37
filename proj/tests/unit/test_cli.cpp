#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "dualstream/checkpoint.hpp"
#include "dualstream/error.hpp"
#include "dualstream_cli/cli.hpp"
#include "dualstream_cli/run_config.hpp"
#include "test_support.hpp"

namespace dualstream::cli {
namespace {

namespace fs = std::filesystem;
using dualstream::testing::TempDir;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "dualstream");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Every regular file below `root`, keyed by relative path.
std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return files;
}

void synth(const fs::path& dir, std::vector<std::string> extra = {}) {
  std::vector<std::string> args{"synth", "--out", dir.string(), "--seed", "3"};
  args.insert(args.end(), extra.begin(), extra.end());
  if (std::find(extra.begin(), extra.end(), "--dim") == extra.end()) {
    args.insert(args.end(), {"--dim", "16"});
  }
  const auto r = invoke(args);
  ASSERT_EQ(r.code, 0) << r.err;
}

void set_ablation(const fs::path& config, const std::string& ablation) {
  auto doc = nlohmann::json::parse(slurp(config));
  doc["train"]["ablation"] = ablation;
  std::ofstream(config) << doc.dump(2);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(invoke({}).code, kInvalidInput);
  EXPECT_EQ(invoke({"frobnicate"}).code, kInvalidInput);
  EXPECT_EQ(invoke({"train", "--jobs", "0"}).code, kInvalidInput);
  EXPECT_EQ(invoke({"split", "--task", "origami"}).code, kInvalidInput);
  EXPECT_EQ(invoke({"split", "--manifest", "/nonexistent/a.csv"}).code, kInvalidInput);
  EXPECT_EQ(invoke({"--help"}).code, kOk);
}

TEST(Cli, SplitWritesFoldFilesDeterministically) {
  TempDir dir("cli_split");
  synth(dir.path() / "data", {"--videos-per-class", "6"});
  const auto cfg = (dir.path() / "data" / "config.json").string();
  for (const char* out : {"a", "b"}) {
    const auto r = invoke({"split", "--config", cfg, "--out", (dir.path() / out).string(), "--seed", "9"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  const auto a = tree(dir.path() / "a");
  EXPECT_EQ(a.size(), 10u);
  for (int k = 0; k < 10; ++k) EXPECT_EQ(a.count("fold" + std::to_string(k) + ".json"), 1u);
  EXPECT_EQ(a, tree(dir.path() / "b"));
  const auto fold = fold_from_json(a.at("fold3.json"));
  EXPECT_EQ(fold.fold_id, 3);
  EXPECT_EQ(fold.test_video_ids.size() + fold.val_video_ids.size() + fold.train_video_ids.size(), 12u);
}

TEST(Cli, TooFewVideosIsAConfigurationError) {
  TempDir dir("cli_few");
  synth(dir.path(), {"--classes", "3", "--videos-per-class", "1"});
  const auto r = invoke({"split", "--config", (dir.path() / "config.json").string()});
  EXPECT_EQ(r.code, kInvalidInput);
  EXPECT_NE(r.err.find("error"), std::string::npos);
}

TEST(Cli, EvaluateWithoutCheckpointsExitsFour) {
  TempDir dir("cli_eval");
  synth(dir.path(), {"--videos-per-class", "6"});
  const auto r = invoke({"evaluate", "--config", (dir.path() / "config.json").string(), "--run-id", "none"});
  EXPECT_EQ(r.code, kNoCheckpoints);
}

TEST(Cli, MissingFeaturesExitThreeWithList) {
  TempDir dir("cli_missing");
  synth(dir.path(), {"--videos-per-class", "6"});
  fs::remove(dir.path() / "features" / "v000.flow.rffs");
  fs::remove(dir.path() / "features" / "v000.flow.json");
  const auto r = invoke({"train", "--config", (dir.path() / "config.json").string(), "--folds", "2",
                         "--epochs", "1"});
  EXPECT_EQ(r.code, kMissingFeatures);
  EXPECT_NE(r.err.find("missing v000 flow"), std::string::npos) << r.err;
  // Nothing was trained.
  EXPECT_FALSE(fs::exists(dir.path() / "runs" / "full" / "fold0" / "checkpoint.bin"));
}

class TrainedRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli_run");
    synth(dir_->path(), {"--videos-per-class", "6", "--unlabeled", "1"});
    config_ = (dir_->path() / "config.json").string();
    for (const char* id : {"first", "second"}) {
      const auto r = invoke({"train", "--config", config_, "--folds", "2", "--epochs", "2",
                             "--run-id", id, "--jobs", "2", "--plots"});
      ASSERT_EQ(r.code, 0) << r.err;
    }
  }
  static void TearDownTestSuite() { delete dir_; }

  static fs::path runs() { return dir_->path() / "runs"; }

  static TempDir* dir_;
  static std::string config_;
};

TempDir* TrainedRun::dir_ = nullptr;
std::string TrainedRun::config_;

TEST_F(TrainedRun, LayoutAndDeterminism) {
  const auto first = tree(runs() / "first");
  for (const char* f : {"summary.json", "config.json", "fold0.json", "fold1.json", "roc.svg",
                        "fold0/checkpoint.bin", "fold0/split.json", "fold0/train_log.jsonl"}) {
    EXPECT_EQ(first.count(f), 1u) << f;
  }
  EXPECT_EQ(first, tree(runs() / "second"));
  const auto summary = nlohmann::json::parse(first.at("summary.json"));
  EXPECT_EQ(summary.at("folds").size(), 2u);
  std::istringstream log(first.at("fold1/train_log.jsonl"));
  int lines = 0;
  for (std::string line; std::getline(log, line); ++lines) {
    const auto rec = nlohmann::json::parse(line);
    EXPECT_EQ(rec.at("epoch"), lines);
    EXPECT_TRUE(rec.contains("train_loss_mean"));
    EXPECT_TRUE(rec.contains("val_macro_auc"));
  }
  EXPECT_EQ(lines, 2);
}

TEST_F(TrainedRun, EvaluateReloadsCheckpoints) {
  auto r = invoke({"evaluate", "--config", config_, "--run-id", "first"});
  ASSERT_EQ(r.code, 0) << r.err;
  // Same checkpoints and data: evaluation reproduces the training-time report.
  EXPECT_EQ(slurp(runs() / "first" / "eval" / "fold0.json"), slurp(runs() / "first" / "fold0.json"));
  r = invoke({"evaluate", "--config", config_, "--run-id", "first", "--no-tta"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = nlohmann::json::parse(slurp(runs() / "first" / "eval_no_tta" / "fold0.json"));
  EXPECT_EQ(doc.at("tta"), false);
}

TEST_F(TrainedRun, InferWritesOneRowPerSecond) {
  const auto out = dir_->path() / "infer";
  auto r = invoke({"infer", "--config", config_, "--models", (runs() / "first").string(), "--video",
                   "u000", "--out", out.string(), "--plots"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto doc = nlohmann::json::parse(slurp(out / "u000.timeline.json"));
  ASSERT_EQ(doc.at("intervals").size(), 120u);
  EXPECT_EQ(doc["intervals"][119].at("start_s"), 119.0);
  EXPECT_TRUE(fs::exists(out / "u000.timeline.svg"));

  r = invoke({"infer", "--config", config_, "--models", (runs() / "first").string(), "--video",
              "u000", "--out", out.string(), "--threshold", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  doc = nlohmann::json::parse(slurp(out / "u000.timeline.json"));
  for (const auto& row : doc.at("intervals")) {
    EXPECT_EQ(row.at("predicted").is_null(), row.at("entropy").get<double>() != 0.0);
  }

  r = invoke({"infer", "--config", config_, "--models", (dir_->path() / "nope.bin").string(),
              "--video", "u000"});
  EXPECT_EQ(r.code, kNoCheckpoints);
}

TEST_F(TrainedRun, MixedTaxonomiesExitFive) {
  TempDir other("cli_other");
  synth(other.path(), {"--classes", "3", "--videos-per-class", "4"});
  auto r = invoke({"train", "--config", (other.path() / "config.json").string(), "--folds", "1",
                   "--epochs", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  r = invoke({"infer", "--config", config_, "--models", (runs() / "first").string(),
              (other.path() / "runs" / "full" / "fold0" / "checkpoint.bin").string(), "--video", "u000"});
  EXPECT_EQ(r.code, kTaxonomyMismatch) << r.err;
}

TEST_F(TrainedRun, ExplainWritesWeights) {
  const auto out = dir_->path() / "explain";
  const auto r = invoke({"explain", "--config", config_, "--checkpoint",
                         (runs() / "first" / "fold0" / "checkpoint.bin").string(), "--video", "u000",
                         "--start", "10", "--end", "14", "--out", out.string(), "--plots"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = nlohmann::json::parse(slurp(out / "u000_10.000_14.000.explain.json"));
  double sum = 0.0;
  for (const auto& w : doc.at("weights")) sum += w.get<double>();
  EXPECT_NEAR(sum, 1.0, 1e-6);
  EXPECT_EQ(doc.at("weights").size(), doc.at("timestamps").size());
  EXPECT_TRUE(fs::exists(out / "u000_10.000_14.000.attention.pgm"));
  EXPECT_EQ(invoke({"explain", "--config", config_, "--checkpoint",
                    (runs() / "first" / "fold0" / "checkpoint.bin").string(), "--video", "u000",
                    "--start", "10", "--end", "14", "--attention", "gradcam"})
                .code,
            kInvalidInput);
}

TEST(Cli, ExplainOnMeanPoolCheckpointExitsSix) {
  TempDir dir("cli_nosa");
  synth(dir.path(), {"--videos-per-class", "6", "--unlabeled", "1"});
  const auto cfg = dir.path() / "config.json";
  set_ablation(cfg, "no_sa");
  auto r = invoke({"train", "--config", cfg.string(), "--folds", "1", "--epochs", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  r = invoke({"explain", "--config", cfg.string(), "--checkpoint",
              (dir.path() / "runs" / "no_sa" / "fold0" / "checkpoint.bin").string(), "--video", "u000",
              "--start", "0", "--end", "3"});
  EXPECT_EQ(r.code, kUnsupportedMode);
}

TEST(Cli, AblateOnOrderDataRanksSelfAttentionFirst) {
  TempDir dir("cli_ablate");
  synth(dir.path(), {"--mode", "order", "--videos-per-class", "8", "--segments", "6", "--dim", "32"});
  const auto cfg = (dir.path() / "config.json").string();
  const auto r = invoke({"ablate", "--config", cfg, "--folds", "2", "--epochs", "20", "--jobs", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto table = nlohmann::json::parse(slurp(dir.path() / "runs" / "ablate" / "ablation.json"));
  ASSERT_EQ(table.size(), 5u);
  std::map<std::string, double> delta;
  for (const auto& row : table) delta[row.at("setting")] = row.at("delta_auc").get<double>();
  EXPECT_EQ(delta.at("full"), 0.0);
  for (const auto& [name, d] : delta) {
    if (name != "no_sa") EXPECT_LT(delta.at("no_sa"), d) << name;
  }
  EXPECT_TRUE(fs::exists(dir.path() / "runs" / "ablate" / "ablation.csv"));
}

TEST(RunConfig, RoundTripsThroughJson) {
  TempDir dir("cli_cfg");
  RunConfig c;
  c.task = TaskKind::dissection_gesture;
  c.manifest = "/data/a.csv";
  c.features = "/data/f";
  c.out = "/tmp/out";
  c.n_folds = 7;
  c.threshold = 0.25;
  c.train.learning_rate = 0.03;
  c.train.seed = 123456789012345ULL;
  c.train.ablation = Ablation::no_flow;
  c.train.sampling.tta_offsets_frames = {0, 2, 5};
  c.train.model.temperature = 0.5;
  c.extractor.backend = ExtractorBackend::mock;
  save_run_config(c, dir.path() / "c.json");
  const auto back = load_run_config(dir.path() / "c.json");
  save_run_config(back, dir.path() / "d.json");
  EXPECT_EQ(slurp(dir.path() / "c.json"), slurp(dir.path() / "d.json"));
  EXPECT_EQ(back.train.seed, c.train.seed);
  EXPECT_EQ(back.threshold, 0.25);
  EXPECT_EQ(back.train.sampling.tta_offsets_frames, c.train.sampling.tta_offsets_frames);

  std::ofstream(dir.path() / "bad.json") << "{ not json";
  EXPECT_THROW(load_run_config(dir.path() / "bad.json"), ParseError);
  EXPECT_THROW(load_run_config(dir.path() / "absent.json"), ConfigurationError);
}

TEST(RunConfig, FeatureDirFallsBackToEnvironment) {
  RunConfig c;
  ::setenv("ROBOFLOW_CACHE", "/cache/root", 1);
  EXPECT_EQ(resolve_feature_dir(c), fs::path("/cache/root"));
  c.features = "/explicit";
  EXPECT_EQ(resolve_feature_dir(c), fs::path("/explicit"));
  ::unsetenv("ROBOFLOW_CACHE");
  c.features.clear();
  EXPECT_TRUE(resolve_feature_dir(c).empty());
}

TEST(ExitCodes, Mapping) {
  auto code = [](auto e) { return exit_code_for(std::make_exception_ptr(e)); };
  EXPECT_EQ(code(ConfigurationError("x")), kInvalidInput);
  EXPECT_EQ(code(TaxonomyMismatchError("x")), kTaxonomyMismatch);
  EXPECT_EQ(code(MissingFeatureError({})), kMissingFeatures);
  EXPECT_EQ(code(NoCheckpointsError("x")), kNoCheckpoints);
  EXPECT_EQ(code(UnsupportedModeError("x")), kUnsupportedMode);
  EXPECT_EQ(code(std::runtime_error("x")), kFailure);
  try {
    try {
      throw MissingFeatureError({});
    } catch (...) {
      std::throw_with_nested(FoldError(2, "wrapped"));
    }
  } catch (...) {
    EXPECT_EQ(exit_code_for(std::current_exception()), kMissingFeatures);
  }
}

}  // namespace
}  // namespace dualstream::cli
