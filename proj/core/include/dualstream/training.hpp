#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "dualstream/checkpoint.hpp"
#include "dualstream/datamodel.hpp"
#include "dualstream/features.hpp"
#include "dualstream/inference.hpp"
#include "dualstream/metrics.hpp"

namespace dualstream {

/// Called after every epoch, e.g. to append a JSON-lines log.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch SGD on the summed InfoNCE loss over the fold's training
/// segments, sampled at offset 0. After each epoch the offset-0 validation
/// macro AUC is computed; the returned checkpoint holds the parameters of the
/// best epoch (earliest on ties, -1 for the initial parameters). Every feature
/// lookup is checked before the first step.
ModelCheckpoint train_fold(const DatasetManifest& manifest, const FeatureProvider& provider,
                           const FoldSplit& fold, TaskKind kind, const TrainConfig& config,
                           const EpochCallback& on_epoch = {});

/// Throws MissingFeatureError listing every lookup the given videos' segments
/// would make (all TTA variants included) that the provider cannot serve.
void require_features(const DatasetManifest& manifest, const FeatureProvider& provider,
                      const std::vector<std::string>& video_ids, TaskKind kind,
                      const SamplingConfig& sampling);

struct FoldResult {
  FoldSplit split;
  ModelCheckpoint checkpoint;
  SegmentScores test_scores;
  EvaluationReport test;
  bool used_tta = false;
};

struct CrossValidationResult {
  std::vector<FoldResult> folds;
  FoldSummary macro_auc;  // over folds with a defined value
  FoldSummary macro_ppv;
};

struct CrossValidationOptions {
  int jobs = 1;  // folds trained concurrently
  /// Fold id -> per-epoch callback; may be empty.
  std::function<EpochCallback(int)> epoch_callback;
};

/// Trains one checkpoint per split and evaluates it on that split's test
/// videos, with TTA unless the ablation disables it. A failing fold raises
/// FoldError with the original exception nested.
CrossValidationResult run_cross_validation(const DatasetManifest& manifest,
                                           const FeatureProvider& provider, TaskKind kind,
                                           const std::vector<FoldSplit>& splits,
                                           const TrainConfig& config,
                                           const CrossValidationOptions& options = {});

/// Draws `n_folds` Monte Carlo splits from `config.seed` and runs them.
CrossValidationResult run_cross_validation(const DatasetManifest& manifest,
                                           const FeatureProvider& provider, TaskKind kind,
                                           int n_folds, const TrainConfig& config,
                                           const CrossValidationOptions& options = {});

/// Test-set evaluation of an existing checkpoint, with the checkpoint's own
/// TTA setting unless `use_tta` overrides it.
FoldResult evaluate_fold(const DatasetManifest& manifest, const FeatureProvider& provider,
                         const FoldSplit& split, ModelCheckpoint checkpoint,
                         std::optional<bool> use_tta = std::nullopt);

FoldSummary summarize(std::span<const std::optional<double>> values);

}  // namespace dualstream
