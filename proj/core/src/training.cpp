#include "dualstream/training.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include "dualstream/error.hpp"

namespace dualstream {

namespace {

struct Example {
  ModelInput input;
  std::size_t label = 0;
};

std::vector<LabeledSegment> segments_of(const DatasetManifest& manifest, TaskKind kind,
                                        const std::vector<std::string>& video_ids) {
  const std::set<std::string> wanted(video_ids.begin(), video_ids.end());
  std::vector<LabeledSegment> out;
  for (auto& s : labeled_segments(manifest, kind)) {
    if (wanted.count(s.video_id) != 0) out.push_back(std::move(s));
  }
  return out;
}

std::vector<Example> offset_zero_examples(const DatasetManifest& manifest,
                                          const FeatureProvider& provider,
                                          const std::vector<LabeledSegment>& segments,
                                          const SamplingConfig& sampling) {
  std::vector<Example> out;
  out.reserve(segments.size());
  for (const auto& s : segments) {
    const auto sample =
        sample_input({s.start_s, s.end_s}, manifest.media(s.video_id).fps, sampling, 0);
    out.push_back({gather_input(provider, s.video_id, sample), s.label});
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, int fold_id, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(fold_id), stream};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (std::uint64_t{words[0]} << 32) | words[1];
}

std::optional<double> validation_auc(const TemporalModel& model, const ModelOptions& options,
                                     const std::vector<Example>& val) {
  if (val.empty()) return std::nullopt;
  Eigen::MatrixXd scores(static_cast<Eigen::Index>(val.size()),
                         static_cast<Eigen::Index>(model.bank.size()));
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < val.size(); ++i) {
    scores.row(static_cast<Eigen::Index>(i)) = predict_input(model, options, val[i].input).transpose();
    labels.push_back(val[i].label);
  }
  return roc_auc_ovr(scores, labels).macro;
}

double rank_value(const std::optional<double>& auc) {
  return auc.value_or(-std::numeric_limits<double>::infinity());
}

}  // namespace

void require_features(const DatasetManifest& manifest, const FeatureProvider& provider,
                      const std::vector<std::string>& video_ids, TaskKind kind,
                      const SamplingConfig& sampling) {
  std::vector<MissingFeature> missing;
  for (const auto& s : segments_of(manifest, kind, video_ids)) {
    for (const auto& v :
         tta_variants({s.start_s, s.end_s}, manifest.media(s.video_id).fps, sampling)) {
      for (auto& m : missing_features(provider, s.video_id, v)) missing.push_back(std::move(m));
    }
  }
  if (!missing.empty()) throw MissingFeatureError(std::move(missing));
}

ModelCheckpoint train_fold(const DatasetManifest& manifest, const FeatureProvider& provider,
                           const FoldSplit& fold, TaskKind kind, const TrainConfig& config,
                           const EpochCallback& on_epoch) {
  config.validate();
  const auto& taxonomy = Taxonomy::of(kind);
  const auto train_segments = segments_of(manifest, kind, fold.train_video_ids);
  const auto val_segments = segments_of(manifest, kind, fold.val_video_ids);
  if (train_segments.empty()) {
    throw ConfigurationError("fold " + std::to_string(fold.fold_id) + " has no training segments");
  }

  std::vector<std::string> referenced = fold.train_video_ids;
  referenced.insert(referenced.end(), fold.val_video_ids.begin(), fold.val_video_ids.end());
  SamplingConfig offset_zero = config.sampling;
  offset_zero.tta_offsets_frames = {0};
  require_features(manifest, provider, referenced, kind, offset_zero);

  const auto train = offset_zero_examples(manifest, provider, train_segments, config.sampling);
  const auto val = offset_zero_examples(manifest, provider, val_segments, config.sampling);

  ModelCheckpoint ck;
  ck.config = config;
  ck.task_kind = kind;
  ck.fold_id = fold.fold_id;
  ck.model = TemporalModel::initialize(config.model, taxonomy.categories(),
                                       derive_seed(config.seed, fold.fold_id, 1));
  const auto options = ck.options();

  TemporalModel model = ck.model;
  auto best_auc = validation_auc(model, options, val);
  std::mt19937_64 order_rng(derive_seed(config.seed, fold.fold_id, 2));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batch_size = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0.0;
    int batch = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size, ++batch) {
      const auto end = std::min(order.size(), begin + batch_size);
      std::vector<ModelInput> inputs;
      std::vector<std::size_t> labels;
      for (std::size_t i = begin; i < end; ++i) {
        inputs.push_back(train[order[i]].input);
        labels.push_back(train[order[i]].label);
      }
      auto grads = model.zeros_like();
      BatchLoss loss;
      try {
        loss = loss_and_gradients(model, options, inputs, labels, &grads);
      } catch (const DegenerateVectorError& e) {
        // Parameters that overflowed show up as non-finite norms first.
        throw DivergenceError(epoch, batch, e.what());
      }
      if (!std::isfinite(loss.loss_sum)) throw DivergenceError(epoch, batch, "non-finite loss");
      sgd_step(model, grads, config.learning_rate);
      loss_sum += loss.loss_sum;
    }
    EpochRecord record{epoch, loss_sum, loss_sum / static_cast<double>(train.size()),
                       validation_auc(model, options, val)};
    ck.history.push_back(record);
    if (on_epoch) on_epoch(record);
    if (rank_value(record.val_macro_auc) > rank_value(best_auc)) {
      best_auc = record.val_macro_auc;
      ck.best_epoch = epoch;
      ck.model = model;
    }
  }
  return ck;
}

FoldSummary summarize(std::span<const std::optional<double>> values) {
  std::vector<double> defined;
  for (const auto& v : values) {
    if (v) defined.push_back(*v);
  }
  if (defined.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, nan};
  }
  return fold_summary(defined);
}

FoldResult evaluate_fold(const DatasetManifest& manifest, const FeatureProvider& provider,
                         const FoldSplit& split, ModelCheckpoint checkpoint,
                         std::optional<bool> use_tta) {
  FoldResult out;
  out.split = split;
  out.used_tta = use_tta.value_or(checkpoint.uses_tta());
  out.test_scores = score_segments(checkpoint, provider, manifest, split.test_video_ids,
                                   checkpoint.task_kind, out.used_tta);
  out.test = evaluate(out.test_scores.scores, out.test_scores.labels,
                      checkpoint.model.bank.categories);
  out.checkpoint = std::move(checkpoint);
  return out;
}

CrossValidationResult run_cross_validation(const DatasetManifest& manifest,
                                           const FeatureProvider& provider, TaskKind kind,
                                           const std::vector<FoldSplit>& splits,
                                           const TrainConfig& config,
                                           const CrossValidationOptions& options) {
  config.validate();
  if (splits.empty()) throw ArgumentError("cross-validation needs at least one split");
  std::set<std::string> videos;
  for (const auto& s : splits) {
    videos.insert(s.train_video_ids.begin(), s.train_video_ids.end());
    videos.insert(s.val_video_ids.begin(), s.val_video_ids.end());
    videos.insert(s.test_video_ids.begin(), s.test_video_ids.end());
  }
  require_features(manifest, provider, {videos.begin(), videos.end()}, kind, config.sampling);

  std::vector<std::optional<FoldResult>> results(splits.size());
  std::vector<std::exception_ptr> errors(splits.size());
  auto run = [&](std::size_t i) {
    try {
      const auto callback =
          options.epoch_callback ? options.epoch_callback(splits[i].fold_id) : EpochCallback{};
      auto ck = train_fold(manifest, provider, splits[i], kind, config, callback);
      results[i] = evaluate_fold(manifest, provider, splits[i], std::move(ck));
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  const auto jobs = static_cast<std::size_t>(std::max(1, options.jobs));
  if (jobs == 1) {
    for (std::size_t i = 0; i < splits.size(); ++i) run(i);
  } else {
    std::mutex mutex;
    std::size_t next = 0;
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < std::min(jobs, splits.size()); ++w) {
      workers.emplace_back([&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard lock(mutex);
            if (next == splits.size()) return;
            i = next++;
          }
          run(i);
        }
      });
    }
    for (auto& t : workers) t.join();
  }

  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      std::throw_with_nested(FoldError(splits[i].fold_id, e.what()));
    }
  }

  CrossValidationResult out;
  std::vector<std::optional<double>> aucs, ppvs;
  for (auto& r : results) {
    aucs.push_back(r->test.auc.macro);
    ppvs.push_back(r->test.ppv.macro);
    out.folds.push_back(std::move(*r));
  }
  out.macro_auc = summarize(aucs);
  out.macro_ppv = summarize(ppvs);
  return out;
}

CrossValidationResult run_cross_validation(const DatasetManifest& manifest,
                                           const FeatureProvider& provider, TaskKind kind,
                                           int n_folds, const TrainConfig& config,
                                           const CrossValidationOptions& options) {
  return run_cross_validation(manifest, provider, kind,
                              make_monte_carlo_splits(manifest, n_folds, config.seed), config,
                              options);
}

}  // namespace dualstream
