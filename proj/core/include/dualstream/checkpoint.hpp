#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dualstream/datamodel.hpp"
#include "dualstream/model.hpp"
#include "dualstream/sampling.hpp"

namespace dualstream {

struct TrainConfig {
  int batch_size = 8;
  double learning_rate = 0.1;
  int epochs = 30;
  std::uint64_t seed = 0;
  Ablation ablation = Ablation::full;
  ModelConfig model;
  SamplingConfig sampling;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss_sum = 0.0;   // summed over every training item
  double train_loss_mean = 0.0;  // per item
  std::optional<double> val_macro_auc;
};

struct ModelCheckpoint {
  static constexpr std::uint32_t kVersion = 1;

  TemporalModel model;
  TrainConfig config;
  TaskKind task_kind = TaskKind::subphase;
  int fold_id = 0;
  int best_epoch = -1;  // -1: initial parameters
  std::vector<EpochRecord> history;

  /// Computation modes actually used, derived from the recorded ablation.
  ModelOptions options() const { return model_options(config.ablation); }
  bool uses_tta() const { return dualstream::uses_tta(config.ablation); }
};

/// Binary blob: magic "RFCK", u32 version, u32 header length, JSON header
/// (config, taxonomy, fold, history, tensor table), then every tensor as
/// little-endian float64 in header order.
void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);
std::vector<unsigned char> serialize_checkpoint(const ModelCheckpoint& checkpoint);
ModelCheckpoint deserialize_checkpoint(const std::vector<unsigned char>& bytes);

}  // namespace dualstream
