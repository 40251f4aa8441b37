#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "dualstream/checkpoint.hpp"
#include "dualstream/datamodel.hpp"
#include "dualstream/features.hpp"

namespace dualstream::cli {

/// Everything a run needs, stored as one JSON file and overridable by flags.
struct RunConfig {
  TaskKind task = TaskKind::suturing_gesture;
  std::filesystem::path manifest;  // annotation CSV; media_index.json sits beside it
  std::filesystem::path features;  // feature store directory
  std::filesystem::path out = "runs";
  int n_folds = 10;
  std::optional<double> threshold;  // entropy gate; 0.5 ln C when unset
  TrainConfig train;
  FeatureExtractorConfig extractor;

  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& config, const std::filesystem::path& path);

/// Feature directory from the config, else $ROBOFLOW_CACHE, else empty.
std::filesystem::path resolve_feature_dir(const RunConfig& config);

}  // namespace dualstream::cli
