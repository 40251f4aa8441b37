#include "dualstream_cli/run_config.hpp"

#include <cstdlib>
#include <fstream>

#include "dualstream/error.hpp"
#include "dualstream/json.hpp"

namespace dualstream::cli {

void RunConfig::validate() const {
  if (n_folds < 1) throw ConfigurationError("n_folds must be at least 1");
  if (threshold && !(*threshold >= 0.0)) throw ConfigurationError("threshold must be >= 0");
  train.validate();
  extractor.validate();
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"task", std::string(to_string(c.task))},
       {"manifest", c.manifest.string()},
       {"features", c.features.string()},
       {"out", c.out.string()},
       {"n_folds", c.n_folds},
       {"threshold", c.threshold ? nlohmann::json(*c.threshold) : nlohmann::json(nullptr)},
       {"train", c.train},
       {"extractor", c.extractor}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  if (j.contains("task")) c.task = parse_task_kind(j.at("task").get<std::string>());
  c.manifest = j.value("manifest", c.manifest.string());
  c.features = j.value("features", c.features.string());
  c.out = j.value("out", c.out.string());
  c.n_folds = j.value("n_folds", c.n_folds);
  if (j.contains("threshold") && !j.at("threshold").is_null()) {
    c.threshold = j.at("threshold").get<double>();
  }
  if (j.contains("train")) from_json(j.at("train"), c.train);
  if (j.contains("extractor")) from_json(j.at("extractor"), c.extractor);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open config " + path.string());
  try {
    return nlohmann::json::parse(in).get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

void save_run_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write " + path.string());
  out << nlohmann::json(config).dump(2) << "\n";
}

std::filesystem::path resolve_feature_dir(const RunConfig& config) {
  if (!config.features.empty()) return config.features;
  if (const char* cache = std::getenv("ROBOFLOW_CACHE"); cache != nullptr && *cache != '\0') {
    return cache;
  }
  return {};
}

}  // namespace dualstream::cli
