#pragma once

// nlohmann::json bindings for the configuration and record types.

#include <nlohmann/json.hpp>

#include "dualstream/checkpoint.hpp"
#include "dualstream/datamodel.hpp"
#include "dualstream/features.hpp"

namespace dualstream {

void to_json(nlohmann::json& j, const SamplingConfig& c);
void from_json(const nlohmann::json& j, SamplingConfig& c);
void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const FeatureExtractorConfig& c);
void from_json(const nlohmann::json& j, FeatureExtractorConfig& c);
void to_json(nlohmann::json& j, const EpochRecord& r);
void from_json(const nlohmann::json& j, EpochRecord& r);

}  // namespace dualstream
