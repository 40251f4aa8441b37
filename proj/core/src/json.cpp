#include "dualstream/json.hpp"

#include "dualstream/error.hpp"

namespace dualstream {

namespace {

std::string_view to_string(ExtractorBackend backend) {
  switch (backend) {
    case ExtractorBackend::precomputed: return "precomputed";
    case ExtractorBackend::mock: return "mock";
    case ExtractorBackend::external: return "external";
  }
  return "unknown";
}

ExtractorBackend parse_backend(std::string_view name) {
  for (auto b : {ExtractorBackend::precomputed, ExtractorBackend::mock, ExtractorBackend::external}) {
    if (to_string(b) == name) return b;
  }
  throw ConfigurationError("unknown extractor backend '" + std::string(name) + "'");
}

}  // namespace

// Readers start from the current value of every field so partial documents
// only override what they mention.

void to_json(nlohmann::json& j, const SamplingConfig& c) {
  j = {{"sample_fps", c.sample_fps},
       {"flow_span_s", c.flow_span_s},
       {"tta_offsets_frames", c.tta_offsets_frames},
       {"max_frames", c.max_frames}};
}

void from_json(const nlohmann::json& j, SamplingConfig& c) {
  c.sample_fps = j.value("sample_fps", c.sample_fps);
  c.flow_span_s = j.value("flow_span_s", c.flow_span_s);
  c.tta_offsets_frames = j.value("tta_offsets_frames", c.tta_offsets_frames);
  c.max_frames = j.value("max_frames", c.max_frames);
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"dim", c.dim},           {"heads", c.heads},         {"layers", c.layers},
       {"ff_dim", c.ff_dim},     {"max_frames", c.max_frames}, {"layer_norm_eps", c.layer_norm_eps}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  c.dim = j.value("dim", c.dim);
  c.heads = j.value("heads", c.heads);
  c.layers = j.value("layers", c.layers);
  c.ff_dim = j.value("ff_dim", c.ff_dim);
  c.max_frames = j.value("max_frames", c.max_frames);
  c.layer_norm_eps = j.value("layer_norm_eps", c.layer_norm_eps);
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"encoder", c.encoder},
       {"embed_dim", c.embed_dim},
       {"head_hidden_dim", c.head_hidden_dim},
       {"temperature", c.temperature}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  if (j.contains("encoder")) from_json(j.at("encoder"), c.encoder);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.head_hidden_dim = j.value("head_hidden_dim", c.head_hidden_dim);
  c.temperature = j.value("temperature", c.temperature);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"epochs", c.epochs},
       {"seed", c.seed},
       {"ablation", std::string(to_string(c.ablation))},
       {"model", c.model},
       {"sampling", c.sampling}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  if (j.contains("ablation")) c.ablation = parse_ablation(j.at("ablation").get<std::string>());
  if (j.contains("model")) from_json(j.at("model"), c.model);
  if (j.contains("sampling")) from_json(j.at("sampling"), c.sampling);
}

void to_json(nlohmann::json& j, const FeatureExtractorConfig& c) {
  j = {{"input_size", c.input_size},
       {"patch_size", c.patch_size},
       {"feature_dim", c.feature_dim},
       {"backend", std::string(to_string(c.backend))}};
}

void from_json(const nlohmann::json& j, FeatureExtractorConfig& c) {
  c.input_size = j.value("input_size", c.input_size);
  c.patch_size = j.value("patch_size", c.patch_size);
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  if (j.contains("backend")) c.backend = parse_backend(j.at("backend").get<std::string>());
}

void to_json(nlohmann::json& j, const EpochRecord& r) {
  j = {{"epoch", r.epoch},
       {"train_loss_sum", r.train_loss_sum},
       {"train_loss_mean", r.train_loss_mean},
       {"val_macro_auc", r.val_macro_auc ? nlohmann::json(*r.val_macro_auc) : nlohmann::json()}};
}

void from_json(const nlohmann::json& j, EpochRecord& r) {
  r.epoch = j.at("epoch").get<int>();
  r.train_loss_sum = j.at("train_loss_sum").get<double>();
  r.train_loss_mean = j.at("train_loss_mean").get<double>();
  const auto& auc = j.at("val_macro_auc");
  r.val_macro_auc = auc.is_null() ? std::nullopt : std::optional<double>(auc.get<double>());
}

}  // namespace dualstream
