#include "dualstream/model.hpp"

#include <random>

#include "dualstream/error.hpp"

namespace dualstream {

std::string_view to_string(Ablation ablation) {
  switch (ablation) {
    case Ablation::full: return "full";
    case Ablation::no_tta: return "no_tta";
    case Ablation::no_rgb: return "no_rgb";
    case Ablation::no_flow: return "no_flow";
    case Ablation::no_sa: return "no_sa";
  }
  return "unknown";
}

Ablation parse_ablation(std::string_view name) {
  for (auto a : {Ablation::full, Ablation::no_tta, Ablation::no_rgb, Ablation::no_flow,
                 Ablation::no_sa}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigurationError("unknown ablation '" + std::string(name) + "'");
}

std::string_view to_string(EncodingMode mode) {
  return mode == EncodingMode::self_attention ? "self_attention" : "mean_pool";
}

std::string_view to_string(Aggregation mode) {
  switch (mode) {
    case Aggregation::both: return "both";
    case Aggregation::rgb_only: return "rgb_only";
    case Aggregation::flow_only: return "flow_only";
  }
  return "unknown";
}

EncodingMode encoding_mode(Ablation ablation) {
  return ablation == Ablation::no_sa ? EncodingMode::mean_pool : EncodingMode::self_attention;
}

Aggregation aggregation_mode(Ablation ablation) {
  if (ablation == Ablation::no_rgb) return Aggregation::flow_only;
  if (ablation == Ablation::no_flow) return Aggregation::rgb_only;
  return Aggregation::both;
}

bool uses_tta(Ablation ablation) { return ablation != Ablation::no_tta; }

ModelOptions model_options(Ablation ablation) {
  return {encoding_mode(ablation), aggregation_mode(ablation)};
}

void ModelConfig::validate() const {
  encoder.validate();
  if (embed_dim < 1) throw ConfigurationError("embed_dim must be positive");
  if (head_hidden_dim < 0) throw ConfigurationError("head_hidden_dim must be non-negative");
  if (!(temperature > 0.0)) throw ConfigurationError("temperature must be positive");
}

TemporalModel TemporalModel::initialize(const ModelConfig& config,
                                        std::vector<std::string> categories, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  TemporalModel model;
  model.config = config;
  model.encoder = TemporalEncoderParams::initialize(config.encoder, rng);
  model.head = ProjectionHeadParams::initialize(config.encoder.dim, config.hidden_dim(),
                                                config.embed_dim, rng);
  model.bank = PrototypeBank::initialize(std::move(categories), config.embed_dim, rng);
  return model;
}

TemporalModel TemporalModel::zeros_like() const {
  TemporalModel z;
  z.config = config;
  z.encoder = TemporalEncoderParams::zeros(config.encoder);
  z.head = ProjectionHeadParams::zeros(config.encoder.dim, config.hidden_dim(), config.embed_dim);
  z.bank.categories = bank.categories;
  z.bank.prototypes = MatrixXd::Zero(bank.prototypes.rows(), bank.prototypes.cols());
  return z;
}

std::vector<TensorRef> TemporalModel::tensors() {
  auto out = encoder.tensors();
  for (auto& t : head.tensors()) out.push_back(std::move(t));
  out.push_back({"prototypes", bank.prototypes.data(), bank.prototypes.rows(),
                 bank.prototypes.cols()});
  return out;
}

std::size_t TemporalModel::parameter_count() {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += static_cast<std::size_t>(t.size());
  return n;
}

VectorXd forward(const TemporalModel& model, const ModelInput& input, const ModelOptions& options,
                 ForwardTrace* trace) {
  ForwardTrace local;
  ForwardTrace& tr = trace != nullptr ? *trace : local;
  const bool need_rgb = options.aggregation != Aggregation::flow_only;
  const bool need_flow = options.aggregation != Aggregation::rgb_only;
  const auto dim = model.config.encoder.dim;
  tr.h_rgb = need_rgb ? encode_modality(input.rgb, model.encoder, options.encoding, &tr.rgb)
                      : VectorXd::Zero(dim);
  tr.h_flow = need_flow ? encode_modality(input.flow, model.encoder, options.encoding, &tr.flow)
                        : VectorXd::Zero(dim);
  tr.h_agg = aggregate(tr.h_rgb, tr.h_flow, options.aggregation);
  tr.h_video = project(tr.h_agg, model.head, &tr.head);
  return tr.h_video;
}

void backward(const TemporalModel& model, const ModelOptions& options, const ForwardTrace& trace,
              const VectorXd& grad_h_video, TemporalModel& grads) {
  const VectorXd grad_agg = project_backward(grad_h_video, model.head, trace.head, grads.head);
  // h_agg is a plain sum, so each active stream receives grad_agg unchanged.
  if (options.aggregation != Aggregation::flow_only) {
    encode_modality_backward(grad_agg, model.encoder, trace.rgb, grads.encoder);
  }
  if (options.aggregation != Aggregation::rgb_only) {
    encode_modality_backward(grad_agg, model.encoder, trace.flow, grads.encoder);
  }
}

BatchLoss loss_and_gradients(const TemporalModel& model, const ModelOptions& options,
                             std::span<const ModelInput> inputs,
                             std::span<const std::size_t> labels, TemporalModel* grads) {
  if (inputs.size() != labels.size()) throw ArgumentError("inputs and labels differ in length");
  std::vector<ForwardTrace> traces(inputs.size());
  std::vector<VectorXd> h(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    h[i] = forward(model, inputs[i], options, &traces[i]);
  }
  const auto nce =
      infonce_loss(h, labels, model.bank, model.config.temperature, grads != nullptr);
  if (grads != nullptr) {
    grads->bank.prototypes += nce.grad_prototypes;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      backward(model, options, traces[i], nce.grad_h[i], *grads);
    }
  }
  return {nce.loss, inputs.size()};
}

void sgd_step(TemporalModel& model, TemporalModel& grads, double learning_rate) {
  auto params = model.tensors();
  auto g = grads.tensors();
  if (params.size() != g.size()) throw ArgumentError("gradient layout does not match the model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != g[i].size()) throw ArgumentError("gradient shape mismatch at " + params[i].name);
    for (Eigen::Index k = 0; k < params[i].size(); ++k) {
      params[i].data[k] -= learning_rate * g[i].data[k];
    }
  }
}

}  // namespace dualstream
