#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dualstream/encoder.hpp"
#include "dualstream/prototypes.hpp"

namespace dualstream {

/// Training/evaluation settings for the component ablations.
enum class Ablation { full, no_tta, no_rgb, no_flow, no_sa };

std::string_view to_string(Ablation ablation);
Ablation parse_ablation(std::string_view name);
std::string_view to_string(EncodingMode mode);
std::string_view to_string(Aggregation mode);

EncodingMode encoding_mode(Ablation ablation);
Aggregation aggregation_mode(Ablation ablation);
bool uses_tta(Ablation ablation);

struct ModelConfig {
  EncoderConfig encoder;
  int embed_dim = 256;
  int head_hidden_dim = 0;  // 0 means encoder.dim
  double temperature = 1.0;

  int hidden_dim() const { return head_hidden_dim > 0 ? head_hidden_dim : encoder.dim; }
  void validate() const;
};

/// Frame features of one sampled segment, one row per sampled timestamp.
struct ModelInput {
  MatrixXd rgb;
  MatrixXd flow;
};

/// All trainable state: shared temporal encoder, projection head, prototypes.
struct TemporalModel {
  ModelConfig config;
  TemporalEncoderParams encoder;
  ProjectionHeadParams head;
  PrototypeBank bank;

  static TemporalModel initialize(const ModelConfig& config, std::vector<std::string> categories,
                                  std::uint64_t seed);
  /// Same shapes, every entry zero; used as a gradient accumulator.
  TemporalModel zeros_like() const;

  std::vector<TensorRef> tensors();
  std::size_t parameter_count();
};

struct ForwardTrace {
  EncoderTrace rgb;
  EncoderTrace flow;
  VectorXd h_rgb;
  VectorXd h_flow;
  VectorXd h_agg;
  ProjectionTrace head;
  VectorXd h_video;
};

struct ModelOptions {
  EncodingMode encoding = EncodingMode::self_attention;
  Aggregation aggregation = Aggregation::both;
};

ModelOptions model_options(Ablation ablation);

/// h_Video for one input. Streams excluded by the aggregation are not encoded.
VectorXd forward(const TemporalModel& model, const ModelInput& input, const ModelOptions& options,
                 ForwardTrace* trace = nullptr);

/// Accumulates dL/dparams (encoder and head) into `grads` given dL/dh_Video.
void backward(const TemporalModel& model, const ModelOptions& options, const ForwardTrace& trace,
              const VectorXd& grad_h_video, TemporalModel& grads);

struct BatchLoss {
  double loss_sum = 0.0;
  std::size_t size = 0;
};

/// Summed InfoNCE over the batch; gradients of that sum accumulate into `grads`.
BatchLoss loss_and_gradients(const TemporalModel& model, const ModelOptions& options,
                             std::span<const ModelInput> inputs,
                             std::span<const std::size_t> labels, TemporalModel* grads);

/// theta <- theta - learning_rate * grad for every tensor.
void sgd_step(TemporalModel& model, TemporalModel& grads, double learning_rate);

}  // namespace dualstream
