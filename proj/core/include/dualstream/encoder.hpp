#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace dualstream {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// A named view of one parameter tensor, used for serialization, SGD and
/// finite-difference checks without per-field boilerplate.
struct TensorRef {
  std::string name;
  double* data = nullptr;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  Eigen::Index size() const { return rows * cols; }
};

struct EncoderConfig {
  int dim = 384;
  int heads = 6;
  int layers = 4;
  int ff_dim = 0;  // 0 means 4 * dim
  int max_frames = 64;
  double layer_norm_eps = 1e-5;

  int feed_forward_dim() const { return ff_dim > 0 ? ff_dim : 4 * dim; }
  void validate() const;
};

enum class EncodingMode { self_attention, mean_pool };

/// Pre-norm transformer layer: x += MHA(LN1(x)); x += FFN(LN2(x)).
/// Token rows, so every affine map is x * W + b with W stored in x out.
struct EncoderLayer {
  VectorXd ln1_gamma, ln1_beta;
  MatrixXd wq, wk, wv, wo;
  VectorXd bq, bk, bv, bo;
  VectorXd ln2_gamma, ln2_beta;
  MatrixXd w1, w2;
  VectorXd b1, b2;
};

/// Shared by both modalities: one parameter set encodes RGB and flow.
struct TemporalEncoderParams {
  EncoderConfig config;
  VectorXd cls;        // D
  MatrixXd positional;  // max_frames x D
  std::vector<EncoderLayer> layers;
  VectorXd final_gamma, final_beta;

  static TemporalEncoderParams zeros(const EncoderConfig& config);
  /// CLS and positions ~ N(0, 0.02^2), weights ~ U(+-1/sqrt(fan_in)), biases 0,
  /// norm gains 1.
  static TemporalEncoderParams initialize(const EncoderConfig& config, std::mt19937_64& rng);

  std::vector<TensorRef> tensors();
};

/// Two affine maps with a ReLU after the first: D -> hidden -> E.
struct ProjectionHeadParams {
  MatrixXd w1;  // D x hidden
  VectorXd b1;
  MatrixXd w2;  // hidden x E
  VectorXd b2;

  static ProjectionHeadParams zeros(int in_dim, int hidden_dim, int out_dim);
  static ProjectionHeadParams initialize(int in_dim, int hidden_dim, int out_dim,
                                         std::mt19937_64& rng);
  int in_dim() const { return static_cast<int>(w1.rows()); }
  int out_dim() const { return static_cast<int>(w2.cols()); }

  std::vector<TensorRef> tensors();
};

struct LayerNormCache {
  MatrixXd normalized;  // x_hat before the affine gain
  VectorXd inv_std;
};

struct LayerCache {
  MatrixXd input;
  LayerNormCache ln1;
  MatrixXd xn1, q, k, v;
  std::vector<MatrixXd> attention;  // per head, S x S, rows sum to 1
  MatrixXd heads_out;
  MatrixXd mid;
  LayerNormCache ln2;
  MatrixXd xn2, pre_activation, activation;
};

/// Everything the backward pass needs from one forward pass.
struct EncoderTrace {
  EncodingMode mode = EncodingMode::self_attention;
  Eigen::Index frames = 0;
  std::vector<LayerCache> layers;
  LayerNormCache final_ln;  // CLS row only
};

/// h_cls for one modality. self_attention: prepend CLS, add positions, run the
/// layers, return the normalized CLS row. mean_pool: plain row mean.
VectorXd encode_modality(const MatrixXd& frames, const TemporalEncoderParams& params,
                         EncodingMode mode, EncoderTrace* trace = nullptr);

/// Accumulates dL/dparams into `grads` given dL/dh_cls.
void encode_modality_backward(const VectorXd& grad_h, const TemporalEncoderParams& params,
                              const EncoderTrace& trace, TemporalEncoderParams& grads);

/// Which attention maps describe "where the encoder looked".
enum class AttentionSource {
  rollout,      // head-averaged maps of every layer composed with the residual path
  final_layer,  // head-averaged map of the last layer only
};

std::string_view to_string(AttentionSource source);
AttentionSource parse_attention_source(std::string_view name);

/// Attention from the CLS token to each frame, averaged over heads and
/// renormalized over frame positions. Throws UnsupportedModeError for
/// mean_pool.
VectorXd extract_temporal_attention(const MatrixXd& frames, const TemporalEncoderParams& params,
                                    EncodingMode mode = EncodingMode::self_attention,
                                    AttentionSource source = AttentionSource::rollout);

enum class Aggregation { both, rgb_only, flow_only };

/// h_agg = h_rgb + h_flow, or one of them alone for modality ablations.
VectorXd aggregate(const VectorXd& h_rgb, const VectorXd& h_flow, Aggregation mode);

struct ProjectionTrace {
  VectorXd input;
  VectorXd pre_activation;
  VectorXd hidden;
};

VectorXd project(const VectorXd& h_agg, const ProjectionHeadParams& head,
                 ProjectionTrace* trace = nullptr);
/// Accumulates head gradients and returns dL/dh_agg.
VectorXd project_backward(const VectorXd& grad_out, const ProjectionHeadParams& head,
                          const ProjectionTrace& trace, ProjectionHeadParams& grads);

}  // namespace dualstream
