#include "dualstream/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dualstream/error.hpp"

namespace dualstream {

namespace {

TensorRef ref(std::string name, MatrixXd& m) { return {std::move(name), m.data(), m.rows(), m.cols()}; }
TensorRef ref(std::string name, VectorXd& v) { return {std::move(name), v.data(), v.size(), 1}; }

MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

MatrixXd layer_norm(const MatrixXd& x, const VectorXd& gamma, const VectorXd& beta, double eps,
                    LayerNormCache& cache) {
  const auto d = static_cast<double>(x.cols());
  cache.normalized.resize(x.rows(), x.cols());
  cache.inv_std.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).sum() / d;
    const auto centered = (x.row(r).array() - mean).eval();
    const double var = centered.square().sum() / d;
    const double inv = 1.0 / std::sqrt(var + eps);
    cache.inv_std(r) = inv;
    cache.normalized.row(r) = centered * inv;
  }
  MatrixXd y = cache.normalized.array().rowwise() * gamma.transpose().array();
  y.rowwise() += beta.transpose();
  return y;
}

MatrixXd layer_norm_backward(const MatrixXd& grad_y, const VectorXd& gamma,
                             const LayerNormCache& cache, VectorXd& grad_gamma,
                             VectorXd& grad_beta) {
  const auto d = static_cast<double>(grad_y.cols());
  grad_gamma += (grad_y.array() * cache.normalized.array()).colwise().sum().transpose().matrix();
  grad_beta += grad_y.colwise().sum().transpose();
  const MatrixXd grad_hat = grad_y.array().rowwise() * gamma.transpose().array();
  MatrixXd grad_x(grad_y.rows(), grad_y.cols());
  for (Eigen::Index r = 0; r < grad_y.rows(); ++r) {
    const double sum = grad_hat.row(r).sum();
    const double dot = grad_hat.row(r).dot(cache.normalized.row(r));
    grad_x.row(r) = (cache.inv_std(r) / d) *
                    (d * grad_hat.row(r).array() - sum - cache.normalized.row(r).array() * dot)
                        .matrix();
  }
  return grad_x;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }

double gelu_grad(double x) {
  const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

void softmax_rows(MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double max = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - max).exp().matrix();
    m.row(r) /= m.row(r).sum();
  }
}

void check_input(const MatrixXd& frames, const TemporalEncoderParams& params) {
  if (frames.rows() < 1) throw ArgumentError("encoder needs at least one frame");
  if (frames.rows() > params.config.max_frames) {
    throw LengthError("sequence of " + std::to_string(frames.rows()) + " frames exceeds max_frames " +
                      std::to_string(params.config.max_frames));
  }
  if (frames.cols() != params.config.dim) {
    throw ArgumentError("frame features have dim " + std::to_string(frames.cols()) +
                        ", encoder expects " + std::to_string(params.config.dim));
  }
}

MatrixXd layer_forward(const MatrixXd& x, const EncoderLayer& layer, const EncoderConfig& config,
                       LayerCache& cache) {
  const int heads = config.heads;
  const Eigen::Index dh = config.dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Eigen::Index s = x.rows();

  cache.input = x;
  cache.xn1 = layer_norm(x, layer.ln1_gamma, layer.ln1_beta, config.layer_norm_eps, cache.ln1);
  cache.q = (cache.xn1 * layer.wq).rowwise() + layer.bq.transpose();
  cache.k = (cache.xn1 * layer.wk).rowwise() + layer.bk.transpose();
  cache.v = (cache.xn1 * layer.wv).rowwise() + layer.bv.transpose();
  cache.attention.resize(static_cast<std::size_t>(heads));
  cache.heads_out.resize(s, config.dim);
  for (int h = 0; h < heads; ++h) {
    const auto q = cache.q.middleCols(h * dh, dh);
    const auto k = cache.k.middleCols(h * dh, dh);
    const auto v = cache.v.middleCols(h * dh, dh);
    MatrixXd& p = cache.attention[static_cast<std::size_t>(h)];
    p = (q * k.transpose()) * scale;
    softmax_rows(p);
    cache.heads_out.middleCols(h * dh, dh) = p * v;
  }
  cache.mid = x + ((cache.heads_out * layer.wo).rowwise() + layer.bo.transpose());

  cache.xn2 =
      layer_norm(cache.mid, layer.ln2_gamma, layer.ln2_beta, config.layer_norm_eps, cache.ln2);
  cache.pre_activation = (cache.xn2 * layer.w1).rowwise() + layer.b1.transpose();
  cache.activation = cache.pre_activation.unaryExpr(&gelu);
  return cache.mid + ((cache.activation * layer.w2).rowwise() + layer.b2.transpose());
}

MatrixXd layer_backward(const MatrixXd& grad_out, const EncoderLayer& layer,
                        const EncoderConfig& config, const LayerCache& cache, EncoderLayer& g) {
  const int heads = config.heads;
  const Eigen::Index dh = config.dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // Feed-forward branch.
  g.w2 += cache.activation.transpose() * grad_out;
  g.b2 += grad_out.colwise().sum().transpose();
  const MatrixXd grad_act = grad_out * layer.w2.transpose();
  const MatrixXd grad_pre =
      grad_act.array() * cache.pre_activation.unaryExpr(&gelu_grad).array();
  g.w1 += cache.xn2.transpose() * grad_pre;
  g.b1 += grad_pre.colwise().sum().transpose();
  const MatrixXd grad_xn2 = grad_pre * layer.w1.transpose();
  const MatrixXd grad_mid =
      grad_out + layer_norm_backward(grad_xn2, layer.ln2_gamma, cache.ln2, g.ln2_gamma, g.ln2_beta);

  // Attention branch.
  g.wo += cache.heads_out.transpose() * grad_mid;
  g.bo += grad_mid.colwise().sum().transpose();
  const MatrixXd grad_heads = grad_mid * layer.wo.transpose();
  MatrixXd grad_q(cache.q.rows(), cache.q.cols());
  MatrixXd grad_k(cache.k.rows(), cache.k.cols());
  MatrixXd grad_v(cache.v.rows(), cache.v.cols());
  for (int h = 0; h < heads; ++h) {
    const MatrixXd& p = cache.attention[static_cast<std::size_t>(h)];
    const auto grad_o = grad_heads.middleCols(h * dh, dh);
    const MatrixXd grad_p = grad_o * cache.v.middleCols(h * dh, dh).transpose();
    grad_v.middleCols(h * dh, dh) = p.transpose() * grad_o;
    const Eigen::VectorXd row_dot = (grad_p.array() * p.array()).rowwise().sum();
    const MatrixXd grad_scores = p.array() * (grad_p.colwise() - row_dot).array();
    grad_q.middleCols(h * dh, dh) = grad_scores * cache.k.middleCols(h * dh, dh) * scale;
    grad_k.middleCols(h * dh, dh) = grad_scores.transpose() * cache.q.middleCols(h * dh, dh) * scale;
  }
  g.wq += cache.xn1.transpose() * grad_q;
  g.wk += cache.xn1.transpose() * grad_k;
  g.wv += cache.xn1.transpose() * grad_v;
  g.bq += grad_q.colwise().sum().transpose();
  g.bk += grad_k.colwise().sum().transpose();
  g.bv += grad_v.colwise().sum().transpose();
  const MatrixXd grad_xn1 =
      grad_q * layer.wq.transpose() + grad_k * layer.wk.transpose() + grad_v * layer.wv.transpose();
  return grad_mid +
         layer_norm_backward(grad_xn1, layer.ln1_gamma, cache.ln1, g.ln1_gamma, g.ln1_beta);
}

}  // namespace

void EncoderConfig::validate() const {
  if (dim < 1 || heads < 1 || dim % heads != 0) {
    throw ConfigurationError("encoder dim must be a positive multiple of heads");
  }
  if (layers < 1) throw ConfigurationError("encoder needs at least one layer");
  if (max_frames < 1) throw ConfigurationError("max_frames must be at least 1");
  if (ff_dim < 0) throw ConfigurationError("ff_dim must be non-negative");
}

TemporalEncoderParams TemporalEncoderParams::zeros(const EncoderConfig& config) {
  config.validate();
  const int d = config.dim;
  const int f = config.feed_forward_dim();
  TemporalEncoderParams p;
  p.config = config;
  p.cls = VectorXd::Zero(d);
  p.positional = MatrixXd::Zero(config.max_frames, d);
  p.layers.resize(static_cast<std::size_t>(config.layers));
  for (auto& l : p.layers) {
    l.ln1_gamma = l.ln1_beta = l.ln2_gamma = l.ln2_beta = VectorXd::Zero(d);
    l.wq = l.wk = l.wv = l.wo = MatrixXd::Zero(d, d);
    l.bq = l.bk = l.bv = l.bo = VectorXd::Zero(d);
    l.w1 = MatrixXd::Zero(d, f);
    l.b1 = VectorXd::Zero(f);
    l.w2 = MatrixXd::Zero(f, d);
    l.b2 = VectorXd::Zero(d);
  }
  p.final_gamma = p.final_beta = VectorXd::Zero(d);
  return p;
}

TemporalEncoderParams TemporalEncoderParams::initialize(const EncoderConfig& config,
                                                        std::mt19937_64& rng) {
  auto p = zeros(config);
  const int d = config.dim;
  const int f = config.feed_forward_dim();
  p.cls = normal_matrix(d, 1, 0.02, rng);
  p.positional = normal_matrix(config.max_frames, d, 0.02, rng);
  const double bound_d = 1.0 / std::sqrt(static_cast<double>(d));
  const double bound_f = 1.0 / std::sqrt(static_cast<double>(f));
  for (auto& l : p.layers) {
    l.ln1_gamma.setOnes();
    l.ln2_gamma.setOnes();
    l.wq = uniform_matrix(d, d, bound_d, rng);
    l.wk = uniform_matrix(d, d, bound_d, rng);
    l.wv = uniform_matrix(d, d, bound_d, rng);
    l.wo = uniform_matrix(d, d, bound_d, rng);
    l.w1 = uniform_matrix(d, f, bound_d, rng);
    l.w2 = uniform_matrix(f, d, bound_f, rng);
  }
  p.final_gamma.setOnes();
  return p;
}

std::vector<TensorRef> TemporalEncoderParams::tensors() {
  std::vector<TensorRef> out;
  out.push_back(ref("encoder.cls", cls));
  out.push_back(ref("encoder.positional", positional));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& l = layers[i];
    const auto prefix = "encoder.layers." + std::to_string(i) + ".";
    out.push_back(ref(prefix + "ln1_gamma", l.ln1_gamma));
    out.push_back(ref(prefix + "ln1_beta", l.ln1_beta));
    out.push_back(ref(prefix + "wq", l.wq));
    out.push_back(ref(prefix + "wk", l.wk));
    out.push_back(ref(prefix + "wv", l.wv));
    out.push_back(ref(prefix + "wo", l.wo));
    out.push_back(ref(prefix + "bq", l.bq));
    out.push_back(ref(prefix + "bk", l.bk));
    out.push_back(ref(prefix + "bv", l.bv));
    out.push_back(ref(prefix + "bo", l.bo));
    out.push_back(ref(prefix + "ln2_gamma", l.ln2_gamma));
    out.push_back(ref(prefix + "ln2_beta", l.ln2_beta));
    out.push_back(ref(prefix + "w1", l.w1));
    out.push_back(ref(prefix + "b1", l.b1));
    out.push_back(ref(prefix + "w2", l.w2));
    out.push_back(ref(prefix + "b2", l.b2));
  }
  out.push_back(ref("encoder.final_gamma", final_gamma));
  out.push_back(ref("encoder.final_beta", final_beta));
  return out;
}

ProjectionHeadParams ProjectionHeadParams::zeros(int in_dim, int hidden_dim, int out_dim) {
  if (in_dim < 1 || hidden_dim < 1 || out_dim < 1) {
    throw ConfigurationError("projection head dims must be positive");
  }
  return {MatrixXd::Zero(in_dim, hidden_dim), VectorXd::Zero(hidden_dim),
          MatrixXd::Zero(hidden_dim, out_dim), VectorXd::Zero(out_dim)};
}

ProjectionHeadParams ProjectionHeadParams::initialize(int in_dim, int hidden_dim, int out_dim,
                                                      std::mt19937_64& rng) {
  auto head = zeros(in_dim, hidden_dim, out_dim);
  head.w1 = uniform_matrix(in_dim, hidden_dim, 1.0 / std::sqrt(static_cast<double>(in_dim)), rng);
  head.w2 =
      uniform_matrix(hidden_dim, out_dim, 1.0 / std::sqrt(static_cast<double>(hidden_dim)), rng);
  return head;
}

std::vector<TensorRef> ProjectionHeadParams::tensors() {
  return {ref("head.w1", w1), ref("head.b1", b1), ref("head.w2", w2), ref("head.b2", b2)};
}

VectorXd encode_modality(const MatrixXd& frames, const TemporalEncoderParams& params,
                         EncodingMode mode, EncoderTrace* trace) {
  check_input(frames, params);
  if (mode == EncodingMode::mean_pool) {
    if (trace != nullptr) {
      trace->mode = mode;
      trace->frames = frames.rows();
      trace->layers.clear();
    }
    // Summing each column in sorted order makes the result independent of
    // frame order down to the last bit.
    VectorXd mean(frames.cols());
    std::vector<double> column(static_cast<std::size_t>(frames.rows()));
    for (Eigen::Index c = 0; c < frames.cols(); ++c) {
      for (Eigen::Index r = 0; r < frames.rows(); ++r) column[static_cast<std::size_t>(r)] = frames(r, c);
      std::sort(column.begin(), column.end());
      double sum = 0.0;
      for (double v : column) sum += v;
      mean[c] = sum / static_cast<double>(frames.rows());
    }
    return mean;
  }

  const Eigen::Index t = frames.rows();
  MatrixXd x(t + 1, params.config.dim);
  x.row(0) = params.cls.transpose();
  x.bottomRows(t) = frames + params.positional.topRows(t);

  EncoderTrace local;
  EncoderTrace& tr = trace != nullptr ? *trace : local;
  tr.mode = mode;
  tr.frames = t;
  tr.layers.resize(params.layers.size());
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    x = layer_forward(x, params.layers[i], params.config, tr.layers[i]);
  }
  const MatrixXd cls_row = x.topRows(1);
  const MatrixXd h = layer_norm(cls_row, params.final_gamma, params.final_beta,
                                params.config.layer_norm_eps, tr.final_ln);
  return h.row(0).transpose();
}

void encode_modality_backward(const VectorXd& grad_h, const TemporalEncoderParams& params,
                              const EncoderTrace& trace, TemporalEncoderParams& grads) {
  if (trace.mode == EncodingMode::mean_pool) return;  // no trainable parameters on this path

  const MatrixXd grad_cls_row = layer_norm_backward(grad_h.transpose(), params.final_gamma,
                                                    trace.final_ln, grads.final_gamma,
                                                    grads.final_beta);
  MatrixXd grad_x = MatrixXd::Zero(trace.frames + 1, params.config.dim);
  grad_x.row(0) = grad_cls_row.row(0);
  for (std::size_t i = params.layers.size(); i-- > 0;) {
    grad_x = layer_backward(grad_x, params.layers[i], params.config, trace.layers[i],
                            grads.layers[i]);
  }
  grads.cls += grad_x.row(0).transpose();
  grads.positional.topRows(trace.frames) += grad_x.bottomRows(trace.frames);
}

std::string_view to_string(AttentionSource source) {
  return source == AttentionSource::rollout ? "rollout" : "final_layer";
}

AttentionSource parse_attention_source(std::string_view name) {
  if (name == "rollout") return AttentionSource::rollout;
  if (name == "final_layer") return AttentionSource::final_layer;
  throw ArgumentError("unknown attention source '" + std::string(name) + "'");
}

VectorXd extract_temporal_attention(const MatrixXd& frames, const TemporalEncoderParams& params,
                                    EncodingMode mode, AttentionSource source) {
  if (mode != EncodingMode::self_attention) {
    throw UnsupportedModeError("temporal attention needs the self-attention encoder");
  }
  EncoderTrace trace;
  encode_modality(frames, params, mode, &trace);
  const Eigen::Index s = trace.frames + 1;

  auto head_mean = [&](const LayerCache& layer) {
    MatrixXd a = MatrixXd::Zero(s, s);
    for (const auto& p : layer.attention) a += p;
    return MatrixXd(a / static_cast<double>(layer.attention.size()));
  };

  VectorXd cls_row;
  if (source == AttentionSource::final_layer) {
    cls_row = head_mean(trace.layers.back()).row(0).transpose();
  } else {
    // Residual-aware rollout: each layer mixes 0.5 A + 0.5 I, composed bottom-up.
    MatrixXd rollout = MatrixXd::Identity(s, s);
    for (const auto& layer : trace.layers) {
      rollout = (0.5 * head_mean(layer) + 0.5 * MatrixXd::Identity(s, s)) * rollout;
    }
    cls_row = rollout.row(0).transpose();
  }
  VectorXd weights = cls_row.tail(trace.frames);
  return weights / weights.sum();
}

VectorXd aggregate(const VectorXd& h_rgb, const VectorXd& h_flow, Aggregation mode) {
  switch (mode) {
    case Aggregation::rgb_only: return h_rgb;
    case Aggregation::flow_only: return h_flow;
    case Aggregation::both:
      if (h_rgb.size() != h_flow.size()) {
        throw ArgumentError("modality representations differ in dimension");
      }
      return h_rgb + h_flow;
  }
  throw ArgumentError("unknown aggregation mode");
}

VectorXd project(const VectorXd& h_agg, const ProjectionHeadParams& head, ProjectionTrace* trace) {
  if (h_agg.size() != head.w1.rows()) {
    throw ArgumentError("projection head expects dim " + std::to_string(head.w1.rows()) +
                        ", got " + std::to_string(h_agg.size()));
  }
  VectorXd pre = head.w1.transpose() * h_agg + head.b1;
  VectorXd hidden = pre.cwiseMax(0.0);
  VectorXd out = head.w2.transpose() * hidden + head.b2;
  if (trace != nullptr) {
    trace->input = h_agg;
    trace->pre_activation = std::move(pre);
    trace->hidden = std::move(hidden);
  }
  return out;
}

VectorXd project_backward(const VectorXd& grad_out, const ProjectionHeadParams& head,
                          const ProjectionTrace& trace, ProjectionHeadParams& grads) {
  grads.w2 += trace.hidden * grad_out.transpose();
  grads.b2 += grad_out;
  const VectorXd grad_hidden = head.w2 * grad_out;
  const VectorXd grad_pre =
      (trace.pre_activation.array() > 0.0).select(grad_hidden, VectorXd::Zero(grad_hidden.size()));
  grads.w1 += trace.input * grad_pre.transpose();
  grads.b1 += grad_pre;
  return head.w1 * grad_pre;
}

}  // namespace dualstream
