#include "dualstream/prototypes.hpp"

#include <algorithm>
#include <cmath>

#include "dualstream/error.hpp"

namespace dualstream {

namespace {

void check_temperature(double temperature) {
  if (!(temperature > 0.0)) throw ArgumentError("temperature must be positive");
}

double checked_norm(const VectorXd& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw DegenerateVectorError("vector has zero or non-finite norm");
  return n;
}

}  // namespace

PrototypeBank PrototypeBank::initialize(std::vector<std::string> categories, int embed_dim,
                                        std::mt19937_64& rng) {
  if (categories.size() < 2) throw ArgumentError("a prototype bank needs at least two categories");
  if (embed_dim < 1) throw ArgumentError("embed_dim must be positive");
  std::normal_distribution<double> normal(0.0, 1.0);
  PrototypeBank bank{std::move(categories), MatrixXd(0, 0)};
  bank.prototypes.resize(static_cast<Eigen::Index>(bank.categories.size()), embed_dim);
  for (Eigen::Index r = 0; r < bank.prototypes.rows(); ++r) {
    do {
      for (Eigen::Index c = 0; c < embed_dim; ++c) bank.prototypes(r, c) = normal(rng);
    } while (bank.prototypes.row(r).norm() == 0.0);
    bank.prototypes.row(r).normalize();
  }
  return bank;
}

void PrototypeBank::validate() const {
  if (prototypes.rows() != static_cast<Eigen::Index>(categories.size())) {
    throw ArgumentError("prototype rows do not match the category count");
  }
  for (Eigen::Index r = 0; r < prototypes.rows(); ++r) {
    if (!(prototypes.row(r).norm() > 0.0)) {
      throw DegenerateVectorError("prototype '" + categories[static_cast<std::size_t>(r)] +
                                  "' has zero norm");
    }
  }
}

double cosine_similarity(const VectorXd& h, const VectorXd& p) {
  if (h.size() != p.size()) throw ArgumentError("cosine similarity needs equal dimensions");
  const double s = h.dot(p) / (checked_norm(h) * checked_norm(p));
  return std::clamp(s, -1.0, 1.0);
}

VectorXd softmax(const VectorXd& logits) {
  const VectorXd e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

std::size_t argmax(const VectorXd& values) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < values.size(); ++i) {
    if (values(i) > values(best)) best = i;
  }
  return static_cast<std::size_t>(best);
}

ClassificationResult classify(const VectorXd& h_video, const PrototypeBank& bank,
                              double temperature) {
  check_temperature(temperature);
  ClassificationResult result;
  result.similarities.resize(bank.prototypes.rows());
  for (Eigen::Index j = 0; j < bank.prototypes.rows(); ++j) {
    result.similarities(j) = cosine_similarity(h_video, bank.prototypes.row(j).transpose());
  }
  result.probabilities = softmax(result.similarities / temperature);
  result.predicted = argmax(result.probabilities);
  return result;
}

InfoNceResult infonce_loss(std::span<const VectorXd> h_video, std::span<const std::size_t> labels,
                           const PrototypeBank& bank, double temperature, bool with_gradients) {
  check_temperature(temperature);
  if (h_video.empty()) throw ArgumentError("InfoNCE needs a non-empty batch");
  if (h_video.size() != labels.size()) throw ArgumentError("batch and label counts differ");

  const Eigen::Index c = bank.prototypes.rows();
  const Eigen::Index e = bank.prototypes.cols();
  VectorXd proto_norms(c);
  for (Eigen::Index j = 0; j < c; ++j) proto_norms(j) = checked_norm(bank.prototypes.row(j).transpose());

  InfoNceResult result;
  if (with_gradients) result.grad_prototypes = MatrixXd::Zero(c, e);
  for (std::size_t i = 0; i < h_video.size(); ++i) {
    const VectorXd& h = h_video[i];
    if (h.size() != e) throw ArgumentError("h_video dimension does not match the prototypes");
    if (labels[i] >= static_cast<std::size_t>(c)) {
      throw TaxonomyError("label index " + std::to_string(labels[i]) + " is outside the taxonomy");
    }
    const double h_norm = checked_norm(h);
    const VectorXd sims =
        (bank.prototypes * h).cwiseQuotient(proto_norms) / h_norm;  // raw cosines, unclamped
    const VectorXd logits = sims / temperature;
    const double max = logits.maxCoeff();
    const double log_sum = max + std::log((logits.array() - max).exp().sum());
    const auto label = static_cast<Eigen::Index>(labels[i]);
    result.loss += log_sum - logits(label);

    if (!with_gradients) continue;
    // dL/ds_j = (softmax_j - [j == c]) / temperature
    VectorXd grad_s = (logits.array() - log_sum).exp().matrix();
    grad_s(label) -= 1.0;
    grad_s /= temperature;
    VectorXd grad_h = VectorXd::Zero(e);
    for (Eigen::Index j = 0; j < c; ++j) {
      const auto p = bank.prototypes.row(j).transpose();
      const double pn = proto_norms(j);
      // ds/dh = p / (|h||p|) - s h / |h|^2, symmetric in (h, p).
      grad_h += grad_s(j) * (p / (h_norm * pn) - sims(j) * h / (h_norm * h_norm));
      result.grad_prototypes.row(j) +=
          (grad_s(j) * (h / (h_norm * pn) - sims(j) * p / (pn * pn))).transpose();
    }
    result.grad_h.push_back(std::move(grad_h));
  }
  return result;
}

}  // namespace dualstream
