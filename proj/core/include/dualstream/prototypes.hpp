#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dualstream/encoder.hpp"

namespace dualstream {

/// One learnable E-dim prototype per category, rows aligned with `categories`.
struct PrototypeBank {
  std::vector<std::string> categories;
  MatrixXd prototypes;  // C x E

  /// Seeded unit-norm random rows.
  static PrototypeBank initialize(std::vector<std::string> categories, int embed_dim,
                                  std::mt19937_64& rng);
  std::size_t size() const { return categories.size(); }
  void validate() const;
};

/// Throws DegenerateVectorError when either vector has zero norm.
double cosine_similarity(const VectorXd& h, const VectorXd& p);

struct ClassificationResult {
  VectorXd similarities;
  VectorXd probabilities;
  std::size_t predicted = 0;
};

/// Softmax over similarity / temperature. Ties in argmax go to the lowest index.
ClassificationResult classify(const VectorXd& h_video, const PrototypeBank& bank,
                              double temperature = 1.0);

VectorXd softmax(const VectorXd& logits);
std::size_t argmax(const VectorXd& values);

struct InfoNceResult {
  double loss = 0.0;  // summed over the batch
  std::vector<VectorXd> grad_h;
  MatrixXd grad_prototypes;
};

/// L = -sum_i log softmax_c_i(s(h_i, p_j) / temperature). Gradients are of the
/// summed loss.
InfoNceResult infonce_loss(std::span<const VectorXd> h_video, std::span<const std::size_t> labels,
                           const PrototypeBank& bank, double temperature = 1.0,
                           bool with_gradients = true);

}  // namespace dualstream
