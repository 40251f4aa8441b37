#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dualstream {

/// P(score_pos > score_neg) + 0.5 P(tie), via midranks. nullopt when either
/// class is empty.
std::optional<double> binary_auc(std::span<const double> scores, std::span<const bool> positive);

struct AucReport {
  std::vector<std::optional<double>> per_class;  // nullopt: undefined for this class
  std::optional<double> macro;                   // mean over defined classes
};

/// One-vs-rest AUC on each column of an N x C score matrix.
AucReport roc_auc_ovr(const Eigen::MatrixXd& scores, std::span<const std::size_t> labels);

struct PpvReport {
  std::vector<std::optional<double>> per_class;  // nullopt: class never predicted
  std::optional<double> macro;
};

PpvReport ppv(std::span<const std::size_t> predicted, std::span<const std::size_t> labels,
              std::size_t n_classes);

/// counts[true][predicted].
std::vector<std::vector<long>> confusion_matrix(std::span<const std::size_t> predicted,
                                                std::span<const std::size_t> labels,
                                                std::size_t n_classes);

struct AuditSample {
  std::string category;
  std::string stratum;  // empty when unstratified
  std::optional<bool> correct;
};

struct AuditCell {
  std::string category;
  std::string stratum;
  std::size_t total = 0;
  std::size_t correct = 0;
  std::optional<double> precision;  // nullopt for empty cells
};

/// Precision of human-verified predictions per (category, stratum). The grid
/// spans `categories` x (`strata` plus every stratum seen in the samples).
/// Throws ValidationError when a sample has no verdict.
std::vector<AuditCell> audit_precision(std::span<const AuditSample> samples,
                                       const std::vector<std::string>& categories,
                                       const std::vector<std::string>& strata = {});

struct FoldSummary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

FoldSummary fold_summary(std::span<const double> values);

struct RocCurve {
  std::vector<double> fpr;
  std::vector<double> tpr;
};

RocCurve roc_curve(std::span<const double> scores, std::span<const bool> positive);

struct RocBand {
  std::vector<double> fpr;
  std::vector<double> mean_tpr;
  std::vector<double> std_tpr;
};

/// Vertical averaging: each curve is interpolated at the same FPR grid.
RocBand average_roc(std::span<const RocCurve> curves, std::size_t grid_points = 101);

struct EvaluationReport {
  std::vector<std::string> categories;
  std::size_t n = 0;
  AucReport auc;
  PpvReport ppv;
  std::vector<std::vector<long>> confusion;
};

/// `scores` rows are per-segment probability vectors; predictions are argmax.
EvaluationReport evaluate(const Eigen::MatrixXd& scores, std::span<const std::size_t> labels,
                          const std::vector<std::string>& categories);

std::string report_to_json(const EvaluationReport& report);
std::string report_to_csv(const EvaluationReport& report);

/// One SVG per call: mean ROC per class with a +-1 std band.
void write_roc_svg(const std::filesystem::path& path, const std::vector<std::string>& labels,
                   std::span<const RocBand> bands);

}  // namespace dualstream
