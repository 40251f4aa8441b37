#include "dualstream/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dualstream/error.hpp"
#include "dualstream/prototypes.hpp"

namespace dualstream {

namespace {

std::optional<double> mean_of_defined(const std::vector<std::optional<double>>& values) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& v : values) {
    if (v) {
      sum += *v;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

void check_labels(std::span<const std::size_t> labels, std::size_t n_classes) {
  for (auto l : labels) {
    if (l >= n_classes) throw ArgumentError("label index outside the class range");
  }
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json();
}

}  // namespace

std::optional<double> binary_auc(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) throw ArgumentError("scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (positive[order[k]]) {
        positive_rank_sum += midrank;
        ++n_pos;
      }
    }
    i = j + 1;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double p = static_cast<double>(n_pos);
  const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(n_neg));
}

AucReport roc_auc_ovr(const Eigen::MatrixXd& scores, std::span<const std::size_t> labels) {
  if (scores.rows() == 0) throw ArgumentError("AUC needs at least one sample");
  if (static_cast<std::size_t>(scores.rows()) != labels.size()) {
    throw ArgumentError("score rows and labels differ in length");
  }
  const auto n_classes = static_cast<std::size_t>(scores.cols());
  check_labels(labels, n_classes);
  AucReport report;
  std::vector<double> column(labels.size());
  std::unique_ptr<bool[]> positive(new bool[labels.size()]);
  for (std::size_t c = 0; c < n_classes; ++c) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      column[i] = scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
      positive[i] = labels[i] == c;
    }
    report.per_class.push_back(
        binary_auc(column, std::span<const bool>(positive.get(), labels.size())));
  }
  report.macro = mean_of_defined(report.per_class);
  return report;
}

PpvReport ppv(std::span<const std::size_t> predicted, std::span<const std::size_t> labels,
              std::size_t n_classes) {
  if (predicted.empty()) throw ArgumentError("PPV needs at least one prediction");
  if (predicted.size() != labels.size()) throw ArgumentError("predictions and labels differ in length");
  check_labels(predicted, n_classes);
  check_labels(labels, n_classes);
  std::vector<std::size_t> hits(n_classes, 0), calls(n_classes, 0);
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    ++calls[predicted[i]];
    if (predicted[i] == labels[i]) ++hits[predicted[i]];
  }
  PpvReport report;
  for (std::size_t c = 0; c < n_classes; ++c) {
    report.per_class.push_back(calls[c] == 0 ? std::nullopt
                                             : std::optional<double>(static_cast<double>(hits[c]) /
                                                                     static_cast<double>(calls[c])));
  }
  report.macro = mean_of_defined(report.per_class);
  return report;
}

std::vector<std::vector<long>> confusion_matrix(std::span<const std::size_t> predicted,
                                                std::span<const std::size_t> labels,
                                                std::size_t n_classes) {
  if (predicted.size() != labels.size()) throw ArgumentError("predictions and labels differ in length");
  check_labels(predicted, n_classes);
  check_labels(labels, n_classes);
  std::vector<std::vector<long>> counts(n_classes, std::vector<long>(n_classes, 0));
  for (std::size_t i = 0; i < predicted.size(); ++i) ++counts[labels[i]][predicted[i]];
  return counts;
}

std::vector<AuditCell> audit_precision(std::span<const AuditSample> samples,
                                       const std::vector<std::string>& categories,
                                       const std::vector<std::string>& strata) {
  std::vector<std::string> all_strata = strata;
  for (const auto& s : samples) {
    if (!s.correct) {
      throw ValidationError("audit sample for '" + s.category + "' has no verdict");
    }
    if (std::find(all_strata.begin(), all_strata.end(), s.stratum) == all_strata.end()) {
      all_strata.push_back(s.stratum);
    }
  }
  std::vector<AuditCell> cells;
  for (const auto& category : categories) {
    for (const auto& stratum : all_strata) {
      AuditCell cell{category, stratum, 0, 0, std::nullopt};
      for (const auto& s : samples) {
        if (s.category == category && s.stratum == stratum) {
          ++cell.total;
          cell.correct += *s.correct ? 1 : 0;
        }
      }
      if (cell.total > 0) {
        cell.precision = static_cast<double>(cell.correct) / static_cast<double>(cell.total);
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

FoldSummary fold_summary(std::span<const double> values) {
  if (values.empty()) throw ArgumentError("fold summary needs at least one value");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return {mean, std::sqrt(var / n)};
}

RocCurve roc_curve(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) throw ArgumentError("scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  const auto n_pos = static_cast<double>(std::count(positive.begin(), positive.end(), true));
  const auto n_neg = static_cast<double>(scores.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ArgumentError("ROC curve needs positives and negatives");

  RocCurve curve{{0.0}, {0.0}};
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (positive[order[i]] ? tp : fp) += 1.0;
    if (i + 1 == order.size() || scores[order[i + 1]] != scores[order[i]]) {
      curve.fpr.push_back(fp / n_neg);
      curve.tpr.push_back(tp / n_pos);
    }
  }
  return curve;
}

RocBand average_roc(std::span<const RocCurve> curves, std::size_t grid_points) {
  if (curves.empty() || grid_points < 2) throw ArgumentError("ROC averaging needs curves and a grid");
  RocBand band;
  for (std::size_t g = 0; g < grid_points; ++g) {
    const double x = static_cast<double>(g) / static_cast<double>(grid_points - 1);
    std::vector<double> ys;
    for (const auto& c : curves) {
      const auto it = std::lower_bound(c.fpr.begin(), c.fpr.end(), x);
      auto i = static_cast<std::size_t>(it - c.fpr.begin());
      double y;
      if (i < c.fpr.size() && c.fpr[i] == x) {
        while (i + 1 < c.fpr.size() && c.fpr[i + 1] == x) ++i;
        y = c.tpr[i];
      } else if (i == 0) {
        y = c.tpr.front();
      } else if (i == c.fpr.size()) {
        y = c.tpr.back();
      } else {
        const double w = (x - c.fpr[i - 1]) / (c.fpr[i] - c.fpr[i - 1]);
        y = c.tpr[i - 1] + w * (c.tpr[i] - c.tpr[i - 1]);
      }
      ys.push_back(y);
    }
    const auto s = fold_summary(ys);
    band.fpr.push_back(x);
    band.mean_tpr.push_back(s.mean);
    band.std_tpr.push_back(s.std);
  }
  return band;
}

EvaluationReport evaluate(const Eigen::MatrixXd& scores, std::span<const std::size_t> labels,
                          const std::vector<std::string>& categories) {
  if (static_cast<std::size_t>(scores.cols()) != categories.size()) {
    throw ArgumentError("score columns do not match the category count");
  }
  EvaluationReport report;
  report.categories = categories;
  report.n = labels.size();
  report.auc = roc_auc_ovr(scores, labels);
  std::vector<std::size_t> predicted(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    predicted[i] = argmax(scores.row(static_cast<Eigen::Index>(i)).transpose());
  }
  report.ppv = ppv(predicted, labels, categories.size());
  report.confusion = confusion_matrix(predicted, labels, categories.size());
  return report;
}

std::string report_to_json(const EvaluationReport& report) {
  nlohmann::json per_class = nlohmann::json::array();
  for (std::size_t c = 0; c < report.categories.size(); ++c) {
    per_class.push_back({{"category", report.categories[c]},
                         {"auc", optional_json(report.auc.per_class[c])},
                         {"ppv", optional_json(report.ppv.per_class[c])}});
  }
  const nlohmann::json doc = {{"n", report.n},
                              {"macro_auc", optional_json(report.auc.macro)},
                              {"macro_ppv", optional_json(report.ppv.macro)},
                              {"per_class", per_class},
                              {"confusion", report.confusion}};
  return doc.dump(2) + "\n";
}

std::string report_to_csv(const EvaluationReport& report) {
  std::ostringstream out;
  out.precision(17);
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string{};
    std::ostringstream s;
    s.precision(17);
    s << *v;
    return s.str();
  };
  out << "category,auc,ppv";
  for (const auto& c : report.categories) out << ",pred_" << c;
  out << '\n';
  for (std::size_t c = 0; c < report.categories.size(); ++c) {
    out << report.categories[c] << ',' << cell(report.auc.per_class[c]) << ','
        << cell(report.ppv.per_class[c]);
    for (long v : report.confusion[c]) out << ',' << v;
    out << '\n';
  }
  out << "macro," << cell(report.auc.macro) << ',' << cell(report.ppv.macro) << '\n';
  return out.str();
}

void write_roc_svg(const std::filesystem::path& path, const std::vector<std::string>& labels,
                   std::span<const RocBand> bands) {
  if (labels.size() != bands.size()) throw ArgumentError("one label per ROC band");
  static constexpr const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                            "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  constexpr double size = 400.0, margin = 40.0, plot = size - 2 * margin;
  auto px = [&](double fpr) { return margin + fpr * plot; };
  auto py = [&](double tpr) { return size - margin - std::clamp(tpr, 0.0, 1.0) * plot; };

  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << plot << "\" height=\""
      << plot << "\" fill=\"none\" stroke=\"black\"/>\n"
      << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\"" << py(1)
      << "\" stroke=\"gray\" stroke-dasharray=\"4\"/>\n"
      << "<text x=\"" << size / 2 << "\" y=\"" << size - 8
      << "\" text-anchor=\"middle\" font-size=\"12\">False positive rate</text>\n"
      << "<text x=\"12\" y=\"" << size / 2 << "\" font-size=\"12\" transform=\"rotate(-90 12 "
      << size / 2 << ")\" text-anchor=\"middle\">True positive rate</text>\n";
  for (std::size_t b = 0; b < bands.size(); ++b) {
    const auto& band = bands[b];
    const char* color = kColors[b % std::size(kColors)];
    out << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < band.fpr.size(); ++i) {
      out << px(band.fpr[i]) << ',' << py(band.mean_tpr[i] + band.std_tpr[i]) << ' ';
    }
    for (std::size_t i = band.fpr.size(); i-- > 0;) {
      out << px(band.fpr[i]) << ',' << py(band.mean_tpr[i] - band.std_tpr[i]) << ' ';
    }
    out << "\"/>\n<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < band.fpr.size(); ++i) {
      out << px(band.fpr[i]) << ',' << py(band.mean_tpr[i]) << ' ';
    }
    out << "\"/>\n<text x=\"" << px(0.6) << "\" y=\"" << py(0.3) + 14.0 * static_cast<double>(b)
        << "\" font-size=\"12\" fill=\"" << color << "\">" << labels[b] << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace dualstream
