#include <cmath>
#include <memory>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "dualstream/error.hpp"
#include "dualstream/metrics.hpp"
#include "test_support.hpp"

namespace dualstream {
namespace {

using testing::auc_oracle;

std::optional<double> auc_of(const std::vector<double>& scores, const std::vector<bool>& positive) {
  auto flags = std::make_unique<bool[]>(positive.size());
  for (std::size_t i = 0; i < positive.size(); ++i) flags[i] = positive[i];
  return binary_auc(scores, std::span<const bool>(flags.get(), positive.size()));
}

TEST(Auc, WorkedExample) {
  EXPECT_DOUBLE_EQ(auc_of({0.1, 0.4, 0.35, 0.8}, {false, false, true, true}).value(), 0.75);
  EXPECT_DOUBLE_EQ(auc_oracle({0.1, 0.4, 0.35, 0.8}, {false, false, true, true}), 0.75);
}

TEST(Auc, PerfectAndConstantScores) {
  EXPECT_EQ(auc_of({0.1, 0.2, 0.8, 0.9}, {false, false, true, true}), 1.0);
  EXPECT_EQ(auc_of({0.5, 0.5, 0.5, 0.5}, {false, true, false, true}), 0.5);
  EXPECT_FALSE(auc_of({0.2, 0.3}, {true, true}).has_value());
}

TEST(Auc, EqualsBruteForceWithTies) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> n_dist(2, 200), levels(2, 12);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = n_dist(rng);
    // Few score levels force many ties.
    std::uniform_int_distribution<int> level(0, levels(rng));
    std::bernoulli_distribution pos(0.4);
    std::vector<double> s;
    std::vector<bool> y;
    for (int i = 0; i < n; ++i) {
      s.push_back(level(rng) / 7.0);
      y.push_back(pos(rng));
    }
    const double oracle = auc_oracle(s, y);
    const auto got = auc_of(s, y);
    if (std::isnan(oracle)) {
      EXPECT_FALSE(got.has_value());
    } else {
      ASSERT_TRUE(got.has_value());
      EXPECT_EQ(*got, oracle) << "trial " << trial;
    }
  }
}

TEST(Auc, InvariantToMonotoneTransform) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  std::bernoulli_distribution pos(0.5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s, t;
    std::vector<bool> y;
    for (int i = 0; i < 60; ++i) {
      s.push_back(std::round(normal(rng) * 4.0) / 4.0);
      t.push_back(std::exp(3.0 * s.back()) + 7.0);
      y.push_back(pos(rng));
    }
    EXPECT_EQ(auc_of(s, y), auc_of(t, y));
  }
}

TEST(Auc, OneVsRest) {
  Eigen::MatrixXd scores(4, 3);
  scores << 0.7, 0.2, 0.1,
            0.1, 0.8, 0.1,
            0.3, 0.3, 0.4,
            0.6, 0.3, 0.1;
  const std::vector<std::size_t> labels{0, 1, 2, 0};
  const auto r = roc_auc_ovr(scores, labels);
  ASSERT_EQ(r.per_class.size(), 3u);
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> col;
    std::vector<bool> pos;
    for (int i = 0; i < 4; ++i) {
      col.push_back(scores(i, static_cast<Eigen::Index>(c)));
      pos.push_back(labels[static_cast<std::size_t>(i)] == c);
    }
    EXPECT_EQ(r.per_class[c], auc_oracle(col, pos));
  }
  EXPECT_DOUBLE_EQ(r.macro.value(), (*r.per_class[0] + *r.per_class[1] + *r.per_class[2]) / 3.0);

  // A class with no positives is undefined and left out of the macro mean.
  const std::vector<std::size_t> two{0, 1, 1, 0};
  const auto u = roc_auc_ovr(scores, two);
  EXPECT_FALSE(u.per_class[2].has_value());
  EXPECT_DOUBLE_EQ(u.macro.value(), (*u.per_class[0] + *u.per_class[1]) / 2.0);

  const std::vector<std::size_t> none;
  EXPECT_THROW(roc_auc_ovr(Eigen::MatrixXd(0, 3), none), ArgumentError);
}

TEST(Ppv, Examples) {
  const std::vector<std::size_t> y{0, 1, 2, 1};
  auto r = ppv(y, y, 3);
  for (const auto& v : r.per_class) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(r.macro, 1.0);

  const std::vector<std::size_t> pred{0, 0, 0, 0, 1};
  const std::vector<std::size_t> truth{0, 1, 0, 2, 1};
  r = ppv(pred, truth, 3);
  EXPECT_EQ(r.per_class[0], 0.5);
  EXPECT_EQ(r.per_class[1], 1.0);
  EXPECT_FALSE(r.per_class[2].has_value());
  EXPECT_EQ(r.macro, 0.75);
}

TEST(Confusion, SumsMatchCounts) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> cls(0, 3);
  std::vector<std::size_t> pred, truth;
  for (int i = 0; i < 500; ++i) {
    pred.push_back(static_cast<std::size_t>(cls(rng)));
    truth.push_back(static_cast<std::size_t>(cls(rng)));
  }
  const auto m = confusion_matrix(pred, truth, 4);
  long total = 0;
  for (std::size_t c = 0; c < 4; ++c) {
    long row = 0, col = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      row += m[c][k];
      col += m[k][c];
      EXPECT_GE(m[c][k], 0);
    }
    EXPECT_EQ(row, std::count(truth.begin(), truth.end(), c));
    EXPECT_EQ(col, std::count(pred.begin(), pred.end(), c));
    total += row;
  }
  EXPECT_EQ(total, 500);
}

TEST(Audit, PrecisionPerCell) {
  std::vector<AuditSample> samples;
  for (int i = 0; i < 10; ++i) samples.push_back({"left camera move", "", i != 3});
  for (int i = 0; i < 4; ++i) samples.push_back({"retraction", "", false});
  const auto cells = audit_precision(samples, {"left camera move", "retraction", "hook"});
  ASSERT_EQ(cells.size(), 3u);
  EXPECT_EQ(cells[0].total, 10u);
  EXPECT_DOUBLE_EQ(cells[0].precision.value(), 0.90);
  EXPECT_EQ(cells[1].precision, 0.0);
  EXPECT_EQ(cells[2].total, 0u);
  EXPECT_FALSE(cells[2].precision.has_value());

  samples.push_back({"hook", "", std::nullopt});
  EXPECT_THROW(audit_precision(samples, {"left camera move", "retraction", "hook"}), ValidationError);
}

TEST(Audit, Strata) {
  const std::vector<AuditSample> samples{{"c", "left", true}, {"c", "right", false}, {"c", "left", false}};
  const auto cells = audit_precision(samples, {"c"}, {"left", "right", "apex"});
  ASSERT_EQ(cells.size(), 3u);
  for (const auto& cell : cells) {
    if (cell.stratum == "left") EXPECT_EQ(cell.precision, 0.5);
    if (cell.stratum == "right") EXPECT_EQ(cell.precision, 0.0);
    if (cell.stratum == "apex") EXPECT_FALSE(cell.precision.has_value());
  }
}

TEST(FoldSummary, Examples) {
  const std::vector<double> same{0.8, 0.8, 0.8}, two{0.0, 1.0}, one{0.7};
  auto s = fold_summary(same);
  EXPECT_DOUBLE_EQ(s.mean, 0.8);
  EXPECT_NEAR(s.std, 0.0, 1e-15);
  s = fold_summary(two);
  EXPECT_EQ(s.mean, 0.5);
  EXPECT_EQ(s.std, 0.5);
  s = fold_summary(one);
  EXPECT_EQ(s.mean, 0.7);
  EXPECT_EQ(s.std, 0.0);
  EXPECT_THROW(fold_summary(std::vector<double>{}), ArgumentError);
}

TEST(Roc, CurveAndVerticalAverage) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const bool y[] = {false, false, true, true};
  const auto curve = roc_curve(s, y);
  ASSERT_FALSE(curve.fpr.empty());
  EXPECT_EQ(curve.fpr.front(), 0.0);
  EXPECT_EQ(curve.tpr.front(), 0.0);
  EXPECT_EQ(curve.fpr.back(), 1.0);
  EXPECT_EQ(curve.tpr.back(), 1.0);
  // Trapezoid area under the curve equals the AUC.
  double area = 0.0;
  for (std::size_t i = 1; i < curve.fpr.size(); ++i) {
    area += (curve.fpr[i] - curve.fpr[i - 1]) * (curve.tpr[i] + curve.tpr[i - 1]) / 2.0;
  }
  EXPECT_NEAR(area, 0.75, 1e-12);

  const std::vector<RocCurve> same{curve, curve};
  const auto band = average_roc(same, 11);
  ASSERT_EQ(band.fpr.size(), 11u);
  for (std::size_t i = 0; i < 11; ++i) EXPECT_EQ(band.std_tpr[i], 0.0);

  const RocCurve low{{0.0, 1.0}, {0.0, 1.0}}, high{{0.0, 0.0, 1.0}, {0.0, 1.0, 1.0}};
  const std::vector<RocCurve> pair{low, high};
  const auto mixed = average_roc(pair, 3);
  EXPECT_DOUBLE_EQ(mixed.mean_tpr[1], 0.75);
  EXPECT_DOUBLE_EQ(mixed.std_tpr[1], 0.25);
}

TEST(Report, JsonAndCsv) {
  Eigen::MatrixXd scores(4, 2);
  scores << 0.9, 0.1, 0.6, 0.4, 0.35, 0.65, 0.2, 0.8;
  const std::vector<std::size_t> labels{0, 1, 1, 1};
  const auto r = evaluate(scores, labels, {"low", "high"});
  EXPECT_EQ(r.n, 4u);
  EXPECT_EQ(r.confusion[1][0], 1);
  const auto doc = nlohmann::json::parse(report_to_json(r));
  EXPECT_EQ(doc.at("n"), 4);
  EXPECT_EQ(doc.at("macro_auc").get<double>(), r.auc.macro.value());
  EXPECT_EQ(doc.at("macro_ppv").get<double>(), r.ppv.macro.value());
  ASSERT_EQ(doc.at("per_class").size(), 2u);
  EXPECT_EQ(doc["per_class"][1].at("category"), "high");
  const auto csv = report_to_csv(r);
  EXPECT_NE(csv.find("low"), std::string::npos);
  EXPECT_NE(csv.find("high"), std::string::npos);
}

}  // namespace
}  // namespace dualstream
