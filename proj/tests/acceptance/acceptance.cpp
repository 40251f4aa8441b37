// Acceptance gate: one PASS/FAIL line per criterion. Arguments select a
// subset of criteria by number; with none, all nine run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dualstream/encoder.hpp"
#include "dualstream/error.hpp"
#include "dualstream/inference.hpp"
#include "dualstream/metrics.hpp"
#include "dualstream/model.hpp"
#include "dualstream/prototypes.hpp"
#include "dualstream/synthetic.hpp"
#include "dualstream/training.hpp"
#include "test_support.hpp"

namespace ds = dualstream;
namespace dt = dualstream::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void perturb(ds::TemporalModel& m, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 0.1);
  for (auto& t : m.tensors()) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] += n(rng);
  }
}

// The D=32 model used for every training criterion.
ds::TrainConfig training_config(int epochs, std::uint64_t seed) {
  ds::TrainConfig c;
  c.epochs = epochs;
  c.seed = seed;
  c.learning_rate = 0.01;
  c.model.encoder.dim = 32;
  c.model.encoder.heads = 4;
  c.model.embed_dim = 16;
  return c;
}

Verdict equation_fidelity() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  Verdict v;

  // Aggregation.
  double agg_err = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index d = 1 + trial % 32;
    const Eigen::VectorXd a = dt::random_vector(d, rng), b = dt::random_vector(d, rng);
    const Eigen::VectorXd s = ds::aggregate(a, b, ds::Aggregation::both);
    for (Eigen::Index i = 0; i < d; ++i) agg_err = std::max(agg_err, std::abs(s[i] - (a[i] + b[i])));
  }

  // Loss against the scalar oracle.
  std::uniform_int_distribution<int> b_dist(1, 4), c_dist(2, 6), e_dist(2, 8);
  double loss_rel = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int batch = b_dist(rng), classes = c_dist(rng), e = e_dist(rng);
    std::vector<std::string> names;
    for (int c = 0; c < classes; ++c) names.push_back("c" + std::to_string(c));
    auto bank = ds::PrototypeBank::initialize(names, e, rng);
    bank.prototypes = dt::random_matrix(classes, e, rng);
    std::vector<Eigen::VectorXd> h;
    std::vector<std::size_t> labels;
    std::uniform_int_distribution<int> label(0, classes - 1);
    for (int i = 0; i < batch; ++i) {
      h.push_back(dt::random_vector(e, rng, 2.0));
      labels.push_back(static_cast<std::size_t>(label(rng)));
    }
    const double got = ds::infonce_loss(h, labels, bank, 1.0, false).loss;
    const double want = dt::infonce_oracle(h, labels, bank.prototypes, 1.0);
    loss_rel = std::max(loss_rel, std::abs(got - want) / std::abs(want));
  }

  // Entropy.
  double ent_err = 0.0;
  bool bounded = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const int c = 2 + trial % 7;
    const auto p = dt::random_distribution(c, rng, trial % 2 == 0);
    const double s = ds::entropy(p);
    ent_err = std::max(ent_err, std::abs(s - dt::entropy_oracle(p)));
    bounded = bounded && s >= 0.0 && s <= std::log(static_cast<double>(c)) + 1e-12;
  }

  const double secs = seconds_since(t0);
  v.pass = agg_err == 0.0 && loss_rel < 1e-10 && ent_err < 1e-12 && bounded && secs < 10.0;
  v.detail = fmt("aggregation err %.1e, loss rel err %.2e, entropy err %.1e, bounds %s, %.2fs",
                 agg_err, loss_rel, ent_err, bounded ? "ok" : "violated", secs);
  return v;
}

Verdict gradient_suite() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  const int dims[] = {4, 8, 12, 16};
  std::uniform_int_distribution<int> t_dist(1, 6), e_dist(2, 8), c_dist(2, 6), b_dist(1, 4);
  double worst = 0.0;
  std::string where;
  int rejected = 0;
  for (int trial = 0; trial < 20;) {
    ds::ModelConfig mc;
    mc.encoder.dim = dims[trial % 4];
    mc.encoder.heads = 1 + trial % 2 + (mc.encoder.dim >= 8 ? trial % 3 / 2 * 2 : 0);
    if (mc.encoder.dim % mc.encoder.heads != 0) mc.encoder.heads = 1;
    mc.encoder.layers = 1 + trial % 2;
    mc.encoder.max_frames = 8;
    mc.embed_dim = e_dist(rng);
    std::vector<std::string> names;
    for (int c = 0, n = c_dist(rng); c < n; ++c) names.push_back("c" + std::to_string(c));
    auto m = ds::TemporalModel::initialize(mc, names, 300 + trial);
    perturb(m, rng);
    std::vector<ds::ModelInput> batch;
    std::vector<std::size_t> labels;
    std::uniform_int_distribution<std::size_t> label(0, names.size() - 1);
    for (int i = 0, n = b_dist(rng); i < n; ++i) {
      batch.push_back({dt::random_matrix(t_dist(rng), mc.encoder.dim, rng),
                       dt::random_matrix(t_dist(rng), mc.encoder.dim, rng)});
      labels.push_back(label(rng));
    }
    const auto options = ds::model_options(ds::Ablation::full);
    // Central differences are meaningless across the head's ReLU kink, so
    // draws with a pre-activation near zero are replaced.
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& in : batch) {
      ds::ForwardTrace tr;
      ds::forward(m, in, options, &tr);
      margin = std::min(margin, tr.head.pre_activation.cwiseAbs().minCoeff());
    }
    if (margin < 1e-3) {
      ++rejected;
      continue;
    }
    auto grads = m.zeros_like();
    ds::loss_and_gradients(m, options, batch, labels, &grads);
    const auto check = dt::finite_difference_check(m.tensors(), grads.tensors(), [&] {
      return ds::loss_and_gradients(m, options, batch, labels, nullptr).loss_sum;
    }, 1e-5);
    if (std::getenv("ACCEPTANCE_VERBOSE")) {
      std::printf("  trial %d D=%d heads=%d layers=%d E=%d C=%zu B=%zu: %.2e at %s\n", trial, mc.encoder.dim,
                  mc.encoder.heads, mc.encoder.layers, mc.embed_dim, names.size(), batch.size(),
                  check.max_relative_error, check.worst.c_str());
    }
    if (check.max_relative_error > worst) {
      worst = check.max_relative_error;
      where = check.worst;
    }
    ++trial;
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 60.0,
          fmt("max rel err %.2e at %s over 20 instances (%d kink draws replaced), %.1fs", worst,
              where.c_str(), rejected, secs)};
}

Verdict merge_example() {
  auto interval = [](double a, double b) {
    ds::IntervalPrediction p;
    p.start_s = a;
    p.end_s = b;
    p.prediction.predicted = 1;
    return p;
  };
  const std::vector<ds::IntervalPrediction> in{interval(10, 11), interval(11, 12), interval(15, 16)};
  const auto events = ds::merge_predictions(in);
  const std::vector<ds::TimelineEvent> want{{1, 10.0, 12.0}, {1, 15.0, 16.0}};
  std::string got;
  for (const auto& e : events) got += fmt("(%g-%g)", e.start_s, e.end_s);
  return {events == want, "events " + got};
}

// Splits of exactly 60 train / 8 val / 8 test videos.
std::vector<ds::FoldSplit> fixed_splits(std::vector<std::string> ids, int folds, std::uint64_t seed) {
  std::vector<ds::FoldSplit> out;
  for (int k = 0; k < folds; ++k) {
    std::mt19937_64 rng(seed * 1000 + static_cast<std::uint64_t>(k));
    std::shuffle(ids.begin(), ids.end(), rng);
    ds::FoldSplit s;
    s.fold_id = k;
    s.seed = seed;
    s.test_video_ids.assign(ids.begin(), ids.begin() + 8);
    s.val_video_ids.assign(ids.begin() + 8, ids.begin() + 16);
    s.train_video_ids.assign(ids.begin() + 16, ids.end());
    out.push_back(s);
  }
  return out;
}

Verdict end_to_end() {
  ds::SyntheticSpec spec;
  spec.n_classes = 4;
  spec.videos_per_class = 19;
  spec.feature_dim = 32;
  spec.mode = ds::SyntheticMode::content;
  spec.seed = 7;
  const auto data = ds::generate_synthetic_dataset(spec);
  const auto kind = ds::synthetic_task_kind(4);
  const auto cfg = training_config(20, 1);
  std::vector<std::optional<double>> aucs;
  double slowest = 0.0;
  for (const auto& split : fixed_splits(data.manifest.video_ids(), 10, 11)) {
    const auto t0 = Clock::now();
    auto ck = ds::train_fold(data.manifest, data.features, split, kind, cfg);
    const auto r = ds::evaluate_fold(data.manifest, data.features, split, std::move(ck));
    slowest = std::max(slowest, seconds_since(t0));
    aucs.push_back(r.test.auc.macro);
  }
  const auto s = ds::summarize(aucs);
  return {s.mean >= 0.95 && slowest < 600.0,
          fmt("60/8/8 videos, 10 folds: macro AUC %.4f +- %.4f, slowest fold %.1fs", s.mean, s.std,
              slowest)};
}

double cv_auc(const ds::SyntheticDataset& data, int classes, ds::Ablation ablation, int folds,
              int epochs) {
  auto cfg = training_config(epochs, 5);
  cfg.ablation = ablation;
  const auto r = ds::run_cross_validation(data.manifest, data.features, ds::synthetic_task_kind(classes),
                                          folds, cfg);
  return r.macro_auc.mean;
}

Verdict ablation_ordering() {
  ds::SyntheticSpec order;
  order.n_classes = 2;
  order.videos_per_class = 20;
  order.segments_per_video = 10;
  order.mode = ds::SyntheticMode::order;
  order.seed = 7;
  const auto order_data = ds::generate_synthetic_dataset(order);
  const double full = cv_auc(order_data, 2, ds::Ablation::full, 3, 30);
  const double no_sa = cv_auc(order_data, 2, ds::Ablation::no_sa, 3, 30);

  ds::SyntheticSpec dual;
  dual.n_classes = 4;
  dual.videos_per_class = 10;
  dual.mode = ds::SyntheticMode::dual;
  dual.seed = 7;
  const auto dual_data = ds::generate_synthetic_dataset(dual);
  const double dual_full = cv_auc(dual_data, 4, ds::Ablation::full, 3, 30);
  const double no_rgb = cv_auc(dual_data, 4, ds::Ablation::no_rgb, 3, 30);
  const double no_flow = cv_auc(dual_data, 4, ds::Ablation::no_flow, 3, 30);

  const bool pass = full >= 0.90 && no_sa >= 0.40 && no_sa <= 0.60 && no_rgb <= dual_full - 0.02 &&
                    no_flow <= dual_full - 0.02;
  return {pass, fmt("order: full %.3f no_sa %.3f; dual: full %.3f no_rgb %.3f no_flow %.3f", full,
                    no_sa, dual_full, no_rgb, no_flow)};
}

Verdict auc_oracle() {
  std::mt19937_64 rng(606);
  std::uniform_int_distribution<int> n_dist(1, 200), levels(1, 20);
  std::bernoulli_distribution pos(0.5);
  int mismatches = 0, undefined = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = n_dist(rng);
    std::uniform_int_distribution<int> level(0, levels(rng));
    std::vector<double> s;
    std::vector<bool> y;
    for (int i = 0; i < n; ++i) {
      s.push_back(level(rng) * 0.125);
      y.push_back(pos(rng));
    }
    auto flags = std::make_unique<bool[]>(y.size());
    std::copy(y.begin(), y.end(), flags.get());
    const auto got = ds::binary_auc(s, std::span<const bool>(flags.get(), y.size()));
    const double want = dt::auc_oracle(s, y);
    if (std::isnan(want)) {
      ++undefined;
      mismatches += got.has_value();
    } else {
      mismatches += !got.has_value() || *got != want;
    }
  }
  return {mismatches == 0, fmt("%d mismatches over 200 instances (%d undefined)", mismatches, undefined)};
}

Verdict split_integrity() {
  ds::SyntheticSpec spec;
  spec.n_classes = 6;
  spec.videos_per_class = 13;
  spec.segments_per_video = 1;
  spec.feature_dim = 4;
  const auto data = ds::generate_synthetic_dataset(spec);
  const auto ids = data.manifest.video_ids();
  const auto a = ds::make_monte_carlo_splits(data.manifest, 10, 2024);
  const auto b = ds::make_monte_carlo_splits(data.manifest, 10, 2024);
  bool disjoint = true, identical = a.size() == 10 && b.size() == 10;
  std::size_t test = 0, val = 0, train = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    std::set<std::string> seen;
    for (const auto* part : {&a[k].train_video_ids, &a[k].val_video_ids, &a[k].test_video_ids}) {
      for (const auto& v : *part) disjoint = seen.insert(v).second && disjoint;
    }
    disjoint = disjoint && seen.size() == ids.size();
    identical = identical && ds::fold_to_json(a[k]) == ds::fold_to_json(b[k]);
    test = a[k].test_video_ids.size();
    val = a[k].val_video_ids.size();
    train = a[k].train_video_ids.size();
  }
  return {ids.size() == 78 && disjoint && identical,
          fmt("%zu videos, %zu/%zu/%zu per fold, disjoint %s, regenerated %s", ids.size(), train, val,
              test, disjoint ? "yes" : "no", identical ? "byte-identical" : "different")};
}

Verdict invariances() {
  std::mt19937_64 rng(808);
  std::vector<std::string> failures;

  // Mean pooling ignores frame order exactly.
  ds::TemporalEncoderParams enc;
  {
    ds::ModelConfig mc;
    mc.encoder.dim = 16;
    mc.encoder.heads = 4;
    enc = ds::TemporalModel::initialize(mc, {"a", "b"}, 1).encoder;
  }
  bool perm = true;
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::MatrixXd x = dt::random_matrix(1 + trial % 40, 16, rng);
    std::vector<int> idx(static_cast<std::size_t>(x.rows()));
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    Eigen::MatrixXd y(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) y.row(r) = x.row(idx[static_cast<std::size_t>(r)]);
    perm = perm && ds::encode_modality(x, enc, ds::EncodingMode::mean_pool) ==
                       ds::encode_modality(y, enc, ds::EncodingMode::mean_pool);
  }
  if (!perm) failures.push_back("mean_pool permutation");

  // TTA is the mean of the variant distributions.
  ds::SyntheticSpec spec;
  spec.n_classes = 3;
  spec.videos_per_class = 2;
  spec.feature_dim = 16;
  spec.unlabeled_videos = 1;
  spec.unlabeled_duration_s = 60.0;
  const auto data = ds::generate_synthetic_dataset(spec);
  const auto& video = data.unlabeled_video_ids.front();
  std::vector<ds::ModelCheckpoint> models;
  for (std::uint64_t seed : {1, 2}) {
    ds::ModelCheckpoint ck;
    ck.config = dt::small_train_config(16, 1, seed);
    ck.task_kind = ds::synthetic_task_kind(3);
    ck.model = ds::TemporalModel::initialize(ck.config.model, ds::Taxonomy::of(ck.task_kind).categories(), seed);
    perturb(ck.model, rng);
    models.push_back(ck);
  }
  double tta_err = 0.0;
  for (double start = 0.0; start < 50.0; start += 2.5) {
    const ds::Segment seg{start, start + 3.0};
    const auto& m = models[0];
    const auto variants = ds::tta_variants(seg, 30.0, m.config.sampling);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
    for (const auto& v : variants) {
      const auto p = ds::predict_input(m.model, m.options(), ds::gather_input(data.features, video, v));
      for (Eigen::Index c = 0; c < 3; ++c) mean[c] += p[c];
    }
    for (Eigen::Index c = 0; c < 3; ++c) mean[c] /= static_cast<double>(variants.size());
    const auto got = ds::predict_segment(m, data.features, video, seg, 30.0, true);
    tta_err = std::max(tta_err, (got - mean).cwiseAbs().maxCoeff());
  }
  if (tta_err > 1e-12) failures.push_back(fmt("TTA mean err %.1e", tta_err));

  // Lowering the gate never predicts more.
  const auto& media = data.manifest.media(video);
  const auto base = ds::segment_timeline(models, data.features, video, media, 10.0);
  std::vector<double> thresholds{10.0, std::log(3.0), 0.5 * std::log(3.0), 0.0};
  for (const auto& i : base.intervals) thresholds.push_back(i.prediction.entropy);
  std::sort(thresholds.rbegin(), thresholds.rend());
  std::size_t previous = base.intervals.size() + 1;
  bool monotone = true;
  for (double t : thresholds) {
    std::size_t predicted = 0;
    for (const auto& i : base.intervals) predicted += ds::ensemble_from_distributions(i.prediction.per_model, t).predicted.has_value();
    monotone = monotone && predicted <= previous;
    previous = predicted;
  }
  if (!monotone) failures.push_back("abstention not monotone");

  // Positive rescaling of h_Video keeps the argmax.
  bool scale = true;
  for (int trial = 0; trial < 200; ++trial) {
    auto bank = ds::PrototypeBank::initialize({"a", "b", "c", "d"}, 8, rng);
    const Eigen::VectorXd h = dt::random_vector(8, rng);
    const auto base_pred = ds::classify(h, bank).predicted;
    for (double k : {1e-6, 0.3, 7.0, 1e6}) scale = scale && ds::classify(h * k, bank).predicted == base_pred;
  }
  if (!scale) failures.push_back("classify scale");

  std::string detail = failures.empty() ? "permutation exact, TTA err " + fmt("%.1e", tta_err) +
                                              ", abstention monotone, argmax scale-invariant"
                                        : "";
  for (const auto& f : failures) detail += f + "; ";
  return {failures.empty(), detail};
}

Verdict explanation_contract() {
  int seeds_hit = 0;
  bool normalized = true;
  std::string per_seed;
  for (int seed = 0; seed < 10; ++seed) {
    ds::SyntheticSpec spec;
    spec.n_classes = 2;
    spec.videos_per_class = 20;
    spec.segments_per_video = 6;
    spec.mode = ds::SyntheticMode::planted;
    spec.seed = 100 + static_cast<std::uint64_t>(seed);
    const auto data = ds::generate_synthetic_dataset(spec);
    const auto kind = ds::synthetic_task_kind(2);
    const auto cfg = training_config(30, static_cast<std::uint64_t>(seed));
    const auto split = ds::make_monte_carlo_split(data.manifest.video_ids(), 0, static_cast<std::uint64_t>(seed));
    const auto ck = ds::train_fold(data.manifest, data.features, split, kind, cfg);
    const std::set<std::string> test(split.test_video_ids.begin(), split.test_video_ids.end());
    int hits = 0, n = 0;
    for (const auto& p : data.planted) {
      if (!test.count(p.video_id)) continue;
      double end = 0.0;
      for (const auto& s : ds::labeled_segments(data.manifest, kind)) {
        if (s.video_id == p.video_id && s.start_s == p.segment_start_s) end = s.end_s;
      }
      const auto e = ds::explain(ck, data.features, p.video_id, {p.segment_start_s, end}, 30.0);
      normalized = normalized && e.weights.minCoeff() >= 0.0 && std::abs(e.weights.sum() - 1.0) <= 1e-6;
      Eigen::Index top = 0;
      e.weights.maxCoeff(&top);
      hits += std::abs(e.timestamps[static_cast<std::size_t>(top)] - p.timestamp) < 1e-9;
      ++n;
    }
    seeds_hit += 2 * hits > n;
    per_seed += fmt(" %d/%d", hits, n);
  }
  return {normalized && seeds_hit >= 8,
          fmt("weights %s; planted frame top in %d/10 seeds (hits per seed:%s)",
              normalized ? "normalized" : "NOT normalized", seeds_hit, per_seed.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<const char*, std::function<Verdict()>>> criteria{
      {1, {"equation fidelity", equation_fidelity}},
      {2, {"gradient suite", gradient_suite}},
      {3, {"merge worked example", merge_example}},
      {4, {"end-to-end synthetic learning", end_to_end}},
      {5, {"ablation ordering", ablation_ordering}},
      {6, {"AUC oracle equivalence", auc_oracle}},
      {7, {"split integrity", split_integrity}},
      {8, {"invariance suite", invariances}},
      {9, {"explanation contract", explanation_contract}},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& [id, entry] : criteria) {
    if (!selected.empty() && !selected.count(id)) continue;
    Verdict v;
    const auto t0 = Clock::now();
    try {
      v = entry.second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("criterion %d %-30s %s  %s  [%.1fs]\n", id, entry.first, v.pass ? "PASS" : "FAIL",
                v.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
