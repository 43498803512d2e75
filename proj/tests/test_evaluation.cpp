#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "cbanet/evaluation.hpp"
#include "doctest.h"

using namespace cbanet;

namespace {

// All-pairs AUC oracle: fraction of (positive, negative) pairs ranked
// correctly, ties counting one half.
double auc_pairs(const Mat& probs, const std::vector<int>& labels, int cls) {
  double wins = 0.0;
  int64_t pairs = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != cls) continue;
    for (size_t j = 0; j < labels.size(); ++j) {
      if (labels[j] == cls) continue;
      ++pairs;
      const double d = probs(static_cast<int>(i), cls) - probs(static_cast<int>(j), cls);
      if (d > 0.0)
        wins += 1.0;
      else if (d == 0.0)
        wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

CBANetConfig eval_config() {
  CBANetConfig c;
  c.input_rows = 8;
  c.input_channels = kNumChannels;
  c.conv1_filters = 4;
  c.conv1_kernel = 3;
  c.conv2_filters = 6;
  c.conv2_kernel = 3;
  c.lstm1_hidden = 4;
  c.lstm2_hidden = 3;
  c.dense1_units = 8;
  c.dense2_units = 6;
  return c;
}

WindowSet random_windows(int n, int rows, uint64_t seed, bool multi_class = true) {
  WindowSet ws;
  ws.rows = rows;
  ws.channels = kNumChannels;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int i = 0; i < n; ++i) {
    for (int v = 0; v < rows * kNumChannels; ++v) ws.features.push_back(uni(rng));
    ws.labels.push_back(static_cast<EventClass>(multi_class ? rng() % 4 : 0));
    ws.session_ids.push_back("s");
    ws.driver_ids.push_back("d");
    ws.start_t.push_back(0.0);
    ws.synthetic.push_back(0);
    ws.provenance.push_back({});
  }
  return ws;
}

NormStats identity_stats() {
  NormStats st;
  for (int c = 0; c < kNumChannels; ++c) {
    st.mean[c] = 0.0;
    st.stddev[c] = 1.0;
  }
  return st;
}

}  // namespace

TEST_CASE("confusion matrix basics") {
  CHECK(confusion_matrix({}, {}).total() == 0);

  ConfusionMatrix perfect = confusion_matrix({0, 1, 2, 3, 3}, {0, 1, 2, 3, 3});
  CHECK(perfect.trace() == 5);
  CHECK(perfect.total() == 5);

  std::mt19937_64 rng(41);
  std::vector<int> preds(500), labels(500);
  for (int i = 0; i < 500; ++i) {
    preds[i] = static_cast<int>(rng() % 4);
    labels[i] = static_cast<int>(rng() % 4);
  }
  ConfusionMatrix cm = confusion_matrix(preds, labels);
  CHECK(cm.total() == 500);
  int64_t recount[4][4] = {};
  for (int i = 0; i < 500; ++i) ++recount[labels[i]][preds[i]];
  for (int t = 0; t < 4; ++t)
    for (int p = 0; p < 4; ++p) CHECK(cm.counts[t][p] == recount[t][p]);

  CHECK_THROWS_AS(confusion_matrix({0, 1}, {0}), Error);
  CHECK_THROWS_AS(confusion_matrix({5}, {0}), Error);
}

TEST_CASE("fbeta worked example and conventions") {
  // Perfect diagonal: every score is 1.
  ConfusionMatrix perfect;
  for (int c = 0; c < 4; ++c) perfect.counts[c][c] = 5;
  FbetaReport rep = fbeta(perfect, 2.0);
  CHECK(rep.accuracy == 1.0);
  for (const auto& m : rep.per_class) {
    CHECK(m.f2 == doctest::Approx(1.0));
    CHECK_FALSE(m.undefined);
  }
  CHECK(rep.macro_f2 == doctest::Approx(1.0));
  CHECK(rep.weighted_f2 == doctest::Approx(1.0));

  // TP=8, FN=2, FP=3 for class 0: P=8/11, R=0.8, F2=0.7843.
  ConfusionMatrix cm;
  cm.counts[0][0] = 8;
  cm.counts[0][1] = 2;
  cm.counts[1][0] = 3;
  cm.counts[1][1] = 7;
  cm.counts[2][2] = 4;
  cm.counts[3][3] = 4;
  FbetaReport r2 = fbeta(cm, 2.0);
  CHECK(r2.per_class[0].precision == doctest::Approx(8.0 / 11.0).epsilon(1e-12));
  CHECK(r2.per_class[0].recall == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(r2.per_class[0].f2 == doctest::Approx(0.7843).epsilon(1e-4));
  CHECK(r2.per_class[0].support == 10);

  // Accuracy equals trace over total.
  CHECK(r2.accuracy == doctest::Approx(static_cast<double>(cm.trace()) / cm.total()));

  // Weighted F2 against an independent recomputation.
  double num = 0.0, den = 0.0;
  for (const auto& m : r2.per_class) {
    num += static_cast<double>(m.support) * m.f2;
    den += static_cast<double>(m.support);
  }
  CHECK(r2.weighted_f2 == doctest::Approx(num / den).epsilon(1e-12));

  // A class absent from truth and predictions scores 0 under the 0/0 rule.
  ConfusionMatrix sparse;
  sparse.counts[0][0] = 10;
  sparse.counts[1][1] = 5;
  FbetaReport r3 = fbeta(sparse, 2.0);
  CHECK(r3.per_class[2].f2 == 0.0);
  CHECK(r3.per_class[2].undefined);
  CHECK(r3.per_class[3].undefined);
  CHECK(r3.accuracy == 1.0);

  CHECK_THROWS_AS(fbeta(sparse, 0.0), Error);
}

TEST_CASE("roc auc one-vs-rest") {
  SUBCASE("perfect separation scores 1") {
    Mat probs(4, 4);
    std::vector<int> labels = {0, 0, 1, 1};
    probs(0, 0) = 0.9;
    probs(1, 0) = 0.8;
    probs(2, 0) = 0.2;
    probs(3, 0) = 0.1;
    for (int i = 0; i < 4; ++i) probs(i, 1) = 1.0 - probs(i, 0);
    AucReport rep = roc_auc_ovr(probs, labels);
    CHECK(rep.defined[0]);
    CHECK(rep.per_class[0] == doctest::Approx(1.0));
    CHECK(rep.per_class[1] == doctest::Approx(1.0));
    CHECK_FALSE(rep.defined[2]);
    CHECK(rep.macro == doctest::Approx(1.0));
  }

  SUBCASE("identical scores give exactly one half") {
    Mat probs(6, 4);
    for (int i = 0; i < 6; ++i)
      for (int c = 0; c < 4; ++c) probs(i, c) = 0.25;
    std::vector<int> labels = {0, 1, 0, 1, 2, 3};
    AucReport rep = roc_auc_ovr(probs, labels);
    for (int c = 0; c < 4; ++c) CHECK(rep.per_class[c] == 0.5);
    CHECK(rep.macro == 0.5);
  }

  SUBCASE("matches the all-pairs oracle on random data with ties") {
    std::mt19937_64 rng(42);
    const int n = 200;
    Mat probs(n, 4);
    std::vector<int> labels(n);
    // Quantized scores force plenty of ties.
    for (int i = 0; i < n; ++i) {
      double row[4], sum = 0.0;
      for (int c = 0; c < 4; ++c) {
        row[c] = 0.05 * static_cast<double>(1 + rng() % 20);
        sum += row[c];
      }
      for (int c = 0; c < 4; ++c) probs(i, c) = row[c] / sum;
      labels[i] = static_cast<int>(rng() % 4);
    }
    AucReport rep = roc_auc_ovr(probs, labels);
    for (int c = 0; c < 4; ++c) {
      REQUIRE(rep.defined[c]);
      CHECK(std::abs(rep.per_class[c] - auc_pairs(probs, labels, c)) <= 1e-12);
    }
  }

  SUBCASE("invariant under strictly monotone score transforms") {
    std::mt19937_64 rng(43);
    const int n = 60;
    Mat probs(n, 4), warped(n, 4);
    std::vector<int> labels(n);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < 4; ++c) {
        probs(i, c) = uni(rng);
        warped(i, c) = std::exp(3.0 * probs(i, c)) - 0.5;  // strictly increasing
      }
      labels[i] = static_cast<int>(rng() % 4);
    }
    AucReport a = roc_auc_ovr(probs, labels);
    AucReport b = roc_auc_ovr(warped, labels);
    for (int c = 0; c < 4; ++c) CHECK(a.per_class[c] == doctest::Approx(b.per_class[c]).epsilon(1e-12));
  }

  SUBCASE("single-class truth is an error") {
    Mat probs(3, 4);
    for (int i = 0; i < 3; ++i) probs(i, 2) = 1.0;
    try {
      roc_auc_ovr(probs, {2, 2, 2});
      FAIL("expected SingleClassTruth");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::SingleClassTruth);
    }
  }
}

TEST_CASE("evaluate produces a self-consistent report") {
  ModelParameters model = build_model(eval_config(), 51);
  WindowSet ws = random_windows(40, 8, 52);
  NormStats stats = identity_stats();

  EvaluationResult res = evaluate(model, ws, stats, 16);
  CHECK(res.report.windows == 40);
  CHECK(res.confusion.total() == 40);
  REQUIRE(res.probs.rows == 40);

  // Independent recomputation from the dumped probabilities.
  std::vector<int> preds(40);
  for (int i = 0; i < 40; ++i) {
    int arg = 0;
    double sum = 0.0;
    for (int c = 0; c < 4; ++c) {
      sum += res.probs(i, c);
      if (res.probs(i, c) > res.probs(i, arg)) arg = c;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    preds[i] = arg;
  }
  ConfusionMatrix cm = confusion_matrix(preds, res.labels);
  for (int t = 0; t < 4; ++t)
    for (int p = 0; p < 4; ++p) CHECK(cm.counts[t][p] == res.confusion.counts[t][p]);
  FbetaReport scores = fbeta(cm, 2.0);
  CHECK(std::abs(scores.macro_f2 - res.report.scores.macro_f2) <= 1e-9);
  CHECK(std::abs(scores.weighted_f2 - res.report.scores.weighted_f2) <= 1e-9);
  CHECK(std::abs(scores.accuracy - res.report.scores.accuracy) <= 1e-9);
  for (int c = 0; c < 4; ++c) {
    if (!res.report.auc.defined[c]) continue;
    CHECK(std::abs(res.report.auc.per_class[c] - auc_pairs(res.probs, res.labels, c)) <= 1e-9);
  }

  // Pure function: identical reports on a second run.
  EvaluationResult res2 = evaluate(model, ws, stats, 16);
  CHECK(res2.probs.d == res.probs.d);
  CHECK(res2.report.scores.macro_f2 == res.report.scores.macro_f2);

  // The normalization stats are actually applied.
  NormStats shifted = stats;
  shifted.mean[0] = 0.5;
  EvaluationResult res3 = evaluate(model, ws, shifted, 16);
  CHECK(res3.probs.d != res.probs.d);

  // Degenerate truth: report survives with AUC flagged undefined.
  WindowSet normal_only = random_windows(12, 8, 53, false);
  EvaluationResult res4 = evaluate(model, normal_only, stats, 16);
  for (int c = 0; c < 4; ++c) CHECK_FALSE(res4.report.auc.defined[c]);
  CHECK(res4.report.auc.macro == 0.0);

  WindowSet empty;
  empty.rows = 8;
  CHECK_THROWS_AS(evaluate(model, empty, stats, 16), Error);
}

TEST_CASE("report and probability files round-trip the numbers") {
  ModelParameters model = build_model(eval_config(), 54);
  WindowSet ws = random_windows(20, 8, 55);
  EvaluationResult res = evaluate(model, ws, identity_stats(), 8);

  save_report_json(res.report, res.confusion, "report_test.json");
  save_confusion_csv(res.confusion, "confusion_test.csv");
  save_probability_csv(res.probs, res.labels, "probs_test.csv");

  std::ifstream rep("report_test.json");
  REQUIRE(rep.good());
  std::string text((std::istreambuf_iterator<char>(rep)), std::istreambuf_iterator<char>());
  CHECK(text.find("macro_f2") != std::string::npos);
  CHECK(text.find("confusion") != std::string::npos);

  std::ifstream probs("probs_test.csv");
  std::string line;
  REQUIRE(std::getline(probs, line));
  CHECK(line == "window_id,label,p0,p1,p2,p3");
  int rows = 0;
  double p[4];
  while (std::getline(probs, line)) {
    int id, label;
    REQUIRE(std::sscanf(line.c_str(), "%d,%d,%lf,%lf,%lf,%lf", &id, &label, &p[0], &p[1], &p[2],
                        &p[3]) == 6);
    CHECK(id == rows);
    for (int c = 0; c < 4; ++c) CHECK(p[c] == res.probs(rows, c));
    ++rows;
  }
  CHECK(rows == 20);

  std::remove("report_test.json");
  std::remove("confusion_test.csv");
  std::remove("probs_test.csv");
}

TEST_CASE("latency benchmark order statistics") {
  ModelParameters model = build_model(eval_config(), 56);
  LatencyStats st = latency_benchmark(model, 100, 10, 1);
  CHECK(st.n == 100);
  CHECK(st.warmup == 10);
  CHECK(st.p50_ms > 0.0);
  CHECK(st.p95_ms >= st.p50_ms);
  CHECK(st.mean_ms > 0.0);

  // Steady state: doubling the sample count should not move the mean much.
  LatencyStats st2 = latency_benchmark(model, 200, 10, 1);
  const double ratio = st2.mean_ms / st.mean_ms;
  CHECK(ratio > 0.5);
  CHECK(ratio < 1.6);

  CHECK_THROWS_AS(latency_benchmark(model, 50, 10, 1), Error);
  CHECK_THROWS_AS(latency_benchmark(model, 100, 5, 1), Error);
}
