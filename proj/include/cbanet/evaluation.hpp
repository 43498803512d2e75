#pragma once
// Metrics with recall-weighted F-scores, one-vs-rest ROC-AUC and latency
// benchmarking. All metrics are pure functions of predictions and labels.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cbanet/features.hpp"
#include "cbanet/model.hpp"
#include "cbanet/windowing.hpp"

namespace cbanet {

struct ConfusionMatrix {
  std::array<std::array<int64_t, kNumClasses>, kNumClasses> counts{};  // [true][pred]

  int64_t total() const {
    int64_t t = 0;
    for (const auto& row : counts)
      for (int64_t v : row) t += v;
    return t;
  }
  int64_t trace() const {
    int64_t t = 0;
    for (int c = 0; c < kNumClasses; ++c) t += counts[c][c];
    return t;
  }
};

ConfusionMatrix confusion_matrix(const std::vector<int>& preds, const std::vector<int>& labels);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double f2 = 0.0;
  int64_t support = 0;
  bool undefined = false;  // 0/0 fired somewhere for this class
};

struct FbetaReport {
  double beta = 2.0;
  std::array<ClassMetrics, kNumClasses> per_class;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double macro_f2 = 0.0;
  double weighted_f2 = 0.0;
};

FbetaReport fbeta(const ConfusionMatrix& cm, double beta = 2.0);

struct AucReport {
  std::array<double, kNumClasses> per_class{};  // 0 where undefined
  std::array<bool, kNumClasses> defined{};
  double macro = 0.0;
};

// One-vs-rest AUC with midrank tie handling. Classes without both positives
// and negatives in the truth are excluded from the macro mean and flagged;
// if no class is scoreable the truth is single-class and an error is raised.
AucReport roc_auc_ovr(const Mat& probs, const std::vector<int>& labels);

struct MetricsReport {
  int64_t windows = 0;
  FbetaReport scores;
  AucReport auc;
};

struct EvaluationResult {
  MetricsReport report;
  ConfusionMatrix confusion;
  Mat probs;                // one row per window
  std::vector<int> labels;  // aligned with probs rows
};

// Applies the train-fit normalization to a copy of the windows, runs the
// model in eval mode and reports argmax decisions.
EvaluationResult evaluate(ModelParameters& model, const WindowSet& windows, const NormStats& stats,
                          int batch_size = 64);

struct LatencyStats {
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  int n = 0;
  int warmup = 0;
};

// Batch-1 eval-mode forwards over synthetic inputs; warmup excluded.
LatencyStats latency_benchmark(ModelParameters& model, int n_windows, int warmup, uint64_t seed);

void save_report_json(const MetricsReport& report, const ConfusionMatrix& cm,
                      const std::string& path);
void save_confusion_csv(const ConfusionMatrix& cm, const std::string& path);
// CSV dump `window_id,label,p0,p1,p2,p3` for independent recomputation.
void save_probability_csv(const Mat& probs, const std::vector<int>& labels,
                          const std::string& path);

}  // namespace cbanet
