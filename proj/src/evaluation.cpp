#include "cbanet/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "json.hpp"

namespace cbanet {

using nlohmann::json;

ConfusionMatrix confusion_matrix(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.size() != labels.size())
    throw Error(ErrorCode::LengthMismatch, std::to_string(preds.size()) + " predictions vs " +
                                               std::to_string(labels.size()) + " labels");
  ConfusionMatrix cm;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= kNumClasses || preds[i] < 0 || preds[i] >= kNumClasses)
      throw Error(ErrorCode::LabelOutOfRange, "pair (" + std::to_string(labels[i]) + ", " +
                                                  std::to_string(preds[i]) + ") at row " +
                                                  std::to_string(i));
    ++cm.counts[labels[i]][preds[i]];
  }
  return cm;
}

FbetaReport fbeta(const ConfusionMatrix& cm, double beta) {
  if (beta <= 0.0) throw Error(ErrorCode::InvalidConfig, "beta must be positive");
  FbetaReport rep;
  rep.beta = beta;
  const double b2 = beta * beta;
  const int64_t total = cm.total();
  rep.accuracy = total > 0 ? static_cast<double>(cm.trace()) / total : 0.0;

  double macro_f1 = 0.0, macro_f2 = 0.0, weighted = 0.0;
  int64_t support_sum = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    int64_t tp = cm.counts[c][c], fp = 0, fn = 0;
    for (int o = 0; o < kNumClasses; ++o) {
      if (o == c) continue;
      fp += cm.counts[o][c];
      fn += cm.counts[c][o];
    }
    ClassMetrics& m = rep.per_class[c];
    m.support = tp + fn;
    auto ratio = [&m](int64_t num, int64_t den) {
      if (den == 0) {
        m.undefined = true;
        return 0.0;
      }
      return static_cast<double>(num) / den;
    };
    m.precision = ratio(tp, tp + fp);
    m.recall = ratio(tp, tp + fn);
    auto fscore = [&](double bb) {
      const double den = bb * m.precision + m.recall;
      if (den == 0.0) {
        m.undefined = true;
        return 0.0;
      }
      return (1.0 + bb) * m.precision * m.recall / den;
    };
    m.f1 = fscore(1.0);
    m.f2 = fscore(b2);
    macro_f1 += m.f1;
    macro_f2 += m.f2;
    weighted += static_cast<double>(m.support) * m.f2;
    support_sum += m.support;
  }
  rep.macro_f1 = macro_f1 / kNumClasses;
  rep.macro_f2 = macro_f2 / kNumClasses;
  rep.weighted_f2 = support_sum > 0 ? weighted / support_sum : 0.0;
  return rep;
}

AucReport roc_auc_ovr(const Mat& probs, const std::vector<int>& labels) {
  if (probs.rows != static_cast<int>(labels.size()))
    throw Error(ErrorCode::LengthMismatch, std::to_string(probs.rows) + " probability rows vs " +
                                               std::to_string(labels.size()) + " labels");
  if (probs.cols != kNumClasses)
    throw Error(ErrorCode::ShapeMismatch, "probabilities must have 4 columns");
  const int n = probs.rows;
  for (int l : labels)
    if (l < 0 || l >= kNumClasses)
      throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(l));

  AucReport rep;
  int scoreable = 0;
  double sum = 0.0;
  std::vector<int> idx(n);
  std::vector<double> rank(n);
  for (int c = 0; c < kNumClasses; ++c) {
    int64_t n_pos = 0;
    for (int l : labels)
      if (l == c) ++n_pos;
    const int64_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
      rep.defined[c] = false;
      continue;
    }

    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](int a, int b) { return probs(a, c) < probs(b, c); });
    // Midranks: tied scores share the average of their 1-based positions.
    for (int i = 0; i < n;) {
      int j = i;
      while (j < n && probs(idx[j], c) == probs(idx[i], c)) ++j;
      const double mid = 0.5 * static_cast<double>(i + 1 + j);  // mean of i+1 .. j
      for (int k = i; k < j; ++k) rank[idx[k]] = mid;
      i = j;
    }
    double rank_pos = 0.0;
    for (int i = 0; i < n; ++i)
      if (labels[i] == c) rank_pos += rank[i];
    const double auc = (rank_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1)) /
                       (static_cast<double>(n_pos) * static_cast<double>(n_neg));
    rep.per_class[c] = auc;
    rep.defined[c] = true;
    sum += auc;
    ++scoreable;
  }
  if (scoreable == 0)
    throw Error(ErrorCode::SingleClassTruth, "no class has both positives and negatives");
  rep.macro = sum / scoreable;
  return rep;
}

EvaluationResult evaluate(ModelParameters& model, const WindowSet& windows, const NormStats& stats,
                          int batch_size) {
  if (windows.size() == 0) throw Error(ErrorCode::EmptyTestSet, "no windows to evaluate");
  if (batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch_size must be positive");

  WindowSet normed = windows;
  apply_normalizer_windows(normed, stats);
  // Models padded beyond the native window length take trailing zero rows
  // (zero is the per-channel mean after normalization).
  const int in_rows = std::max(normed.rows, model.config.input_rows);

  EvaluationResult out;
  const size_t n = normed.size();
  out.probs = Mat(static_cast<int>(n), kNumClasses);
  out.labels.resize(n);
  std::vector<int> preds(n);
  std::mt19937_64 rng(0);  // eval mode draws nothing
  ModelCache cache;
  for (size_t begin = 0; begin < n; begin += batch_size) {
    const size_t end = std::min(n, begin + batch_size);
    Seq x(static_cast<int>(end - begin), in_rows, normed.channels);
    for (size_t w = begin; w < end; ++w) {
      std::copy(normed.window_data(w), normed.window_data(w) + normed.window_values(),
                x.step(static_cast<int>(w - begin), 0));
    }
    ForwardResult fwd = model_forward(model, x, RunMode::Eval, rng, cache);
    for (size_t w = begin; w < end; ++w) {
      const int r = static_cast<int>(w - begin);
      int arg = 0;
      for (int c = 0; c < kNumClasses; ++c) {
        out.probs(static_cast<int>(w), c) = fwd.probs(r, c);
        if (fwd.probs(r, c) > fwd.probs(r, arg)) arg = c;
      }
      preds[w] = arg;
      out.labels[w] = static_cast<int>(windows.labels[w]);
    }
  }

  out.confusion = confusion_matrix(preds, out.labels);
  out.report.windows = static_cast<int64_t>(n);
  out.report.scores = fbeta(out.confusion, 2.0);
  try {
    out.report.auc = roc_auc_ovr(out.probs, out.labels);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::SingleClassTruth) throw;
    out.report.auc = AucReport{};  // single-class truth: every AUC stays flagged undefined
  }
  return out;
}

LatencyStats latency_benchmark(ModelParameters& model, int n_windows, int warmup, uint64_t seed) {
  if (n_windows < 100) throw Error(ErrorCode::InvalidConfig, "latency runs need n >= 100");
  if (warmup < 10) throw Error(ErrorCode::InvalidConfig, "latency runs need warmup >= 10");

  std::mt19937_64 data_rng(derive_seed(seed, SeedRole::Bench));
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::mt19937_64 fwd_rng(0);
  ModelCache cache;
  Seq x(1, model.config.input_rows, model.config.input_channels);

  std::vector<double> ms(static_cast<size_t>(n_windows));
  for (int i = 0; i < warmup + n_windows; ++i) {
    for (auto& v : x.d) v = uni(data_rng);
    const auto t0 = std::chrono::steady_clock::now();
    model_forward(model, x, RunMode::Eval, fwd_rng, cache);
    const auto t1 = std::chrono::steady_clock::now();
    if (i >= warmup)
      ms[i - warmup] = std::chrono::duration<double, std::milli>(t1 - t0).count();
  }

  LatencyStats st;
  st.n = n_windows;
  st.warmup = warmup;
  st.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / n_windows;
  std::sort(ms.begin(), ms.end());
  auto nearest_rank = [&](double q) {
    const size_t r = static_cast<size_t>(std::ceil(q * n_windows));
    return ms[std::min(ms.size() - 1, std::max<size_t>(1, r) - 1)];
  };
  st.p50_ms = nearest_rank(0.50);
  st.p95_ms = nearest_rank(0.95);
  return st;
}

namespace {

json report_to_json(const MetricsReport& report, const ConfusionMatrix& cm) {
  json j;
  j["windows"] = report.windows;
  j["accuracy"] = report.scores.accuracy;
  j["macro_f1"] = report.scores.macro_f1;
  j["macro_f2"] = report.scores.macro_f2;
  j["weighted_f2"] = report.scores.weighted_f2;
  json per = json::array();
  for (int c = 0; c < kNumClasses; ++c) {
    const ClassMetrics& m = report.scores.per_class[c];
    per.push_back({{"class", class_name(static_cast<EventClass>(c))},
                   {"precision", m.precision},
                   {"recall", m.recall},
                   {"f1", m.f1},
                   {"f2", m.f2},
                   {"support", m.support},
                   {"undefined", m.undefined}});
  }
  j["per_class"] = std::move(per);
  json auc;
  auc["macro"] = report.auc.macro;
  json auc_per = json::array();
  for (int c = 0; c < kNumClasses; ++c) {
    auc_per.push_back({{"class", class_name(static_cast<EventClass>(c))},
                       {"auc", report.auc.per_class[c]},
                       {"defined", report.auc.defined[c]}});
  }
  auc["per_class"] = std::move(auc_per);
  j["roc_auc"] = std::move(auc);
  json rows = json::array();
  for (int t = 0; t < kNumClasses; ++t) {
    json row = json::array();
    for (int p = 0; p < kNumClasses; ++p) row.push_back(cm.counts[t][p]);
    rows.push_back(std::move(row));
  }
  j["confusion"] = std::move(rows);
  return j;
}

}  // namespace

void save_report_json(const MetricsReport& report, const ConfusionMatrix& cm,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << report_to_json(report, cm).dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path);
}

void save_confusion_csv(const ConfusionMatrix& cm, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << "true_class";
  for (int p = 0; p < kNumClasses; ++p) out << ",pred_" << class_name(static_cast<EventClass>(p));
  out << '\n';
  for (int t = 0; t < kNumClasses; ++t) {
    out << class_name(static_cast<EventClass>(t));
    for (int p = 0; p < kNumClasses; ++p) out << ',' << cm.counts[t][p];
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path);
}

void save_probability_csv(const Mat& probs, const std::vector<int>& labels,
                          const std::string& path) {
  if (probs.rows != static_cast<int>(labels.size()))
    throw Error(ErrorCode::LengthMismatch, "probability rows vs labels");
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << "window_id,label,p0,p1,p2,p3\n";
  char buf[160];
  for (int i = 0; i < probs.rows; ++i) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g,%.17g\n", i, labels[i], probs(i, 0),
                  probs(i, 1), probs(i, 2), probs(i, 3));
    out << buf;
  }
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path);
}

}  // namespace cbanet
