#include "cbanet/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace cbanet {

WindowSet windows_from_sessions(const std::vector<TelemetrySession>& sessions,
                                const LabellerConfig& lab_cfg, const WindowConfig& win_cfg) {
  WindowSet all;
  for (const TelemetrySession& session : sessions) {
    const FeatureFrame frame = engineer_features(session);
    const LabelSequence labels = label_session(session, lab_cfg);
    WindowSet ws = segment(frame, labels, win_cfg, session.sample_rate_hz, session.session_id,
                           session.driver_id);
    append(all, ws);
  }
  return all;
}

DataSplit make_split(const WindowSet& windows, const PipelineSplitConfig& cfg, uint64_t seed) {
  const uint64_t split_seed = derive_seed(seed, SeedRole::Split);
  switch (cfg.protocol) {
    case SplitProtocol::Stratified:
      return split_stratified(windows, cfg.ratios, split_seed);
    case SplitProtocol::GroupedSession:
      return split_grouped(windows, GroupBy::Session, cfg.ratios, split_seed);
    case SplitProtocol::GroupedDriver:
      return split_grouped(windows, GroupBy::Driver, cfg.ratios, split_seed);
    case SplitProtocol::LeaveOneDriverOut: {
      std::vector<DataSplit> folds = leave_one_driver_out(windows);
      if (cfg.lodo_fold < 0 || cfg.lodo_fold >= static_cast<int>(folds.size())) {
        throw Error(ErrorCode::InvalidConfig, "lodo_fold " + std::to_string(cfg.lodo_fold) +
                                                  " out of range, have " +
                                                  std::to_string(folds.size()) + " folds");
      }
      return folds[cfg.lodo_fold];
    }
  }
  throw Error(ErrorCode::InvalidConfig, "unknown split protocol");
}

int padded_rows(int rows) { return ((rows + 3) / 4) * 4; }

namespace {

void pad_rows(WindowSet& ws, int target_rows) {
  if (target_rows == ws.rows) return;
  const size_t n = ws.size();
  const size_t old_vals = ws.window_values();
  const size_t new_vals = static_cast<size_t>(target_rows) * ws.channels;
  std::vector<double> padded(n * new_vals, 0.0);
  for (size_t w = 0; w < n; ++w) {
    const double* src = ws.features.data() + w * old_vals;
    std::copy(src, src + old_vals, padded.data() + w * new_vals);
  }
  ws.features = std::move(padded);
  ws.rows = target_rows;
}

}  // namespace

PreparedData prepare_data(const WindowSet& windows, const DataSplit& split,
                          const SmoteConfig* smote, int pad_rows_to) {
  if (pad_rows_to != 0 && pad_rows_to < windows.rows) {
    throw Error(ErrorCode::InvalidConfig, "pad_rows_to " + std::to_string(pad_rows_to) +
                                              " is smaller than the window rows " +
                                              std::to_string(windows.rows));
  }

  PreparedData out;
  out.stats = fit_normalizer_windows(windows, split.train);

  out.train = subset(windows, split.train, "train");
  apply_normalizer_windows(out.train, out.stats);
  if (smote != nullptr) out.train = smote_oversample(out.train, *smote);
  out.train_counts = class_counts(out.train);

  out.val = subset(windows, split.val, "val");
  apply_normalizer_windows(out.val, out.stats);

  out.test = subset(windows, split.test, "test");

  if (pad_rows_to != 0) {
    pad_rows(out.train, pad_rows_to);
    pad_rows(out.val, pad_rows_to);
  }
  return out;
}

CellResult run_cell(const WindowSet& windows, const CellConfig& cfg, uint64_t seed) {
  CellResult out;
  out.split = make_split(windows, cfg.split, seed);

  SmoteConfig smote = cfg.smote;
  smote.seed = seed;
  const int target_rows = padded_rows(windows.rows);
  const PreparedData prep =
      prepare_data(windows, out.split, cfg.use_smote ? &smote : nullptr, target_rows);
  out.stats = prep.stats;
  out.train_counts = prep.train_counts;

  out.loss_used = cfg.loss;
  if (cfg.use_class_weights) {
    const ClassWeights weights = compute_class_weights(prep.train_counts);
    out.loss_used.alpha = weights.weight;
  }

  CBANetConfig model_cfg = cfg.model;
  model_cfg.input_rows = target_rows;
  model_cfg.input_channels = windows.channels;
  const ModelParameters model = build_model(model_cfg, seed);

  OptimizerConfig opt = cfg.opt;
  opt.seed = seed;
  out.trained = train(model, prep.train, prep.val, out.loss_used, opt, cfg.sched);
  out.eval = evaluate(out.trained.best, prep.test, prep.stats, opt.batch_size);
  return out;
}

std::vector<SweepRow> sweep_window_horizon(const SyntheticDataset& data,
                                           const LabellerConfig& lab_cfg,
                                           const WindowConfig& win_cfg, const CellConfig& cell,
                                           const SweepConfig& sweep) {
  if (sweep.windows_s.empty() || sweep.horizons_s.empty() || sweep.seeds.empty()) {
    throw Error(ErrorCode::InvalidConfig, "sweep needs window sizes, horizons and seeds");
  }
  if (sweep.max_epochs < 1) throw Error(ErrorCode::InvalidConfig, "sweep max_epochs must be >= 1");

  std::vector<SweepRow> rows;
  rows.reserve(sweep.windows_s.size() * sweep.horizons_s.size() * sweep.seeds.size());
  for (double W : sweep.windows_s) {
    for (double H : sweep.horizons_s) {
      WindowConfig wcfg = win_cfg;
      wcfg.window_s = W;
      wcfg.horizon_s = H;
      const WindowSet windows = windows_from_sessions(data.sessions, lab_cfg, wcfg);
      for (uint64_t seed : sweep.seeds) {
        CellConfig run_cfg = cell;
        run_cfg.opt.max_epochs = std::min(run_cfg.opt.max_epochs, sweep.max_epochs);
        const CellResult res = run_cell(windows, run_cfg, seed);
        rows.push_back({W, H, seed, res.eval.report.scores.macro_f2});
      }
    }
  }
  return rows;
}

void save_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << "window_s,horizon_s,seed,macro_f2\n";
  char buf[128];
  for (const SweepRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%llu,%.17g\n", r.window_s, r.horizon_s,
                  static_cast<unsigned long long>(r.seed), r.macro_f2);
    out << buf;
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path);
}

}  // namespace cbanet
