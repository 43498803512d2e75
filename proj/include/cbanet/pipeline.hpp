#pragma once
// End-to-end orchestration: sessions -> labels -> features -> windows ->
// split -> SMOTE -> normalization -> training -> evaluation, plus the
// window/horizon sensitivity sweep.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cbanet/common.hpp"
#include "cbanet/evaluation.hpp"
#include "cbanet/event_labeller.hpp"
#include "cbanet/imbalance.hpp"
#include "cbanet/model.hpp"
#include "cbanet/synthetic.hpp"
#include "cbanet/training.hpp"
#include "cbanet/windowing.hpp"

namespace cbanet {

// Labels, featurizes and segments every session, appended in order.
WindowSet windows_from_sessions(const std::vector<TelemetrySession>& sessions,
                                const LabellerConfig& lab_cfg, const WindowConfig& win_cfg);

enum class SplitProtocol { Stratified, GroupedSession, GroupedDriver, LeaveOneDriverOut };

struct PipelineSplitConfig {
  SplitProtocol protocol = SplitProtocol::GroupedSession;
  SplitRatios ratios{};
  int lodo_fold = 0;  // which leave-one-driver-out fold to run
};

DataSplit make_split(const WindowSet& windows, const PipelineSplitConfig& cfg, uint64_t seed);

// Next multiple of four, so the two halving pools divide evenly.
int padded_rows(int rows);

struct PreparedData {
  WindowSet train;  // normalized, SMOTE-augmented, padded
  WindowSet val;    // normalized, padded
  WindowSet test;   // raw; evaluate() applies the stats itself
  NormStats stats;  // fit on the raw train windows only
  std::array<size_t, kNumClasses> train_counts{};  // after oversampling
};

// Stats come from the train subset before oversampling; SMOTE then
// interpolates in normalized space, where neighbor distances are not
// dominated by the large-scale channels. pad_rows_to == 0 keeps the native
// rows, otherwise train/val windows gain trailing zero rows (zero is the
// per-channel mean after normalization). smote == nullptr skips oversampling.
PreparedData prepare_data(const WindowSet& windows, const DataSplit& split,
                          const SmoteConfig* smote, int pad_rows_to);

struct CellConfig {
  PipelineSplitConfig split;
  SmoteConfig smote;
  bool use_smote = true;
  bool use_class_weights = true;
  CBANetConfig model;   // input_rows/input_channels are set from the data
  LossConfig loss;      // alpha is overwritten when use_class_weights
  OptimizerConfig opt;  // seed is overwritten with the cell seed
  ScheduleConfig sched;
};

struct CellResult {
  DataSplit split;
  NormStats stats;
  std::array<size_t, kNumClasses> train_counts{};
  LossConfig loss_used;
  TrainResult trained;
  EvaluationResult eval;
};

// One full experiment: split, prepare, train, evaluate on the test subset.
// Every random stage derives from `seed`.
CellResult run_cell(const WindowSet& windows, const CellConfig& cfg, uint64_t seed);

struct SweepRow {
  double window_s = 0.0;
  double horizon_s = 0.0;
  uint64_t seed = 0;
  double macro_f2 = 0.0;
};

struct SweepConfig {
  std::vector<double> windows_s{1.0, 2.0, 3.0, 4.0, 5.0};
  std::vector<double> horizons_s{0.0, 0.5, 1.0, 1.5, 2.0};
  std::vector<uint64_t> seeds{1};
  int max_epochs = 50;  // reduced budget per cell
};

// Re-windows, re-splits and re-trains per (W, H, seed); rows come out in
// grid order (W outer, then H, then seed).
std::vector<SweepRow> sweep_window_horizon(const SyntheticDataset& data,
                                           const LabellerConfig& lab_cfg,
                                           const WindowConfig& win_cfg, const CellConfig& cell,
                                           const SweepConfig& sweep);

void save_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);

}  // namespace cbanet
