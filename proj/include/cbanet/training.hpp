#pragma once
// Loss, optimizer and the training loop. Everything is deterministic for a
// fixed seed: epoch shuffles and dropout masks derive from the master seed,
// and all reductions run in fixed order.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cbanet/model.hpp"
#include "cbanet/windowing.hpp"

namespace cbanet {

struct LossConfig {
  std::array<double, kNumClasses> alpha{1.0, 1.0, 1.0, 1.0};
  std::array<double, kNumClasses> gamma{0.0, 0.0, 0.0, 0.0};  // 0 = weighted CE
};

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;  // decoupled
  int batch_size = 64;
  int max_epochs = 300;
  uint64_t seed = 0;  // master seed for shuffles and dropout
};

struct ScheduleConfig {
  int early_stop_patience = 20;
  int plateau_patience = 10;
  double plateau_factor = 0.5;
  double min_lr = 1e-5;
};

struct FocalResult {
  double loss = 0.0;
  Mat dlogits;
};

// probs are softmax outputs (rows sum to 1); the returned gradient is w.r.t.
// the pre-softmax logits, averaged over the batch.
FocalResult focal_loss(const Mat& probs, const std::vector<int>& labels, const LossConfig& cfg);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  int64_t t = 0;
};

// One decoupled-weight-decay Adam update over params[0..n). lr is the current
// (possibly scheduler-reduced) learning rate.
void adamw_step(double* params, const double* grads, size_t n, AdamState& state,
                const OptimizerConfig& cfg, double lr);

// Plateau + early-stop logic, monitoring validation loss.
class TrainScheduler {
 public:
  TrainScheduler(const ScheduleConfig& cfg, double initial_lr);

  struct Decision {
    bool improved = false;
    bool stop = false;
  };
  Decision observe(double val_loss);

  double lr() const { return lr_; }
  double best() const { return best_; }

 private:
  ScheduleConfig cfg_;
  double lr_;
  double best_;
  int since_improve_ = 0;
  int since_plateau_ = 0;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;      // rate used for this epoch's updates
  double seconds = 0.0;  // wall time, the one non-deterministic column
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;  // 1-based index into epochs
  double best_val_loss = 0.0;
};

struct TrainResult {
  ModelParameters best;
  TrainHistory history;
};

// train_set/val_set must already be normalized with train-fit stats (SMOTE,
// if any, applied to the train set only).
TrainResult train(const ModelParameters& model, const WindowSet& train_set,
                  const WindowSet& val_set, const LossConfig& loss_cfg,
                  const OptimizerConfig& opt_cfg, const ScheduleConfig& sched_cfg);

void save_history_csv(const TrainHistory& history, const std::string& path);

}  // namespace cbanet
