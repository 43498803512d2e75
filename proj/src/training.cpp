#include "cbanet/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

namespace cbanet {

namespace {

constexpr double kProbFloor = 1e-12;

void validate_loss(const LossConfig& cfg) {
  for (int c = 0; c < kNumClasses; ++c) {
    if (cfg.alpha[c] <= 0.0)
      throw Error(ErrorCode::InvalidConfig, "loss alpha must be positive for class " +
                                                std::to_string(c));
    if (cfg.gamma[c] < 0.0)
      throw Error(ErrorCode::InvalidConfig, "loss gamma must be non-negative for class " +
                                                std::to_string(c));
  }
}

}  // namespace

FocalResult focal_loss(const Mat& probs, const std::vector<int>& labels, const LossConfig& cfg) {
  validate_loss(cfg);
  if (probs.rows != static_cast<int>(labels.size()))
    throw Error(ErrorCode::ShapeMismatch, "probs rows " + std::to_string(probs.rows) +
                                              " vs labels " + std::to_string(labels.size()));
  if (probs.cols != kNumClasses)
    throw Error(ErrorCode::ShapeMismatch, "probs must have " + std::to_string(kNumClasses) +
                                              " columns");
  const int N = probs.rows;
  if (N == 0) throw Error(ErrorCode::EmptySplit, "focal loss over an empty batch");

  FocalResult out;
  out.dlogits = Mat(N, kNumClasses);
  double total = 0.0;
  for (int i = 0; i < N; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= kNumClasses)
      throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(y) + " at row " +
                                                  std::to_string(i));
    const double a = cfg.alpha[y];
    const double g = cfg.gamma[y];
    const double pt = std::min(1.0, std::max(kProbFloor, probs(i, y)));
    const double u = 1.0 - pt;
    const double logp = std::log(pt);
    const double mod = std::pow(u, g);
    total += -a * mod * logp;

    // d/dz_j of -a*(1-p_t)^g*log(p_t) with p = softmax(z):
    //   [a*g*p_t*(1-p_t)^(g-1)*log(p_t) - a*(1-p_t)^g] * (1{j=y} - p_j)
    double scale = -a * mod;
    if (g > 0.0 && u > kProbFloor) scale += a * g * pt * std::pow(u, g - 1.0) * logp;
    const double* p = probs.row(i);
    double* dz = out.dlogits.row(i);
    for (int j = 0; j < kNumClasses; ++j) {
      const double indicator = (j == y) ? 1.0 : 0.0;
      dz[j] = scale * (indicator - p[j]) / N;
    }
  }
  out.loss = total / N;
  return out;
}

void adamw_step(double* params, const double* grads, size_t n, AdamState& state,
                const OptimizerConfig& cfg, double lr) {
  if (cfg.lr <= 0.0 || lr <= 0.0) throw Error(ErrorCode::InvalidConfig, "learning rate must be positive");
  if (cfg.beta1 <= 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 <= 0.0 || cfg.beta2 >= 1.0)
    throw Error(ErrorCode::InvalidConfig, "betas must be in (0, 1)");
  if (state.m.empty()) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
  }
  if (state.m.size() != n || state.v.size() != n)
    throw Error(ErrorCode::ShapeMismatch, "optimizer state holds " + std::to_string(state.m.size()) +
                                              " entries, parameters " + std::to_string(n));
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < n; ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * params[i]);
  }
}

TrainScheduler::TrainScheduler(const ScheduleConfig& cfg, double initial_lr)
    : cfg_(cfg), lr_(initial_lr), best_(std::numeric_limits<double>::infinity()) {
  if (cfg.early_stop_patience < 1 || cfg.plateau_patience < 1)
    throw Error(ErrorCode::InvalidConfig, "patience must be at least 1");
  if (cfg.plateau_factor <= 0.0 || cfg.plateau_factor >= 1.0)
    throw Error(ErrorCode::InvalidConfig, "plateau_factor must be in (0, 1)");
  if (cfg.min_lr <= 0.0 || initial_lr < cfg.min_lr)
    throw Error(ErrorCode::InvalidConfig, "need 0 < min_lr <= initial lr");
}

TrainScheduler::Decision TrainScheduler::observe(double val_loss) {
  Decision d;
  if (val_loss < best_) {
    best_ = val_loss;
    since_improve_ = 0;
    since_plateau_ = 0;
    d.improved = true;
  } else {
    ++since_improve_;
    ++since_plateau_;
    if (since_plateau_ >= cfg_.plateau_patience) {
      lr_ = std::max(lr_ * cfg_.plateau_factor, cfg_.min_lr);
      since_plateau_ = 0;
    }
  }
  d.stop = since_improve_ >= cfg_.early_stop_patience;
  return d;
}

namespace {

Seq gather_batch(const WindowSet& set, const std::vector<size_t>& order, size_t begin, size_t end,
                 std::vector<int>* labels) {
  const int rows = set.rows, channels = set.channels;
  Seq x(static_cast<int>(end - begin), rows, channels);
  labels->clear();
  for (size_t i = begin; i < end; ++i) {
    const size_t w = order[i];
    std::copy_n(set.window_data(w), static_cast<size_t>(rows) * channels,
                x.d.begin() + (i - begin) * static_cast<size_t>(rows) * channels);
    labels->push_back(static_cast<int>(set.labels[w]));
  }
  return x;
}

double validation_loss(ModelParameters& model, const WindowSet& val_set, const LossConfig& loss_cfg,
                       int batch_size, std::mt19937_64& rng) {
  std::vector<size_t> order(val_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> labels;
  double total = 0.0;
  ModelCache cache;
  for (size_t begin = 0; begin < order.size(); begin += batch_size) {
    const size_t end = std::min(order.size(), begin + batch_size);
    Seq x = gather_batch(val_set, order, begin, end, &labels);
    ForwardResult fwd = model_forward(model, x, RunMode::Eval, rng, cache);
    FocalResult fr = focal_loss(fwd.probs, labels, loss_cfg);
    total += fr.loss * static_cast<double>(end - begin);
  }
  return total / static_cast<double>(order.size());
}

}  // namespace

TrainResult train(const ModelParameters& model, const WindowSet& train_set,
                  const WindowSet& val_set, const LossConfig& loss_cfg,
                  const OptimizerConfig& opt_cfg, const ScheduleConfig& sched_cfg) {
  validate_loss(loss_cfg);
  if (train_set.size() == 0) throw Error(ErrorCode::EmptySplit, "empty training split");
  if (val_set.size() == 0) throw Error(ErrorCode::EmptySplit, "empty validation split");
  if (opt_cfg.batch_size < 2)
    throw Error(ErrorCode::InvalidConfig, "batch_size must be at least 2 for batchnorm");
  if (opt_cfg.max_epochs < 1) throw Error(ErrorCode::InvalidConfig, "max_epochs must be positive");

  TrainResult result;
  result.best = model;
  ModelParameters work = model;
  AdamState state;
  TrainScheduler scheduler(sched_cfg, opt_cfg.lr);
  std::mt19937_64 dropout_rng(derive_seed(opt_cfg.seed, SeedRole::Dropout));

  std::vector<size_t> order(train_set.size());
  std::vector<int> labels;
  ModelCache cache;

  for (int epoch = 1; epoch <= opt_cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr_used = scheduler.lr();

    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(derive_seed(opt_cfg.seed, SeedRole::TrainShuffle, epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    size_t seen = 0;
    for (size_t begin = 0; begin < order.size(); begin += opt_cfg.batch_size) {
      const size_t end = std::min(order.size(), begin + opt_cfg.batch_size);
      if (end - begin < 2) break;  // a trailing singleton cannot feed batchnorm
      Seq x = gather_batch(train_set, order, begin, end, &labels);
      ForwardResult fwd = model_forward(work, x, RunMode::Train, dropout_rng, cache);
      for (double v : fwd.logits.d)
        if (!std::isfinite(v))
          throw Error(ErrorCode::DivergedLoss, "non-finite logits at epoch " + std::to_string(epoch));
      FocalResult fr = focal_loss(fwd.probs, labels, loss_cfg);
      std::vector<double> grads = model_backward(work, cache, fr.dlogits);
      adamw_step(work.flat.data(), grads.data(), work.learnable_count, state, opt_cfg, lr_used);
      loss_sum += fr.loss * static_cast<double>(end - begin);
      seen += end - begin;
    }
    if (seen == 0) throw Error(ErrorCode::EmptySplit, "training split smaller than one batch of 2");
    const double train_loss = loss_sum / static_cast<double>(seen);
    const double val_loss =
        validation_loss(work, val_set, loss_cfg, opt_cfg.batch_size, dropout_rng);
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss))
      throw Error(ErrorCode::DivergedLoss, "non-finite loss at epoch " + std::to_string(epoch));

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.epochs.push_back({epoch, train_loss, val_loss, lr_used, seconds});

    TrainScheduler::Decision d = scheduler.observe(val_loss);
    if (d.improved) {
      result.best.flat = work.flat;
      result.history.best_epoch = epoch;
      result.history.best_val_loss = val_loss;
    }
    if (d.stop) break;
  }
  return result;
}

void save_history_csv(const TrainHistory& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << "epoch,train_loss,val_loss,lr,seconds\n";
  char buf[160];
  for (const EpochStats& e : history.epochs) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.6f\n", e.epoch, e.train_loss,
                  e.val_loss, e.lr, e.seconds);
    out << buf;
  }
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path);
}

}  // namespace cbanet
