#include "cbanet/event_labeller.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>

namespace cbanet {

void validate_labeller_config(const LabellerConfig& cfg) {
  if (cfg.theta_brake_g >= 0.0) throw Error(ErrorCode::InvalidConfig, "theta_brake must be negative");
  if (cfg.theta_accel_g <= 0.0 || cfg.theta_turn_g <= 0.0) {
    throw Error(ErrorCode::InvalidConfig, "theta_accel and theta_turn must be positive");
  }
  if (!(cfg.window_s > cfg.t_min_s && cfg.t_min_s > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "need window_s > t_min_s > 0");
  }
  if (cfg.v_turn_kmh <= cfg.v_min_kmh) {
    throw Error(ErrorCode::InvalidConfig, "v_turn must exceed v_min");
  }
}

std::vector<double> rolling_extrema(const std::vector<double>& signal, int window, ExtremaMode mode) {
  if (signal.empty()) throw Error(ErrorCode::EmptySignal, "rolling_extrema on empty signal");
  if (window < 1) throw Error(ErrorCode::InvalidConfig, "window must be >= 1");

  const size_t n = signal.size();
  std::vector<double> values(n);
  for (size_t i = 0; i < n; ++i) {
    values[i] = (mode == ExtremaMode::AbsMax) ? std::abs(signal[i]) : signal[i];
  }
  const bool want_max = (mode != ExtremaMode::Min);

  // Monotonic deque of candidate indices over the trailing window.
  std::vector<double> out(n);
  std::deque<size_t> dq;
  for (size_t i = 0; i < n; ++i) {
    while (!dq.empty() &&
           (want_max ? values[dq.back()] <= values[i] : values[dq.back()] >= values[i])) {
      dq.pop_back();
    }
    dq.push_back(i);
    if (dq.front() + static_cast<size_t>(window) <= i) dq.pop_front();
    out[i] = values[dq.front()];
  }
  return out;
}

std::vector<double> speed_derived_accel(const std::vector<double>& speed, double dt) {
  if (speed.empty()) throw Error(ErrorCode::EmptySignal, "speed_derived_accel on empty signal");
  if (dt <= 0.0) throw Error(ErrorCode::InvalidConfig, "dt must be positive");
  std::vector<double> out(speed.size(), 0.0);
  for (size_t i = 1; i < speed.size(); ++i) {
    out[i] = (speed[i] - speed[i - 1]) / dt;
  }
  return out;
}

EventMask detect_candidates(const TelemetrySession& session, const LabellerConfig& cfg) {
  validate_labeller_config(cfg);
  const size_t n = session.size();
  if (n == 0) throw Error(ErrorCode::EmptySignal, "empty session");
  const double dt = session.dt();
  const int window = std::max(1, static_cast<int>(std::lround(cfg.window_s / dt)));

  std::vector<double> v(n), a_long(n), a_lat(n);
  for (size_t i = 0; i < n; ++i) {
    v[i] = session.samples[i].speed;
    a_long[i] = session.samples[i].a_long;
    a_lat[i] = session.samples[i].a_lat;
  }

  const std::vector<double> a_speed_min =
      rolling_extrema(speed_derived_accel(v, dt), window, ExtremaMode::Min);
  const std::vector<double> a_long_max = rolling_extrema(a_long, window, ExtremaMode::Max);
  const std::vector<double> a_lat_absmax = rolling_extrema(a_lat, window, ExtremaMode::AbsMax);

  const double th_brake = g_to_ms2(cfg.theta_brake_g);
  const double th_accel = g_to_ms2(cfg.theta_accel_g);
  const double th_turn = g_to_ms2(cfg.theta_turn_g);
  const double th_speed = g_to_ms2(cfg.theta_speed_g);
  const double v_min = kmh_to_ms(cfg.v_min_kmh);
  const double v_turn = kmh_to_ms(cfg.v_turn_kmh);

  EventMask mask;
  mask.accel.assign(n, 0);
  mask.brake.assign(n, 0);
  mask.turn.assign(n, 0);
  for (size_t i = 0; i < n; ++i) {
    const TelemetrySample& s = session.samples[i];
    const bool brake_main = v[i] > v_min && a_speed_min[i] <= th_speed && a_long[i] <= th_brake;
    const bool brake_rescue =
        v[i] > v_min && s.brake >= cfg.rescue_brake_pedal && a_long[i] <= cfg.rescue_brake_factor * th_brake;
    mask.brake[i] = brake_main || brake_rescue;
    mask.accel[i] = v[i] > v_min && a_long_max[i] >= th_accel && s.throttle >= cfg.throttle_intent &&
                    s.brake < 0.05;
    mask.turn[i] = v[i] > v_turn && a_lat_absmax[i] >= th_turn;
  }
  return mask;
}

namespace {

struct Run {
  size_t begin;
  size_t end;  // exclusive
};

std::vector<Run> find_runs(const BoolMask& mask) {
  std::vector<Run> runs;
  size_t i = 0;
  while (i < mask.size()) {
    if (!mask[i]) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j < mask.size() && mask[j]) ++j;
    runs.push_back({i, j});
    i = j;
  }
  return runs;
}

// Closing with a flat structuring element of half-width r: fills interior
// gaps of length <= 2r and is the identity elsewhere (extensive on finite
// support, so boundary runs are untouched).
BoolMask close_mask(const BoolMask& mask, size_t r) {
  BoolMask out = mask;
  const std::vector<Run> runs = find_runs(mask);
  for (size_t k = 1; k < runs.size(); ++k) {
    const size_t gap = runs[k].begin - runs[k - 1].end;
    if (gap <= 2 * r) {
      std::fill(out.begin() + runs[k - 1].end, out.begin() + runs[k].begin, 1);
    }
  }
  return out;
}

BoolMask drop_short_runs(const BoolMask& mask, size_t min_len) {
  BoolMask out = mask;
  for (const Run& run : find_runs(mask)) {
    if (run.end - run.begin < min_len) {
      std::fill(out.begin() + run.begin, out.begin() + run.end, 0);
    }
  }
  return out;
}

BoolMask expand_runs(const BoolMask& mask, size_t pad) {
  BoolMask out(mask.size(), 0);
  for (const Run& run : find_runs(mask)) {
    const size_t begin = run.begin > pad ? run.begin - pad : 0;
    const size_t end = std::min(mask.size(), run.end + pad);
    std::fill(out.begin() + begin, out.begin() + end, 1);
  }
  return out;
}

}  // namespace

BoolMask refine_mask(const BoolMask& mask, const LabellerConfig& cfg, double dt) {
  if (mask.empty()) return mask;
  const double rate = 1.0 / dt;
  const size_t close_r = static_cast<size_t>(std::max<long>(1, std::lround(cfg.closing_width_s * rate / 2.0)));
  const size_t min_len = static_cast<size_t>(std::max<long>(1, std::lround(cfg.t_min_s * rate)));
  const size_t pad = static_cast<size_t>(std::max<long>(0, std::lround(cfg.expansion_s * rate)));

  BoolMask m = close_mask(mask, close_r);
  m = drop_short_runs(m, min_len);
  m = expand_runs(m, pad);
  return drop_short_runs(m, min_len);
}

LabelSequence resolve_priority(const EventMask& mask) {
  const size_t n = mask.brake.size();
  if (mask.accel.size() != n || mask.turn.size() != n) {
    throw Error(ErrorCode::LengthMismatch, "event mask lengths differ");
  }
  LabelSequence labels(n, EventClass::Normal);
  for (size_t i = 0; i < n; ++i) {
    if (mask.turn[i]) {
      labels[i] = EventClass::HarshTurn;
    } else if (mask.brake[i]) {
      labels[i] = EventClass::HarshBrake;
    } else if (mask.accel[i]) {
      labels[i] = EventClass::HarshAccel;
    }
  }
  return labels;
}

LabelSequence label_session(const TelemetrySession& session, const LabellerConfig& cfg) {
  EventMask mask = detect_candidates(session, cfg);
  const double dt = session.dt();
  mask.accel = refine_mask(mask.accel, cfg, dt);
  mask.brake = refine_mask(mask.brake, cfg, dt);
  mask.turn = refine_mask(mask.turn, cfg, dt);
  return resolve_priority(mask);
}

GroundTruthEvents extract_events(const LabelSequence& labels, double dt) {
  GroundTruthEvents events;
  size_t i = 0;
  while (i < labels.size()) {
    if (labels[i] == EventClass::Normal) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j < labels.size() && labels[j] == labels[i]) ++j;
    events.push_back({labels[i], static_cast<double>(i) * dt, static_cast<double>(j) * dt});
    i = j;
  }
  return events;
}

double EventMatchStats::recall() const {
  const int denom = true_positives + false_negatives;
  return denom == 0 ? 0.0 : static_cast<double>(true_positives) / denom;
}

double EventMatchStats::precision() const {
  const int denom = true_positives + false_positives;
  return denom == 0 ? 0.0 : static_cast<double>(true_positives) / denom;
}

namespace {

double interval_iou(double a0, double a1, double b0, double b1) {
  const double inter = std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
  const double uni = (a1 - a0) + (b1 - b0) - inter;
  return uni <= 0.0 ? 0.0 : inter / uni;
}

}  // namespace

EventMatchStats match_events(const GroundTruthEvents& predicted, const GroundTruthEvents& truth,
                             double iou_threshold) {
  EventMatchStats stats;
  std::vector<uint8_t> used(predicted.size(), 0);
  for (const GroundTruthEvent& t : truth) {
    int best = -1;
    double best_iou = 0.0;
    for (size_t p = 0; p < predicted.size(); ++p) {
      if (used[p] || predicted[p].cls != t.cls) continue;
      const double iou = interval_iou(predicted[p].start_s, predicted[p].end_s, t.start_s, t.end_s);
      if (iou >= iou_threshold && iou > best_iou) {
        best = static_cast<int>(p);
        best_iou = iou;
      }
    }
    if (best >= 0) {
      used[best] = 1;
      ++stats.true_positives;
    } else {
      ++stats.false_negatives;
    }
  }
  for (uint8_t u : used) {
    if (!u) ++stats.false_positives;
  }
  return stats;
}

void save_label_csv(const TelemetrySession& session, const LabelSequence& labels,
                    const std::string& path) {
  if (labels.size() != session.size()) {
    throw Error(ErrorCode::LengthMismatch, "labels and session differ in length");
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  out << "time_s,label\n";
  char buf[64];
  for (size_t i = 0; i < labels.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%s\n", session.samples[i].t, class_name(labels[i]));
    out << buf;
  }
}

}  // namespace cbanet
