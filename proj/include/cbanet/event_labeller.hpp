#pragma once
// Deterministic per-sample labelling from vehicle dynamics. The pipeline is
// detect (thresholded rolling dynamics) -> refine (closing, duration filter,
// expansion, duration filter) -> priority resolution, giving one of
// {Normal, HarshAccel, HarshBrake, HarshTurn} per sample.

#include <cstdint>
#include <string>
#include <vector>

#include "cbanet/common.hpp"
#include "cbanet/synthetic.hpp"
#include "cbanet/telemetry.hpp"

namespace cbanet {

// Thresholds keep the units they are quoted in (g, km/h, seconds); they are
// converted to SI internally.
struct LabellerConfig {
  double theta_brake_g = -0.35;
  double theta_accel_g = 0.38;
  double theta_turn_g = 0.55;
  double theta_speed_g = -0.35;  // speed-derived deceleration gate
  double v_min_kmh = 15.0;
  double v_turn_kmh = 30.0;
  double window_s = 4.0;   // rolling-extrema window
  double t_min_s = 0.4;    // minimum event duration
  double closing_width_s = 0.5;
  double expansion_s = 0.5;
  double rescue_brake_pedal = 0.6;
  double rescue_brake_factor = 0.9;
  double throttle_intent = 0.3;
};

void validate_labeller_config(const LabellerConfig& cfg);

using BoolMask = std::vector<uint8_t>;

struct EventMask {
  BoolMask accel;
  BoolMask brake;
  BoolMask turn;
};

using LabelSequence = std::vector<EventClass>;

enum class ExtremaMode { Max, Min, AbsMax };

// Trailing-window extrema: out[t] covers samples max(0, t-window+1)..t.
// Partial windows at the start use the samples available.
std::vector<double> rolling_extrema(const std::vector<double>& signal, int window, ExtremaMode mode);

// Backward difference of speed; out[0] = 0.
std::vector<double> speed_derived_accel(const std::vector<double>& speed, double dt);

EventMask detect_candidates(const TelemetrySession& session, const LabellerConfig& cfg);

// Morphological closing, minimum-duration filter, per-side expansion, then a
// second duration filter, in that order.
BoolMask refine_mask(const BoolMask& mask, const LabellerConfig& cfg, double dt);

// Highest-priority true class per sample: turn > brake > accel > normal.
LabelSequence resolve_priority(const EventMask& mask);

LabelSequence label_session(const TelemetrySession& session, const LabellerConfig& cfg);

// Contiguous non-Normal runs as events; end is exclusive (last sample + dt).
GroundTruthEvents extract_events(const LabelSequence& labels, double dt);

// Event-level agreement between labelled episodes and planted truth.
// A truth event is matched by a same-class prediction with interval
// IoU >= iou_threshold; each prediction matches at most one truth event.
struct EventMatchStats {
  int true_positives = 0;
  int false_positives = 0;
  int false_negatives = 0;

  double recall() const;
  double precision() const;
};

EventMatchStats match_events(const GroundTruthEvents& predicted, const GroundTruthEvents& truth,
                             double iou_threshold);

// Per-sample label CSV: `time_s,label`.
void save_label_csv(const TelemetrySession& session, const LabelSequence& labels,
                    const std::string& path);

}  // namespace cbanet
