#pragma once
// Synthetic telemetry with planted ground-truth events. Serves as the oracle
// for the labeller and the end-to-end pipeline tests: sessions are
// kinematically consistent (speed integrates a_long) and deterministic per
// seed.

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "cbanet/common.hpp"
#include "cbanet/telemetry.hpp"

namespace cbanet {

struct PlantedEvent {
  EventClass cls = EventClass::HarshBrake;  // HarshAccel | HarshBrake | HarshTurn
  double start_s = 0.0;
  double duration_s = 1.0;
  double intensity_g = 0.5;  // peak acceleration magnitude
};

struct NoiseSigma {
  double speed = 0.0;     // m/s
  double a_long = 0.0;    // m/s^2
  double a_lat = 0.0;     // m/s^2
  double brake = 0.0;     // fraction
  double throttle = 0.0;  // fraction
};

struct SyntheticSpec {
  double duration_s = 60.0;
  double cruise_speed_kmh = 50.0;
  NoiseSigma noise_sigma;
  std::vector<PlantedEvent> planted_events;
  uint64_t seed = 0;
  double sample_rate_hz = 25.0;
  std::string session_id = "synthetic";
  std::string driver_id = "driver";
};

struct GroundTruthEvent {
  EventClass cls = EventClass::HarshBrake;
  double start_s = 0.0;
  double end_s = 0.0;
};

using GroundTruthEvents = std::vector<GroundTruthEvent>;

// Validates the spec: events inside [0, duration], same-class events disjoint.
void validate_spec(const SyntheticSpec& spec);

// Generates a session in SI units plus the planted intervals verbatim.
// Event acceleration profiles are raised-cosine ramped (0.2 s ramps); the
// brake pedal holds >= 0.7 across braking events and the throttle across
// acceleration events. Throws InfeasibleEvent if braking would stall the car.
std::pair<TelemetrySession, GroundTruthEvents> generate_synthetic_session(const SyntheticSpec& spec);

// Multi-session dataset with randomly placed events, used by the end-to-end
// tests and the `simulate` subcommand's dataset mode.
struct DatasetSpec {
  int n_sessions = 16;
  int n_drivers = 4;
  double duration_s = 120.0;
  double cruise_speed_kmh = 60.0;
  NoiseSigma noise_sigma{0.02, 0.03 * kGravity, 0.03 * kGravity, 0.01, 0.01};
  // Per class, per session: event count drawn from {0,1,2} with these weights.
  std::array<double, 3> count_weights{0.3, 0.5, 0.2};
  double min_event_spacing_s = 10.0;
  uint64_t seed = 0;
};

struct SyntheticDataset {
  std::vector<TelemetrySession> sessions;
  std::vector<GroundTruthEvents> truths;  // aligned with sessions
};

SyntheticDataset generate_dataset(const DatasetSpec& spec);

// CSV emission for ground truth: header `class,start_s,end_s`.
void save_ground_truth_csv(const GroundTruthEvents& events, const std::string& path);
GroundTruthEvents load_ground_truth_csv(const std::string& path);

}  // namespace cbanet
