#include "cbanet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace cbanet {

namespace {

constexpr double kRampS = 0.2;          // raised-cosine ramp length
constexpr double kPedalLevel = 0.85;    // plateau for event pedals
constexpr double kBaseThrottle = 0.15;  // cruise throttle
constexpr double kSineAmp = 0.5;        // m/s, slow cruise variation
constexpr double kSinePeriod = 40.0;    // s
constexpr double kRelaxGain = 0.1;      // 1/s pull toward target speed
constexpr double kRelaxCap = 0.4;       // m/s^2, well below event thresholds

// Raised-cosine envelope over [0, d], ramping over `ramp` seconds each side.
double event_envelope(double s, double d) {
  if (s <= 0.0 || s >= d) return 0.0;
  const double ramp = std::min(kRampS, d / 2.0);
  if (s < ramp) return 0.5 * (1.0 - std::cos(M_PI * s / ramp));
  if (s > d - ramp) return 0.5 * (1.0 - std::cos(M_PI * (d - s) / ramp));
  return 1.0;
}

// Pedal envelope: full plateau across [0, d], ramps outside the interval so
// the pedal is already engaged for the whole planted window.
double pedal_envelope(double s, double d) {
  if (s >= 0.0 && s <= d) return 1.0;
  if (s < 0.0 && s > -kRampS) return 0.5 * (1.0 + std::cos(M_PI * -s / kRampS));
  if (s > d && s < d + kRampS) return 0.5 * (1.0 + std::cos(M_PI * (s - d) / kRampS));
  return 0.0;
}

}  // namespace

void validate_spec(const SyntheticSpec& spec) {
  if (spec.duration_s <= 0.0 || spec.sample_rate_hz <= 0.0) {
    throw Error(ErrorCode::InvalidConfig, "duration and sample rate must be positive");
  }
  if (spec.cruise_speed_kmh < 0.0) {
    throw Error(ErrorCode::InvalidConfig, "cruise speed must be non-negative");
  }
  std::array<std::vector<std::pair<double, double>>, kNumClasses> per_class;
  for (const PlantedEvent& e : spec.planted_events) {
    if (e.cls == EventClass::Normal) {
      throw Error(ErrorCode::InvalidConfig, "planted events must be aggressive classes");
    }
    if (e.duration_s <= 0.0 || e.intensity_g <= 0.0) {
      throw Error(ErrorCode::InvalidConfig, "event duration and intensity must be positive");
    }
    if (e.start_s < 0.0 || e.start_s + e.duration_s > spec.duration_s) {
      throw Error(ErrorCode::InvalidConfig, "planted event outside [0, duration]");
    }
    per_class[static_cast<int>(e.cls)].push_back({e.start_s, e.start_s + e.duration_s});
  }
  for (auto& intervals : per_class) {
    std::sort(intervals.begin(), intervals.end());
    for (size_t i = 1; i < intervals.size(); ++i) {
      if (intervals[i].first < intervals[i - 1].second) {
        throw Error(ErrorCode::InvalidConfig, "same-class planted events overlap");
      }
    }
  }
}

std::pair<TelemetrySession, GroundTruthEvents> generate_synthetic_session(const SyntheticSpec& spec) {
  validate_spec(spec);
  const double dt = 1.0 / spec.sample_rate_hz;
  const size_t n = static_cast<size_t>(std::llround(spec.duration_s * spec.sample_rate_hz));
  if (n < 1) {
    throw Error(ErrorCode::InvalidConfig, "duration too short for one sample");
  }
  const double cruise = kmh_to_ms(spec.cruise_speed_kmh);

  TelemetrySession session;
  session.session_id = spec.session_id;
  session.driver_id = spec.driver_id;
  session.sample_rate_hz = spec.sample_rate_hz;
  session.samples.resize(n);

  auto target_speed = [&](double t) { return cruise + kSineAmp * std::sin(2.0 * M_PI * t / kSinePeriod); };
  auto target_accel = [&](double t) {
    return kSineAmp * (2.0 * M_PI / kSinePeriod) * std::cos(2.0 * M_PI * t / kSinePeriod);
  };
  // Cruise control is gated off around longitudinal events so it never fights
  // a planted profile.
  auto cruise_gate = [&](double t) {
    for (const PlantedEvent& e : spec.planted_events) {
      if (e.cls == EventClass::HarshTurn) continue;
      if (t >= e.start_s - 0.5 && t <= e.start_s + e.duration_s + 0.5) return 0.0;
    }
    return 1.0;
  };

  // Clean kinematics first; noise goes on top afterwards.
  double v = target_speed(0.0);
  int turn_index = 0;
  std::vector<int> turn_signs(spec.planted_events.size(), 1);
  for (size_t e = 0; e < spec.planted_events.size(); ++e) {
    if (spec.planted_events[e].cls == EventClass::HarshTurn) {
      turn_signs[e] = (turn_index++ % 2 == 0) ? 1 : -1;
    }
  }

  for (size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    TelemetrySample& s = session.samples[i];
    s.t = t;
    s.speed = v;

    const double gate = cruise_gate(t);
    double a_long = gate * (target_accel(t) +
                            std::clamp(kRelaxGain * (target_speed(t) - v), -kRelaxCap, kRelaxCap));
    double a_lat = 0.0;
    double brake = 0.0;
    double throttle = kBaseThrottle;

    for (size_t e = 0; e < spec.planted_events.size(); ++e) {
      const PlantedEvent& ev = spec.planted_events[e];
      const double rel = t - ev.start_s;
      const double amp = g_to_ms2(ev.intensity_g);
      switch (ev.cls) {
        case EventClass::HarshBrake:
          a_long -= amp * event_envelope(rel, ev.duration_s);
          brake = std::max(brake, kPedalLevel * pedal_envelope(rel, ev.duration_s));
          break;
        case EventClass::HarshAccel:
          a_long += amp * event_envelope(rel, ev.duration_s);
          throttle = std::max(throttle, kPedalLevel * pedal_envelope(rel, ev.duration_s));
          break;
        case EventClass::HarshTurn:
          a_lat += turn_signs[e] * amp * event_envelope(rel, ev.duration_s);
          break;
        default:
          break;
      }
    }

    s.a_long = a_long;
    s.a_lat = a_lat;
    s.brake = brake;
    s.throttle = throttle;

    v += a_long * dt;
    if (v < 0.0) {
      throw Error(ErrorCode::InfeasibleEvent,
                  "braking drives speed below 0 at t=" + std::to_string(t + dt) + " s");
    }
  }

  const NoiseSigma& ns = spec.noise_sigma;
  if (ns.speed > 0.0 || ns.a_long > 0.0 || ns.a_lat > 0.0 || ns.brake > 0.0 || ns.throttle > 0.0) {
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (TelemetrySample& s : session.samples) {
      if (ns.speed > 0.0) s.speed = std::max(0.0, s.speed + ns.speed * gauss(rng));
      if (ns.a_long > 0.0) s.a_long += ns.a_long * gauss(rng);
      if (ns.a_lat > 0.0) s.a_lat += ns.a_lat * gauss(rng);
      if (ns.brake > 0.0) s.brake = std::clamp(s.brake + ns.brake * gauss(rng), 0.0, 1.0);
      if (ns.throttle > 0.0) s.throttle = std::clamp(s.throttle + ns.throttle * gauss(rng), 0.0, 1.0);
    }
  }

  GroundTruthEvents truth;
  truth.reserve(spec.planted_events.size());
  for (const PlantedEvent& e : spec.planted_events) {
    truth.push_back({e.cls, e.start_s, e.start_s + e.duration_s});
  }
  std::sort(truth.begin(), truth.end(),
            [](const GroundTruthEvent& a, const GroundTruthEvent& b) { return a.start_s < b.start_s; });
  return {std::move(session), std::move(truth)};
}

SyntheticDataset generate_dataset(const DatasetSpec& spec) {
  if (spec.n_sessions < 1 || spec.n_drivers < 1) {
    throw Error(ErrorCode::InvalidConfig, "dataset needs at least one session and driver");
  }
  SyntheticDataset out;
  const int per_driver = (spec.n_sessions + spec.n_drivers - 1) / spec.n_drivers;

  struct ClassRanges {
    EventClass cls;
    double dur_lo, dur_hi, int_lo, int_hi;
  };
  const ClassRanges ranges[3] = {
      {EventClass::HarshAccel, 1.5, 2.5, 0.45, 0.55},
      {EventClass::HarshBrake, 1.0, 1.5, 0.45, 0.55},
      {EventClass::HarshTurn, 2.5, 3.5, 0.60, 0.70},
  };

  for (int i = 0; i < spec.n_sessions; ++i) {
    std::mt19937_64 rng(derive_seed(spec.seed, SeedRole::Simulate, static_cast<uint64_t>(i) * 2));
    std::discrete_distribution<int> count_dist(spec.count_weights.begin(), spec.count_weights.end());
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    SyntheticSpec s;
    s.duration_s = spec.duration_s;
    s.cruise_speed_kmh = spec.cruise_speed_kmh;
    s.noise_sigma = spec.noise_sigma;
    s.sample_rate_hz = 25.0;
    s.seed = derive_seed(spec.seed, SeedRole::Simulate, static_cast<uint64_t>(i) * 2 + 1);
    char sid[32], did[32];
    std::snprintf(sid, sizeof(sid), "s%03d", i);
    std::snprintf(did, sizeof(did), "d%02d", i / per_driver);
    s.session_id = sid;
    s.driver_id = did;

    auto overlaps_existing = [&](double start, double dur) {
      for (const PlantedEvent& e : s.planted_events) {
        const double gap_before = start - (e.start_s + e.duration_s);
        const double gap_after = e.start_s - (start + dur);
        if (gap_before < spec.min_event_spacing_s && gap_after < spec.min_event_spacing_s) return true;
      }
      return false;
    };

    for (const ClassRanges& r : ranges) {
      const int count = count_dist(rng);
      for (int k = 0; k < count; ++k) {
        const double dur = r.dur_lo + (r.dur_hi - r.dur_lo) * unit(rng);
        const double intensity = r.int_lo + (r.int_hi - r.int_lo) * unit(rng);
        bool placed = false;
        for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
          const double start = 5.0 + (spec.duration_s - dur - 10.0) * unit(rng);
          if (!overlaps_existing(start, dur)) {
            s.planted_events.push_back({r.cls, start, dur, intensity});
            placed = true;
          }
        }
      }
    }

    auto [session, truth] = generate_synthetic_session(s);
    out.sessions.push_back(std::move(session));
    out.truths.push_back(std::move(truth));
  }
  return out;
}

void save_ground_truth_csv(const GroundTruthEvents& events, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  }
  out << "class,start_s,end_s\n";
  char buf[128];
  for (const GroundTruthEvent& e : events) {
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g\n", class_name(e.cls), e.start_s, e.end_s);
    out << buf;
  }
}

GroundTruthEvents load_ground_truth_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::MissingInput, "cannot open '" + path + "'");
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorCode::MissingColumn, "'" + path + "' is empty");
  }
  GroundTruthEvents events;
  size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    std::string cls, start, end;
    size_t c1 = line.find(',');
    size_t c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw Error(ErrorCode::UnparsableValue, "row " + std::to_string(row) + ": need class,start_s,end_s");
    }
    GroundTruthEvent e;
    e.cls = class_from_name(line.substr(0, c1));
    e.start_s = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    e.end_s = std::stod(line.substr(c2 + 1));
    events.push_back(e);
  }
  return events;
}

}  // namespace cbanet
