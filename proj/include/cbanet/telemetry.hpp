#pragma once
// Telemetry ingestion: CSV sessions, validation and unit normalization.
//
// Canonical internal units are SI: speed m/s, accelerations m/s^2, pedals as
// fractions in [0,1]. Files carrying km/h, g or percent are converted on the
// way in; the CSV schema uses _kmh/_g/_pct suffixes to make that explicit.

#include <map>
#include <string>
#include <vector>

#include "cbanet/common.hpp"

namespace cbanet {

struct TelemetrySample {
  double t = 0.0;         // seconds from session start
  double speed = 0.0;     // >= 0
  double a_long = 0.0;    // signed, + = forward acceleration
  double a_lat = 0.0;     // signed
  double brake = 0.0;     // pedal travel fraction [0,1]
  double throttle = 0.0;  // pedal travel fraction [0,1]
};

struct TelemetrySession {
  std::string session_id;
  std::string driver_id;
  double sample_rate_hz = 25.0;
  std::vector<TelemetrySample> samples;

  size_t size() const { return samples.size(); }
  double dt() const { return 1.0 / sample_rate_hz; }
};

enum class SpeedUnit { MetersPerSecond, KilometersPerHour };
enum class AccelUnit { MetersPerSecond2, G };

struct UnitSpec {
  SpeedUnit speed = SpeedUnit::MetersPerSecond;
  AccelUnit accel = AccelUnit::MetersPerSecond2;
};

// Column-name map for load_csv_session. Defaults follow the file schema:
// time_s, speed_kmh, accel_long_g, accel_lat_g, brake_pct, throttle_pct,
// session_id, driver_id.
struct CsvSchema {
  std::string time = "time_s";
  std::string speed = "speed_kmh";
  std::string a_long = "accel_long_g";
  std::string a_lat = "accel_lat_g";
  std::string brake = "brake_pct";
  std::string throttle = "throttle_pct";
  std::string session_id = "session_id";
  std::string driver_id = "driver_id";
  bool pedals_are_percent = true;  // divide pedal columns by 100 at ingestion
};

// Validates value-level invariants (finiteness, ranges). Throws UnparsableValue.
void validate_sample(const TelemetrySample& s, size_t row);

// Validates session-level invariants: strictly increasing timestamps and
// spacing uniform to within 10% of 1/sample_rate_hz.
void validate_session(const TelemetrySession& session);

// Loads a session from CSV. Pedal percentages are normalized to fractions at
// ingestion; speed/acceleration stay in the file's units (declare them via
// convert_units afterwards). Sample rate is inferred from the median spacing.
TelemetrySession load_csv_session(const std::string& path,
                                  const CsvSchema& schema = CsvSchema{});

// Converts speed/acceleration channels to SI. Idempotent when already SI.
TelemetrySession convert_units(const TelemetrySession& session, UnitSpec input_units);

// Serializes in the file schema (km/h, g, percent) so that a load/save
// round trip preserves all numeric fields.
void save_csv_session(const TelemetrySession& session, const std::string& path);

}  // namespace cbanet
