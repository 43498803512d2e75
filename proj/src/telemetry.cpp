#include "cbanet/telemetry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace cbanet {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& text, size_t row, const std::string& column) {
  const std::string t = trim(text);
  double value = 0.0;
  const char* begin = t.data();
  const char* end = begin + t.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end || t.empty()) {
    throw Error(ErrorCode::UnparsableValue,
                "row " + std::to_string(row) + ", column '" + column + "': cannot parse '" + t + "'");
  }
  return value;
}

}  // namespace

void validate_sample(const TelemetrySample& s, size_t row) {
  auto bad = [&](const std::string& what) {
    throw Error(ErrorCode::UnparsableValue, "row " + std::to_string(row) + ": " + what);
  };
  for (double v : {s.t, s.speed, s.a_long, s.a_lat, s.brake, s.throttle}) {
    if (!std::isfinite(v)) bad("non-finite value");
  }
  if (s.speed < 0.0) bad("negative speed");
  if (s.brake < 0.0 || s.brake > 1.0) bad("brake outside [0,1]");
  if (s.throttle < 0.0 || s.throttle > 1.0) bad("throttle outside [0,1]");
}

void validate_session(const TelemetrySession& session) {
  if (session.samples.empty()) {
    throw Error(ErrorCode::EmptySignal, "session '" + session.session_id + "' has no samples");
  }
  if (session.sample_rate_hz <= 0.0) {
    throw Error(ErrorCode::InvalidConfig, "sample_rate_hz must be positive");
  }
  const double nominal = 1.0 / session.sample_rate_hz;
  for (size_t i = 1; i < session.samples.size(); ++i) {
    const double dt = session.samples[i].t - session.samples[i - 1].t;
    if (dt <= 0.0) {
      throw Error(ErrorCode::NonMonotonicTime,
                  "row " + std::to_string(i) + ": timestamp " + std::to_string(session.samples[i].t) +
                      " does not increase");
    }
    if (std::abs(dt - nominal) > 0.10 * nominal) {
      throw Error(ErrorCode::NonUniformSampling,
                  "row " + std::to_string(i) + ": spacing " + std::to_string(dt) +
                      " s deviates >10% from nominal " + std::to_string(nominal) + " s");
    }
  }
}

TelemetrySession load_csv_session(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::MissingInput, "cannot open '" + path + "'");
  }
  std::string header_line;
  if (!std::getline(in, header_line)) {
    throw Error(ErrorCode::MissingColumn, "'" + path + "' is empty (no header)");
  }
  const std::vector<std::string> header = split_csv_line(header_line);
  std::map<std::string, size_t> columns;
  for (size_t i = 0; i < header.size(); ++i) columns[trim(header[i])] = i;

  auto col = [&](const std::string& name) {
    auto it = columns.find(name);
    if (it == columns.end()) {
      throw Error(ErrorCode::MissingColumn, "column '" + name + "' not found in '" + path + "'");
    }
    return it->second;
  };
  const size_t ct = col(schema.time);
  const size_t cv = col(schema.speed);
  const size_t cal = col(schema.a_long);
  const size_t cat = col(schema.a_lat);
  const size_t cb = col(schema.brake);
  const size_t cth = col(schema.throttle);
  const size_t cs = col(schema.session_id);
  const size_t cd = col(schema.driver_id);

  TelemetrySession session;
  std::string line;
  size_t row = 0;
  const double pedal_scale = schema.pedals_are_percent ? 0.01 : 1.0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() < header.size()) {
      throw Error(ErrorCode::UnparsableValue,
                  "row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                      " cells, got " + std::to_string(cells.size()));
    }
    TelemetrySample s;
    s.t = parse_double(cells[ct], row, schema.time);
    s.speed = parse_double(cells[cv], row, schema.speed);
    s.a_long = parse_double(cells[cal], row, schema.a_long);
    s.a_lat = parse_double(cells[cat], row, schema.a_lat);
    s.brake = parse_double(cells[cb], row, schema.brake) * pedal_scale;
    s.throttle = parse_double(cells[cth], row, schema.throttle) * pedal_scale;
    validate_sample(s, row);
    if (session.samples.empty()) {
      session.session_id = trim(cells[cs]);
      session.driver_id = trim(cells[cd]);
    }
    session.samples.push_back(s);
  }
  if (session.samples.empty()) {
    throw Error(ErrorCode::EmptySignal, "'" + path + "' contains no data rows");
  }
  if (session.samples.size() >= 2) {
    std::vector<double> spacings;
    spacings.reserve(session.samples.size() - 1);
    for (size_t i = 1; i < session.samples.size(); ++i) {
      spacings.push_back(session.samples[i].t - session.samples[i - 1].t);
    }
    std::nth_element(spacings.begin(), spacings.begin() + spacings.size() / 2, spacings.end());
    const double median = spacings[spacings.size() / 2];
    if (median <= 0.0) {
      throw Error(ErrorCode::NonMonotonicTime, "timestamps are not increasing");
    }
    session.sample_rate_hz = 1.0 / median;
  }
  validate_session(session);
  return session;
}

TelemetrySession convert_units(const TelemetrySession& session, UnitSpec input_units) {
  TelemetrySession out = session;
  const double speed_scale = input_units.speed == SpeedUnit::KilometersPerHour ? 1.0 / 3.6 : 1.0;
  const double accel_scale = input_units.accel == AccelUnit::G ? kGravity : 1.0;
  for (size_t i = 0; i < out.samples.size(); ++i) {
    TelemetrySample& s = out.samples[i];
    s.speed *= speed_scale;
    s.a_long *= accel_scale;
    s.a_lat *= accel_scale;
    validate_sample(s, i + 1);
  }
  validate_session(out);
  return out;
}

void save_csv_session(const TelemetrySession& session, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  }
  out << "time_s,speed_kmh,accel_long_g,accel_lat_g,brake_pct,throttle_pct,session_id,driver_id\n";
  char buf[512];
  for (const TelemetrySample& s : session.samples) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%s,%s\n", s.t,
                  ms_to_kmh(s.speed), s.a_long / kGravity, s.a_lat / kGravity, s.brake * 100.0,
                  s.throttle * 100.0, session.session_id.c_str(), session.driver_id.c_str());
    out << buf;
  }
  if (!out.good()) {
    throw Error(ErrorCode::IoError, "write failed for '" + path + "'");
  }
}

}  // namespace cbanet
