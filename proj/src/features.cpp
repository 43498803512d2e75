#include "cbanet/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace cbanet {

const std::array<const char*, kNumChannels>& channel_names() {
  static const std::array<const char*, kNumChannels> names = {
      "speed",          "a_long",       "a_lat",   "brake",   "throttle",
      "a_long_neg",     "turn_sharpness", "a_lat_smooth", "p_decel", "b_engage"};
  return names;
}

FeatureFrame engineer_features(const TelemetrySession& session) {
  const size_t n = session.size();
  FeatureFrame frame;
  for (auto& ch : frame.channels) ch.resize(n);

  for (size_t t = 0; t < n; ++t) {
    const TelemetrySample& s = session.samples[t];
    const double a_long_neg = std::max(0.0, -s.a_long);
    frame.channels[0][t] = s.speed;
    frame.channels[1][t] = s.a_long;
    frame.channels[2][t] = s.a_lat;
    frame.channels[3][t] = s.brake;
    frame.channels[4][t] = s.throttle;
    frame.channels[5][t] = a_long_neg;
    frame.channels[6][t] = t == 0 ? 0.0 : std::abs(s.a_lat - session.samples[t - 1].a_lat);
    // trailing 5-sample mean; missing history is padded with the first sample
    double acc = 0.0;
    const size_t lo = t >= 4 ? t - 4 : 0;
    for (size_t j = lo; j <= t; ++j) acc += session.samples[j].a_lat;
    acc += static_cast<double>(4 - (t - lo)) * session.samples[0].a_lat;
    frame.channels[7][t] = acc / 5.0;
    frame.channels[8][t] = s.speed * a_long_neg;
    frame.channels[9][t] = s.brake * a_long_neg;
  }
  return frame;
}

NormStats fit_normalizer(const std::vector<FeatureFrame>& frames) {
  size_t total = 0;
  for (const FeatureFrame& f : frames) {
    if (f.tag != SplitTag::Train) {
      throw Error(ErrorCode::NotTrainingData, "normalizer fit on a non-train frame");
    }
    total += f.size();
  }
  if (total == 0) throw Error(ErrorCode::EmptyTrainingPool, "no training samples to fit on");

  NormStats stats;
  for (int c = 0; c < kNumChannels; ++c) {
    double sum = 0.0;
    for (const FeatureFrame& f : frames) {
      for (double v : f.channels[c]) sum += v;
    }
    const double mean = sum / static_cast<double>(total);
    double var = 0.0;
    for (const FeatureFrame& f : frames) {
      for (double v : f.channels[c]) var += (v - mean) * (v - mean);
    }
    stats.mean[c] = mean;
    stats.stddev[c] = std::max(std::sqrt(var / static_cast<double>(total)), 1e-8);
  }
  return stats;
}

FeatureFrame apply_normalizer(const FeatureFrame& frame, const NormStats& stats) {
  FeatureFrame out = frame;
  for (int c = 0; c < kNumChannels; ++c) {
    const double mean = stats.mean[c];
    const double inv = 1.0 / stats.stddev[c];
    for (double& v : out.channels[c]) v = (v - mean) * inv;
  }
  return out;
}

void save_norm_stats(const NormStats& stats, const std::string& path) {
  nlohmann::json doc;
  doc["fitted_on"] = stats.fitted_on;
  nlohmann::json channels = nlohmann::json::array();
  for (int c = 0; c < kNumChannels; ++c) {
    channels.push_back({{"channel", channel_names()[c]},
                        {"mean", stats.mean[c]},
                        {"std", stats.stddev[c]}});
  }
  doc["channels"] = channels;
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  out << doc.dump(2) << "\n";
}

NormStats load_norm_stats(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingInput, "cannot open '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::UnparsableValue, std::string("bad norm stats JSON: ") + e.what());
  }
  NormStats stats;
  stats.fitted_on = doc.value("fitted_on", "train");
  const auto& channels = doc.at("channels");
  if (channels.size() != kNumChannels) {
    throw Error(ErrorCode::ChannelMismatch,
                "expected " + std::to_string(kNumChannels) + " channels, got " +
                    std::to_string(channels.size()));
  }
  for (int c = 0; c < kNumChannels; ++c) {
    const auto& entry = channels[c];
    if (entry.at("channel").get<std::string>() != channel_names()[c]) {
      throw Error(ErrorCode::ChannelMismatch, "channel order mismatch at index " + std::to_string(c));
    }
    stats.mean[c] = entry.at("mean").get<double>();
    stats.stddev[c] = entry.at("std").get<double>();
  }
  return stats;
}

void save_feature_csv(const FeatureFrame& frame, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  for (int c = 0; c < kNumChannels; ++c) {
    out << channel_names()[c] << (c + 1 < kNumChannels ? ',' : '\n');
  }
  char buf[32];
  for (size_t t = 0; t < frame.size(); ++t) {
    for (int c = 0; c < kNumChannels; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", frame.channels[c][t]);
      out << buf << (c + 1 < kNumChannels ? ',' : '\n');
    }
  }
}

}  // namespace cbanet
