#pragma once
// Engineered dynamics channels and leakage-free z-score normalization.
//
// Channel order is fixed: the five raw signals followed by five engineered
// ones. Everything downstream (windowing, the model, serialized containers)
// assumes this order.

#include <array>
#include <string>
#include <vector>

#include "cbanet/common.hpp"
#include "cbanet/telemetry.hpp"

namespace cbanet {

inline constexpr int kNumChannels = 10;

enum class FeatureChannel : int {
  Speed = 0,
  ALong = 1,
  ALat = 2,
  Brake = 3,
  Throttle = 4,
  ALongNeg = 5,
  TurnSharpness = 6,
  ALatSmooth = 7,
  PDecel = 8,
  BEngage = 9,
};

const std::array<const char*, kNumChannels>& channel_names();

enum class SplitTag { Unsplit, Train, Validation, Test };

// Channel-major feature matrix for one session.
struct FeatureFrame {
  std::array<std::vector<double>, kNumChannels> channels;
  SplitTag tag = SplitTag::Unsplit;

  size_t size() const { return channels[0].size(); }
  double at(FeatureChannel c, size_t t) const { return channels[static_cast<int>(c)][t]; }
};

struct NormStats {
  std::array<double, kNumChannels> mean{};
  std::array<double, kNumChannels> stddev{};
  std::string fitted_on = "train";
};

// Builds the F=10 channels from an SI-unit session. Causal: output at t uses
// samples <= t only.
FeatureFrame engineer_features(const TelemetrySession& session);

// Pooled per-channel mean and population standard deviation over all frames.
// Refuses frames not tagged Train (leakage guard); stddev floored at 1e-8.
NormStats fit_normalizer(const std::vector<FeatureFrame>& frames);

// x~ = (x - mean) / stddev per channel.
FeatureFrame apply_normalizer(const FeatureFrame& frame, const NormStats& stats);

void save_norm_stats(const NormStats& stats, const std::string& path);
NormStats load_norm_stats(const std::string& path);

// One row per sample, channels in the fixed header order.
void save_feature_csv(const FeatureFrame& frame, const std::string& path);

}  // namespace cbanet
