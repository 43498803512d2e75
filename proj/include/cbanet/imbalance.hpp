#pragma once
// Controlled SMOTE oversampling of minority windows plus class weights.
// Order contract: oversample first, then compute weights from the augmented
// counts.

#include <array>
#include <cstdint>

#include "cbanet/common.hpp"
#include "cbanet/windowing.hpp"

namespace cbanet {

struct SmoteConfig {
  int k_neighbors = 5;
  double target_fraction = 0.5;  // of the majority class size
  uint64_t seed = 0;
};

// Raises every minority class to ceil(target_fraction * majority) by linear
// interpolation between a member and one of its k nearest same-class
// neighbors (Euclidean over flattened windows). Originals are copied
// verbatim and come first; synthetic windows carry (base, neighbor, lambda)
// provenance. Only accepts sets tagged "train".
WindowSet smote_oversample(const WindowSet& train, const SmoteConfig& cfg);

struct ClassWeights {
  std::array<double, kNumClasses> weight{};
  bool normalized = false;
};

inline std::array<double, kNumClasses> default_boost() { return {1.0, 1.0, 1.25, 1.25}; }

// w_c = N / (C * n_c), boosted, then scaled to mean 1.
ClassWeights compute_class_weights(const std::array<size_t, kNumClasses>& counts,
                                   const std::array<double, kNumClasses>& boost = default_boost());

}  // namespace cbanet
