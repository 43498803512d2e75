#pragma once
// Sliding-window segmentation with label-safe voting, split protocols and the
// binary WindowSet container.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cbanet/common.hpp"
#include "cbanet/event_labeller.hpp"
#include "cbanet/features.hpp"

namespace cbanet {

struct WindowConfig {
  double window_s = 4.0;
  double stride_s = 1.0;
  double horizon_s = 0.0;
  double vote_fraction = 0.125;  // fraction of window samples for "sustained"
  // rule-based override thresholds on raw window dynamics
  double override_decel_g = 0.45;
  double override_lat_g = 0.60;
  double override_accel_g = 0.45;
  double override_pedal = 0.5;
  double override_v_min_kmh = 15.0;
};

void validate_window_config(const WindowConfig& cfg);

// Columnar window container. Features are row-major per window:
// features[w*rows*channels + r*channels + c], stored in double internally and
// serialized as little-endian float32.
struct WindowSet {
  int rows = 0;
  int channels = kNumChannels;
  std::vector<double> features;
  std::vector<EventClass> labels;
  std::vector<std::string> session_ids;
  std::vector<std::string> driver_ids;
  std::vector<double> start_t;
  std::vector<uint8_t> synthetic;  // 1 for SMOTE-generated windows

  struct Provenance {
    int64_t base = -1;      // index of x_i in this set
    int64_t neighbor = -1;  // index of x_nn
    double lambda = 0.0;
  };
  std::vector<Provenance> provenance;  // aligned with windows

  std::string split_tag = "unsplit";

  size_t size() const { return labels.size(); }
  size_t window_values() const { return static_cast<size_t>(rows) * channels; }
  double at(size_t w, int r, int c) const {
    return features[w * window_values() + static_cast<size_t>(r) * channels + c];
  }
  const double* window_data(size_t w) const { return features.data() + w * window_values(); }
};

// Cuts [t, t+W) feature windows with stride S; the label is voted over
// [t+H, t+H+W). Windows whose label interval leaves the session are dropped.
WindowSet segment(const FeatureFrame& frame, const LabelSequence& labels, const WindowConfig& cfg,
                  double sample_rate_hz, const std::string& session_id,
                  const std::string& driver_id);

// Label-safe voting plus the rule-based override. `window_features` is the
// raw (unnormalized, SI) feature block of the label interval, row-major
// rows x channels.
EventClass assign_window_label(const EventClass* label_slice, size_t slice_len,
                               const double* window_features, int rows, int channels,
                               const WindowConfig& cfg);

struct DataSplit {
  std::vector<size_t> train;
  std::vector<size_t> val;
  std::vector<size_t> test;
  std::string protocol;  // stratified | session | driver
};

struct SplitRatios {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

// Per-class largest-remainder allocation; proportions within +-1 window of
// the ratios per class. Deterministic per seed.
DataSplit split_stratified(const WindowSet& windows, const SplitRatios& ratios, uint64_t seed);

enum class GroupBy { Session, Driver };

// Groups assigned atomically to splits, targeting the window-count ratios.
DataSplit split_grouped(const WindowSet& windows, GroupBy group_by, const SplitRatios& ratios,
                        uint64_t seed);

// Explicit holdout: the named groups form the test set (and optionally the
// validation set); everything else trains.
DataSplit split_grouped_holdout(const WindowSet& windows, GroupBy group_by,
                                const std::vector<std::string>& test_ids,
                                const std::vector<std::string>& val_ids = {});

// One fold per driver: that driver tests, the next (cyclically, by sorted id)
// validates, the rest train.
std::vector<DataSplit> leave_one_driver_out(const WindowSet& windows);

// Disjointness plus group-atomicity for session/driver protocols.
void validate_split(const WindowSet& windows, const DataSplit& split);

std::array<size_t, kNumClasses> class_counts(const WindowSet& windows);
std::array<size_t, kNumClasses> class_counts(const WindowSet& windows,
                                             const std::vector<size_t>& indices);

// Copies the selected windows into a new set tagged with `split_tag`.
WindowSet subset(const WindowSet& windows, const std::vector<size_t>& indices,
                 const std::string& split_tag);

// Appends all of `extra` (shapes must match; an empty destination adopts them).
void append(WindowSet& dst, const WindowSet& extra);

// Normalization over windows (pool = all rows of the listed train windows).
NormStats fit_normalizer_windows(const WindowSet& windows, const std::vector<size_t>& train_indices);
void apply_normalizer_windows(WindowSet& windows, const NormStats& stats);

// Binary container and JSON split manifests.
void save_window_set(const WindowSet& windows, const std::string& path);
WindowSet load_window_set(const std::string& path);
void save_split_manifest(const DataSplit& split, const std::string& path);
DataSplit load_split_manifest(const std::string& path);

}  // namespace cbanet
