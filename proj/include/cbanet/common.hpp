#pragma once
// Shared error model, event classes, unit conversions and seeding helpers.

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace cbanet {

inline constexpr double kGravity = 9.80665;  // m/s^2 per g
inline constexpr int kNumClasses = 4;

inline double kmh_to_ms(double kmh) { return kmh / 3.6; }
inline double ms_to_kmh(double ms) { return ms * 3.6; }
inline double g_to_ms2(double g) { return g * kGravity; }

enum class EventClass : int {
  Normal = 0,
  HarshAccel = 1,
  HarshBrake = 2,
  HarshTurn = 3,
};

// Conflict priority: turning > braking > acceleration > normal.
// The numeric encoding is ordered so that a larger value wins.
inline bool outranks(EventClass a, EventClass b) {
  return static_cast<int>(a) > static_cast<int>(b);
}

const char* class_name(EventClass c);
EventClass class_from_name(const std::string& name);

enum class ErrorCode {
  // telemetry_io
  MissingColumn,
  NonMonotonicTime,
  NonUniformSampling,
  UnparsableValue,
  InfeasibleEvent,
  // event_labeller
  EmptySignal,
  // feature_pipeline
  EmptyTrainingPool,
  ChannelMismatch,
  NotTrainingData,
  // windowing
  SessionTooShort,
  ClassTooSmall,
  UnknownGroupId,
  TooFewGroups,
  // imbalance
  NotTrainingSplit,
  DegenerateClass,
  EmptyClass,
  // neural_core
  ShapeMismatch,
  BatchTooSmall,
  InvalidConfig,
  StaleCache,
  // training
  LabelOutOfRange,
  EmptySplit,
  DivergedLoss,
  // evaluation
  LengthMismatch,
  SingleClassTruth,
  EmptyTestSet,
  MissingInput,
  // cli
  UnknownSubcommand,
  ConfigError,
  IoError,
};

const char* error_code_name(ErrorCode c);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// Validation errors map to CLI exit 1, runtime failures to exit 2.
bool is_validation_error(ErrorCode c);

// SplitMix64, used to derive independent sub-seeds from one master seed.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stable role tags so every stage draws from its own stream.
enum class SeedRole : uint64_t {
  Simulate = 1,
  Split = 2,
  Smote = 3,
  ModelInit = 4,
  TrainShuffle = 5,
  Dropout = 6,
  Bench = 7,
};

inline uint64_t derive_seed(uint64_t master, SeedRole role, uint64_t index = 0) {
  return splitmix64(master ^ splitmix64(static_cast<uint64_t>(role) * 0x9e3779b97f4a7c15ULL + index));
}

}  // namespace cbanet
