#pragma once
// Flat `section.key = value` configuration covering every pipeline stage.
// Unknown keys are rejected; the resolved config can be re-emitted verbatim
// so a run's artifact directory always documents exactly what it ran with.

#include <cstdint>
#include <string>
#include <vector>

#include "cbanet/pipeline.hpp"

namespace cbanet {

struct PipelineConfig {
  uint64_t seed = 0;

  struct Paths {
    std::string input;       // session CSV or directory of session CSVs
    std::string truth;       // optional ground-truth events CSV
    std::string windows;     // window container for train/evaluate
    std::string checkpoint;  // model checkpoint for evaluate/bench
    std::string norm_stats;  // normalization stats for evaluate
    std::string out = "out";
  } paths;

  struct Dataset {
    int n_sessions = 16;
    int n_drivers = 4;
    double duration_s = 120.0;
    double cruise_speed_kmh = 60.0;
    NoiseSigma noise = DatasetSpec{}.noise_sigma;
  } dataset;

  LabellerConfig labeller;
  WindowConfig window;
  PipelineSplitConfig split;

  bool smote_enabled = true;
  SmoteConfig smote;

  CBANetConfig model;

  bool class_weights = true;
  double gamma = 0.0;  // scalar, applied to all classes
  OptimizerConfig opt;
  ScheduleConfig sched;

  int eval_batch = 64;
  std::string eval_subset = "test";  // test | all
  int bench_windows = 200;
  int bench_warmup = 20;

  SweepConfig sweep;
};

std::string tool_version();

// Names of every recognized key, in emission order.
const std::vector<std::string>& config_keys();

// Throws Error(ConfigError) naming the offending key on unknown keys,
// malformed lines, or unparsable values. Later duplicates override.
PipelineConfig parse_config_text(const std::string& text);
PipelineConfig load_config(const std::string& path);

// Full `key = value` dump in stable order; parse_config_text() of the result
// reproduces the same config (and the same text again).
std::string resolved_config_text(const PipelineConfig& cfg);
void save_resolved_config(const PipelineConfig& cfg, const std::string& path);

CellConfig to_cell_config(const PipelineConfig& cfg);

}  // namespace cbanet
