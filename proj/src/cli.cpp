#include "cbanet/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cbanet/config.hpp"
#include "cbanet/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cbanet {
namespace {

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void require_file(const std::string& path, const std::string& key) {
  if (path.empty()) throw Error(ErrorCode::MissingInput, key + " is required");
  if (!fs::exists(path)) throw Error(ErrorCode::MissingInput, key + " " + path + " does not exist");
}

TelemetrySession load_si_session(const std::string& path) {
  const TelemetrySession raw = load_csv_session(path);
  return convert_units(raw, {SpeedUnit::KilometersPerHour, AccelUnit::G});
}

// A directory of session CSVs (sorted by filename) or a single CSV.
std::vector<TelemetrySession> load_sessions(const std::string& input) {
  if (input.empty()) throw Error(ErrorCode::MissingInput, "paths.input is required");
  std::vector<TelemetrySession> sessions;
  if (fs::is_directory(input)) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(input)) {
      if (entry.path().extension() == ".csv") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error(ErrorCode::MissingInput, "no .csv sessions in " + input);
    for (const std::string& f : files) sessions.push_back(load_si_session(f));
  } else if (fs::exists(input)) {
    sessions.push_back(load_si_session(input));
  } else {
    throw Error(ErrorCode::MissingInput, "input path " + input + " does not exist");
  }
  return sessions;
}

void cmd_simulate(const PipelineConfig& cfg) {
  DatasetSpec spec;
  spec.n_sessions = cfg.dataset.n_sessions;
  spec.n_drivers = cfg.dataset.n_drivers;
  spec.duration_s = cfg.dataset.duration_s;
  spec.cruise_speed_kmh = cfg.dataset.cruise_speed_kmh;
  spec.noise_sigma = cfg.dataset.noise;
  spec.seed = cfg.seed;
  const SyntheticDataset data = generate_dataset(spec);

  const std::string session_dir = join(cfg.paths.out, "sessions");
  const std::string truth_dir = join(cfg.paths.out, "truth");
  fs::create_directories(session_dir);
  fs::create_directories(truth_dir);
  size_t events = 0;
  for (size_t i = 0; i < data.sessions.size(); ++i) {
    const std::string base = data.sessions[i].session_id + ".csv";
    save_csv_session(data.sessions[i], join(session_dir, base));
    save_ground_truth_csv(data.truths[i], join(truth_dir, base));
    events += data.truths[i].size();
  }
  std::printf("simulate: %zu sessions, %zu planted events -> %s\n", data.sessions.size(), events,
              cfg.paths.out.c_str());
}

void cmd_label(const PipelineConfig& cfg) {
  require_file(cfg.paths.input, "paths.input");
  const TelemetrySession session = load_si_session(cfg.paths.input);
  const LabelSequence labels = label_session(session, cfg.labeller);
  save_label_csv(session, labels, join(cfg.paths.out, "labels.csv"));

  if (!cfg.paths.truth.empty()) {
    require_file(cfg.paths.truth, "paths.truth");
    const GroundTruthEvents predicted = extract_events(labels, session.dt());
    const GroundTruthEvents truth = load_ground_truth_csv(cfg.paths.truth);
    const EventMatchStats stats = match_events(predicted, truth, 0.3);
    json j;
    j["iou_threshold"] = 0.3;
    j["true_positives"] = stats.true_positives;
    j["false_positives"] = stats.false_positives;
    j["false_negatives"] = stats.false_negatives;
    j["recall"] = stats.recall();
    j["precision"] = stats.precision();
    std::ofstream out(join(cfg.paths.out, "label_comparison.json"));
    if (!out) throw Error(ErrorCode::IoError, "cannot write label_comparison.json");
    out << j.dump(2) << "\n";
    std::printf("label: recall %.4f precision %.4f\n", stats.recall(), stats.precision());
  } else {
    std::printf("label: %zu samples -> labels.csv\n", labels.size());
  }
}

void cmd_featurize(const PipelineConfig& cfg) {
  require_file(cfg.paths.input, "paths.input");
  const TelemetrySession session = load_si_session(cfg.paths.input);
  FeatureFrame frame = engineer_features(session);
  save_feature_csv(frame, join(cfg.paths.out, "features.csv"));
  frame.tag = SplitTag::Train;  // single-session stats, no holdout to leak into
  const NormStats stats = fit_normalizer({frame});
  save_norm_stats(stats, join(cfg.paths.out, "norm_stats.json"));
  std::printf("featurize: %zu rows x %d channels -> features.csv\n", frame.channels[0].size(),
              kNumChannels);
}

void cmd_windows(const PipelineConfig& cfg) {
  const std::vector<TelemetrySession> sessions = load_sessions(cfg.paths.input);
  const WindowSet ws = windows_from_sessions(sessions, cfg.labeller, cfg.window);
  const DataSplit split = make_split(ws, cfg.split, cfg.seed);
  save_window_set(ws, join(cfg.paths.out, "windows.bin"));
  save_split_manifest(split, join(cfg.paths.out, "split.json"));
  const auto counts = class_counts(ws);
  std::printf("windows: %zu windows (normal %zu, accel %zu, brake %zu, turn %zu) -> windows.bin\n",
              ws.size(), counts[0], counts[1], counts[2], counts[3]);
}

void cmd_train(const PipelineConfig& cfg) {
  require_file(cfg.paths.windows, "paths.windows");
  const WindowSet ws = load_window_set(cfg.paths.windows);
  const CellResult run = run_cell(ws, to_cell_config(cfg), cfg.seed);

  save_checkpoint(run.trained.best, join(cfg.paths.out, "checkpoint.bin"));
  save_history_csv(run.trained.history, join(cfg.paths.out, "history.csv"));
  save_norm_stats(run.stats, join(cfg.paths.out, "norm_stats.json"));
  save_split_manifest(run.split, join(cfg.paths.out, "split.json"));
  std::printf("train: best epoch %d val loss %.6f, test macro-F2 %.4f -> checkpoint.bin\n",
              run.trained.history.best_epoch, run.trained.history.best_val_loss,
              run.eval.report.scores.macro_f2);
}

void cmd_evaluate(const PipelineConfig& cfg) {
  require_file(cfg.paths.windows, "paths.windows");
  require_file(cfg.paths.checkpoint, "paths.checkpoint");
  require_file(cfg.paths.norm_stats, "paths.norm_stats");

  const WindowSet ws = load_window_set(cfg.paths.windows);
  ModelParameters model = load_checkpoint(cfg.paths.checkpoint);
  const NormStats stats = load_norm_stats(cfg.paths.norm_stats);

  WindowSet chosen;
  if (cfg.eval_subset == "all") {
    chosen = ws;
  } else {
    const DataSplit split = make_split(ws, cfg.split, cfg.seed);
    chosen = subset(ws, split.test, "test");
  }
  const EvaluationResult res = evaluate(model, chosen, stats, cfg.eval_batch);
  save_report_json(res.report, res.confusion, join(cfg.paths.out, "report.json"));
  save_confusion_csv(res.confusion, join(cfg.paths.out, "confusion.csv"));
  save_probability_csv(res.probs, res.labels, join(cfg.paths.out, "probabilities.csv"));
  std::printf("evaluate: %lld windows, accuracy %.4f macro-F2 %.4f -> report.json\n",
              static_cast<long long>(res.report.windows), res.report.scores.accuracy,
              res.report.scores.macro_f2);
}

void cmd_sweep(const PipelineConfig& cfg) {
  SyntheticDataset data;
  data.sessions = load_sessions(cfg.paths.input);
  const std::vector<SweepRow> rows =
      sweep_window_horizon(data, cfg.labeller, cfg.window, to_cell_config(cfg), cfg.sweep);
  save_sweep_csv(rows, join(cfg.paths.out, "sweep.csv"));
  std::printf("sweep: %zu cells -> sweep.csv\n", rows.size());
}

void cmd_bench(const PipelineConfig& cfg) {
  ModelParameters model;
  if (!cfg.paths.checkpoint.empty()) {
    require_file(cfg.paths.checkpoint, "paths.checkpoint");
    model = load_checkpoint(cfg.paths.checkpoint);
  } else {
    CBANetConfig mcfg = cfg.model;
    // 25 Hz telemetry; rows follow the configured window length
    mcfg.input_rows = padded_rows(static_cast<int>(std::lround(cfg.window.window_s * 25.0)));
    mcfg.input_channels = kNumChannels;
    model = build_model(mcfg, cfg.seed);
  }
  const LatencyStats stats = latency_benchmark(model, cfg.bench_windows, cfg.bench_warmup, cfg.seed);
  json j;
  j["mean_ms"] = stats.mean_ms;
  j["p50_ms"] = stats.p50_ms;
  j["p95_ms"] = stats.p95_ms;
  j["n"] = stats.n;
  j["warmup"] = stats.warmup;
  std::ofstream out(join(cfg.paths.out, "latency.json"));
  if (!out) throw Error(ErrorCode::IoError, "cannot write latency.json");
  out << j.dump(2) << "\n";
  std::printf("bench: mean %.3f ms p50 %.3f ms p95 %.3f ms -> latency.json\n", stats.mean_ms,
              stats.p50_ms, stats.p95_ms);
}

void dispatch(const std::string& name, const PipelineConfig& cfg) {
  if (name == "simulate") return cmd_simulate(cfg);
  if (name == "label") return cmd_label(cfg);
  if (name == "featurize") return cmd_featurize(cfg);
  if (name == "windows") return cmd_windows(cfg);
  if (name == "train") return cmd_train(cfg);
  if (name == "evaluate") return cmd_evaluate(cfg);
  if (name == "sweep") return cmd_sweep(cfg);
  if (name == "bench") return cmd_bench(cfg);
  throw Error(ErrorCode::UnknownSubcommand, "unknown subcommand " + name);
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"aggressive-driving detection pipeline (CBANet)"};
  app.require_subcommand(1);

  std::string config_path;
  uint64_t seed_override = 0;
  std::string out_override;
  auto* config_opt = app.add_option("--config", config_path, "configuration file");
  auto* seed_opt = app.add_option("--seed", seed_override, "master seed (overrides config)");
  auto* out_opt = app.add_option("--out", out_override, "output directory (overrides config)");

  const char* names[] = {"simulate", "label",    "featurize", "windows",
                         "train",    "evaluate", "sweep",     "bench"};
  const char* briefs[] = {"generate synthetic sessions with ground truth",
                          "label one session, optionally compare against truth",
                          "emit engineered features and normalization stats",
                          "segment sessions into windows and write split manifests",
                          "train a model and write checkpoint + history",
                          "score a checkpoint on held-out windows",
                          "window/horizon grid sweep",
                          "batch-1 forward latency"};
  for (size_t i = 0; i < 8; ++i) app.add_subcommand(names[i], briefs[i])->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    PipelineConfig cfg;
    if (config_opt->count() > 0) {
      if (!fs::exists(config_path))
        throw Error(ErrorCode::MissingInput, "config file " + config_path + " does not exist");
      cfg = load_config(config_path);
    }
    if (seed_opt->count() > 0) cfg.seed = seed_override;
    if (out_opt->count() > 0) cfg.paths.out = out_override;

    fs::create_directories(cfg.paths.out);
    save_resolved_config(cfg, join(cfg.paths.out, "resolved_config.cfg"));
    dispatch(app.get_subcommands().front()->get_name(), cfg);
    return 0;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return is_validation_error(e.code()) ? 1 : 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

}  // namespace cbanet
