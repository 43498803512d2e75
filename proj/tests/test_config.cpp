#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "cbanet/config.hpp"
#include "doctest.h"

using namespace cbanet;

namespace {

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("parse_config_text reads flat key = value lines with comments") {
  const std::string text =
      "# experiment setup\n"
      "seed = 42\n"
      "\n"
      "paths.out = artifacts   # trailing comment\n"
      "labeller.theta_turn_g = 0.6\n"
      "window.window_s = 2.5\n"
      "split.protocol = driver\n"
      "split.lodo_fold = 3\n"
      "smote.enabled = false\n"
      "smote.k_neighbors = 7\n"
      "model.dropout = 0.35\n"
      "train.lr = 0.01\n"
      "train.gamma = 2\n"
      "train.class_weights = false\n"
      "train.max_epochs = 12\n"
      "eval.batch_size = 16\n"
      "sweep.windows_s = 1,2,3\n"
      "sweep.seeds = 7\n";
  const PipelineConfig cfg = parse_config_text(text);

  CHECK(cfg.seed == 42);
  CHECK(cfg.paths.out == "artifacts");
  CHECK(cfg.labeller.theta_turn_g == 0.6);
  CHECK(cfg.window.window_s == 2.5);
  CHECK(cfg.split.protocol == SplitProtocol::GroupedDriver);
  CHECK(cfg.split.lodo_fold == 3);
  CHECK(cfg.smote_enabled == false);
  CHECK(cfg.smote.k_neighbors == 7);
  CHECK(cfg.model.dropout == 0.35);
  CHECK(cfg.opt.lr == 0.01);
  CHECK(cfg.gamma == 2.0);
  CHECK(cfg.class_weights == false);
  CHECK(cfg.opt.max_epochs == 12);
  CHECK(cfg.eval_batch == 16);
  CHECK(cfg.sweep.windows_s == std::vector<double>{1.0, 2.0, 3.0});
  CHECK(cfg.sweep.seeds == std::vector<uint64_t>{7});

  // untouched keys keep their defaults
  CHECK(cfg.window.stride_s == 1.0);
  CHECK(cfg.opt.batch_size == 64);
  CHECK(cfg.labeller.theta_brake_g == -0.35);
}

TEST_CASE("unknown keys and malformed lines are rejected with the key path") {
  try {
    parse_config_text("train.learning_rate = 0.1\n");
    FAIL("unknown key accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
    CHECK(contains(e.what(), "train.learning_rate"));
  }

  try {
    parse_config_text("just a line without equals\n");
    FAIL("line without '=' accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
  }

  try {
    parse_config_text("model.dropout = banana\n");
    FAIL("bad double accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
    CHECK(contains(e.what(), "model.dropout"));
  }

  try {
    parse_config_text("train.batch_size = 2.5\n");
    FAIL("fractional int accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
    CHECK(contains(e.what(), "train.batch_size"));
  }

  try {
    parse_config_text("smote.enabled = maybe\n");
    FAIL("bad bool accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
  }

  try {
    parse_config_text("split.protocol = kfold\n");
    FAIL("bad protocol accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
    CHECK(contains(e.what(), "split.protocol"));
  }

  try {
    parse_config_text("sweep.seeds =\n");
    FAIL("empty list accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
  }

  try {
    parse_config_text("eval.subset = validation\n");
    FAIL("bad subset accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
    CHECK(contains(e.what(), "eval.subset"));
  }
}

TEST_CASE("resolved config text round-trips bit-for-bit") {
  PipelineConfig cfg;
  const std::string base = resolved_config_text(cfg);
  CHECK(base == resolved_config_text(parse_config_text(base)));

  // mutate a representative spread of fields, including awkward doubles
  cfg.seed = 0xDEADBEEFCAFEBABEULL;
  cfg.paths.input = "sessions";
  cfg.paths.out = "run_7";
  cfg.labeller.theta_brake_g = -0.3512345678901234;
  cfg.window.vote_fraction = 1.0 / 3.0;
  cfg.split.protocol = SplitProtocol::LeaveOneDriverOut;
  cfg.split.ratios = {0.8, 0.1, 0.1};
  cfg.smote_enabled = false;
  cfg.smote.target_fraction = 0.625;
  cfg.model.conv1_filters = 48;
  cfg.model.bn_momentum = 0.97;
  cfg.gamma = 0.5;
  cfg.opt.lr = 3e-4;
  cfg.opt.weight_decay = 1e-5;
  cfg.sched.min_lr = 2e-6;
  cfg.eval_batch = 128;
  cfg.bench_windows = 500;
  cfg.sweep.windows_s = {1.0, 4.0};
  cfg.sweep.horizons_s = {0.0, 0.25, 2.0};
  cfg.sweep.seeds = {1, 2, 3};
  cfg.sweep.max_epochs = 9;

  const std::string text = resolved_config_text(cfg);
  CHECK(text == resolved_config_text(parse_config_text(text)));
}

TEST_CASE("resolved text lists every known key exactly once") {
  const std::string text = resolved_config_text(PipelineConfig{});
  for (const std::string& key : config_keys()) {
    const std::string needle = key + " = ";
    size_t first = text.find(needle);
    REQUIRE_MESSAGE(first != std::string::npos, key);
    CHECK(text.find(needle, first + 1) == std::string::npos);
  }
  // every non-comment line is a known key
  size_t lines = 0;
  for (size_t pos = 0; pos < text.size();) {
    size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    if (!line.empty() && line[0] != '#') ++lines;
    pos = end + 1;
  }
  CHECK(lines == config_keys().size());
}

TEST_CASE("config files load, save and carry the tool version") {
  const std::string path = "config_roundtrip_tmp.cfg";
  PipelineConfig cfg;
  cfg.seed = 99;
  cfg.split.protocol = SplitProtocol::Stratified;
  save_resolved_config(cfg, path);

  std::ifstream in(path);
  REQUIRE(in.good());
  std::string first_line;
  std::getline(in, first_line);
  CHECK(contains(first_line, tool_version()));
  in.close();

  const PipelineConfig loaded = load_config(path);
  CHECK(resolved_config_text(loaded) == resolved_config_text(cfg));
  std::remove(path.c_str());

  try {
    load_config("no_such_config_file.cfg");
    FAIL("missing file accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IoError);
  }
}

TEST_CASE("to_cell_config maps the flat keys onto the pipeline structs") {
  PipelineConfig cfg;
  cfg.smote_enabled = false;
  cfg.class_weights = false;
  cfg.gamma = 1.5;
  cfg.opt.lr = 0.005;
  cfg.sched.plateau_patience = 4;
  cfg.split.protocol = SplitProtocol::GroupedSession;
  cfg.model.lstm1_hidden = 24;

  const CellConfig cell = to_cell_config(cfg);
  CHECK(cell.use_smote == false);
  CHECK(cell.use_class_weights == false);
  for (int c = 0; c < kNumClasses; ++c) {
    CHECK(cell.loss.gamma[c] == 1.5);
    CHECK(cell.loss.alpha[c] == 1.0);
  }
  CHECK(cell.opt.lr == 0.005);
  CHECK(cell.sched.plateau_patience == 4);
  CHECK(cell.split.protocol == SplitProtocol::GroupedSession);
  CHECK(cell.model.lstm1_hidden == 24);
}
