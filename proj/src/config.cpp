#include "cbanet/config.hpp"

#include <cctype>
#include <climits>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <unordered_map>

namespace cbanet {

std::string tool_version() { return "cbanet 0.1.0"; }

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw Error(ErrorCode::ConfigError,
              "config key '" + key + "': cannot parse value '" + value + "'");
}

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double parse_f64(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) bad_value(key, v);
    return out;
  } catch (const Error&) {
    throw;
  } catch (...) {
    bad_value(key, v);
  }
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const long long out = std::stoll(v, &used);
    if (used != v.size()) bad_value(key, v);
    if (out < INT_MIN || out > INT_MAX) bad_value(key, v);
    return static_cast<int>(out);
  } catch (const Error&) {
    throw;
  } catch (...) {
    bad_value(key, v);
  }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  if (v.find('-') != std::string::npos) bad_value(key, v);
  try {
    size_t used = 0;
    const uint64_t out = std::stoull(v, &used);
    if (used != v.size()) bad_value(key, v);
    return out;
  } catch (const Error&) {
    throw;
  } catch (...) {
    bad_value(key, v);
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v);
}

std::vector<std::string> split_list(const std::string& key, const std::string& v) {
  std::vector<std::string> parts;
  size_t pos = 0;
  while (pos <= v.size()) {
    size_t comma = v.find(',', pos);
    if (comma == std::string::npos) comma = v.size();
    const std::string part = trim(v.substr(pos, comma - pos));
    if (part.empty()) bad_value(key, v);
    parts.push_back(part);
    pos = comma + 1;
  }
  return parts;
}

std::string fmt_f64(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

SplitProtocol parse_protocol(const std::string& key, const std::string& v) {
  if (v == "stratified") return SplitProtocol::Stratified;
  if (v == "session") return SplitProtocol::GroupedSession;
  if (v == "driver") return SplitProtocol::GroupedDriver;
  if (v == "lodo") return SplitProtocol::LeaveOneDriverOut;
  bad_value(key, v);
}

std::string protocol_name(SplitProtocol p) {
  switch (p) {
    case SplitProtocol::Stratified: return "stratified";
    case SplitProtocol::GroupedSession: return "session";
    case SplitProtocol::GroupedDriver: return "driver";
    case SplitProtocol::LeaveOneDriverOut: return "lodo";
  }
  return "stratified";
}

struct KeySpec {
  std::string name;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(PipelineConfig&)> get;
};

using F64Ref = std::function<double&(PipelineConfig&)>;
using IntRef = std::function<int&(PipelineConfig&)>;
using BoolRef = std::function<bool&(PipelineConfig&)>;
using StrRef = std::function<std::string&(PipelineConfig&)>;

std::vector<KeySpec> build_table() {
  std::vector<KeySpec> t;
  auto F = [&t](const char* name, F64Ref ref) {
    const std::string key = name;
    t.push_back({key,
                 [key, ref](PipelineConfig& c, const std::string& v) { ref(c) = parse_f64(key, v); },
                 [ref](PipelineConfig& c) { return fmt_f64(ref(c)); }});
  };
  auto I = [&t](const char* name, IntRef ref) {
    const std::string key = name;
    t.push_back({key,
                 [key, ref](PipelineConfig& c, const std::string& v) { ref(c) = parse_int(key, v); },
                 [ref](PipelineConfig& c) { return std::to_string(ref(c)); }});
  };
  auto B = [&t](const char* name, BoolRef ref) {
    const std::string key = name;
    t.push_back({key,
                 [key, ref](PipelineConfig& c, const std::string& v) { ref(c) = parse_bool(key, v); },
                 [ref](PipelineConfig& c) { return ref(c) ? "true" : "false"; }});
  };
  auto S = [&t](const char* name, StrRef ref) {
    const std::string key = name;
    t.push_back({key, [ref](PipelineConfig& c, const std::string& v) { ref(c) = v; },
                 [ref](PipelineConfig& c) { return ref(c); }});
  };

  t.push_back({"seed",
               [](PipelineConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); },
               [](PipelineConfig& c) { return std::to_string(c.seed); }});

  S("paths.input", [](PipelineConfig& c) -> std::string& { return c.paths.input; });
  S("paths.truth", [](PipelineConfig& c) -> std::string& { return c.paths.truth; });
  S("paths.windows", [](PipelineConfig& c) -> std::string& { return c.paths.windows; });
  S("paths.checkpoint", [](PipelineConfig& c) -> std::string& { return c.paths.checkpoint; });
  S("paths.norm_stats", [](PipelineConfig& c) -> std::string& { return c.paths.norm_stats; });
  S("paths.out", [](PipelineConfig& c) -> std::string& { return c.paths.out; });

  I("dataset.n_sessions", [](PipelineConfig& c) -> int& { return c.dataset.n_sessions; });
  I("dataset.n_drivers", [](PipelineConfig& c) -> int& { return c.dataset.n_drivers; });
  F("dataset.duration_s", [](PipelineConfig& c) -> double& { return c.dataset.duration_s; });
  F("dataset.cruise_speed_kmh",
    [](PipelineConfig& c) -> double& { return c.dataset.cruise_speed_kmh; });
  F("dataset.noise_speed", [](PipelineConfig& c) -> double& { return c.dataset.noise.speed; });
  F("dataset.noise_a_long", [](PipelineConfig& c) -> double& { return c.dataset.noise.a_long; });
  F("dataset.noise_a_lat", [](PipelineConfig& c) -> double& { return c.dataset.noise.a_lat; });
  F("dataset.noise_brake", [](PipelineConfig& c) -> double& { return c.dataset.noise.brake; });
  F("dataset.noise_throttle",
    [](PipelineConfig& c) -> double& { return c.dataset.noise.throttle; });

  F("labeller.theta_brake_g", [](PipelineConfig& c) -> double& { return c.labeller.theta_brake_g; });
  F("labeller.theta_accel_g", [](PipelineConfig& c) -> double& { return c.labeller.theta_accel_g; });
  F("labeller.theta_turn_g", [](PipelineConfig& c) -> double& { return c.labeller.theta_turn_g; });
  F("labeller.theta_speed_g", [](PipelineConfig& c) -> double& { return c.labeller.theta_speed_g; });
  F("labeller.v_min_kmh", [](PipelineConfig& c) -> double& { return c.labeller.v_min_kmh; });
  F("labeller.v_turn_kmh", [](PipelineConfig& c) -> double& { return c.labeller.v_turn_kmh; });
  F("labeller.window_s", [](PipelineConfig& c) -> double& { return c.labeller.window_s; });
  F("labeller.t_min_s", [](PipelineConfig& c) -> double& { return c.labeller.t_min_s; });
  F("labeller.closing_width_s",
    [](PipelineConfig& c) -> double& { return c.labeller.closing_width_s; });
  F("labeller.expansion_s", [](PipelineConfig& c) -> double& { return c.labeller.expansion_s; });
  F("labeller.rescue_brake_pedal",
    [](PipelineConfig& c) -> double& { return c.labeller.rescue_brake_pedal; });
  F("labeller.rescue_brake_factor",
    [](PipelineConfig& c) -> double& { return c.labeller.rescue_brake_factor; });
  F("labeller.throttle_intent",
    [](PipelineConfig& c) -> double& { return c.labeller.throttle_intent; });

  F("window.window_s", [](PipelineConfig& c) -> double& { return c.window.window_s; });
  F("window.stride_s", [](PipelineConfig& c) -> double& { return c.window.stride_s; });
  F("window.horizon_s", [](PipelineConfig& c) -> double& { return c.window.horizon_s; });
  F("window.vote_fraction", [](PipelineConfig& c) -> double& { return c.window.vote_fraction; });
  F("window.override_decel_g",
    [](PipelineConfig& c) -> double& { return c.window.override_decel_g; });
  F("window.override_lat_g", [](PipelineConfig& c) -> double& { return c.window.override_lat_g; });
  F("window.override_accel_g",
    [](PipelineConfig& c) -> double& { return c.window.override_accel_g; });
  F("window.override_pedal", [](PipelineConfig& c) -> double& { return c.window.override_pedal; });
  F("window.override_v_min_kmh",
    [](PipelineConfig& c) -> double& { return c.window.override_v_min_kmh; });

  t.push_back({"split.protocol",
               [](PipelineConfig& c, const std::string& v) {
                 c.split.protocol = parse_protocol("split.protocol", v);
               },
               [](PipelineConfig& c) { return protocol_name(c.split.protocol); }});
  F("split.train", [](PipelineConfig& c) -> double& { return c.split.ratios.train; });
  F("split.val", [](PipelineConfig& c) -> double& { return c.split.ratios.val; });
  F("split.test", [](PipelineConfig& c) -> double& { return c.split.ratios.test; });
  I("split.lodo_fold", [](PipelineConfig& c) -> int& { return c.split.lodo_fold; });

  B("smote.enabled", [](PipelineConfig& c) -> bool& { return c.smote_enabled; });
  I("smote.k_neighbors", [](PipelineConfig& c) -> int& { return c.smote.k_neighbors; });
  F("smote.target_fraction", [](PipelineConfig& c) -> double& { return c.smote.target_fraction; });

  I("model.conv1_filters", [](PipelineConfig& c) -> int& { return c.model.conv1_filters; });
  I("model.conv1_kernel", [](PipelineConfig& c) -> int& { return c.model.conv1_kernel; });
  I("model.conv2_filters", [](PipelineConfig& c) -> int& { return c.model.conv2_filters; });
  I("model.conv2_kernel", [](PipelineConfig& c) -> int& { return c.model.conv2_kernel; });
  I("model.lstm1_hidden", [](PipelineConfig& c) -> int& { return c.model.lstm1_hidden; });
  I("model.lstm2_hidden", [](PipelineConfig& c) -> int& { return c.model.lstm2_hidden; });
  I("model.dense1_units", [](PipelineConfig& c) -> int& { return c.model.dense1_units; });
  I("model.dense2_units", [](PipelineConfig& c) -> int& { return c.model.dense2_units; });
  F("model.dropout", [](PipelineConfig& c) -> double& { return c.model.dropout; });
  F("model.recurrent_dropout",
    [](PipelineConfig& c) -> double& { return c.model.recurrent_dropout; });
  F("model.bn_eps", [](PipelineConfig& c) -> double& { return c.model.bn_eps; });
  F("model.bn_momentum", [](PipelineConfig& c) -> double& { return c.model.bn_momentum; });

  F("train.lr", [](PipelineConfig& c) -> double& { return c.opt.lr; });
  F("train.beta1", [](PipelineConfig& c) -> double& { return c.opt.beta1; });
  F("train.beta2", [](PipelineConfig& c) -> double& { return c.opt.beta2; });
  F("train.eps", [](PipelineConfig& c) -> double& { return c.opt.eps; });
  F("train.weight_decay", [](PipelineConfig& c) -> double& { return c.opt.weight_decay; });
  I("train.batch_size", [](PipelineConfig& c) -> int& { return c.opt.batch_size; });
  I("train.max_epochs", [](PipelineConfig& c) -> int& { return c.opt.max_epochs; });
  F("train.gamma", [](PipelineConfig& c) -> double& { return c.gamma; });
  B("train.class_weights", [](PipelineConfig& c) -> bool& { return c.class_weights; });
  I("train.early_stop_patience",
    [](PipelineConfig& c) -> int& { return c.sched.early_stop_patience; });
  I("train.plateau_patience", [](PipelineConfig& c) -> int& { return c.sched.plateau_patience; });
  F("train.plateau_factor", [](PipelineConfig& c) -> double& { return c.sched.plateau_factor; });
  F("train.min_lr", [](PipelineConfig& c) -> double& { return c.sched.min_lr; });

  I("eval.batch_size", [](PipelineConfig& c) -> int& { return c.eval_batch; });
  t.push_back({"eval.subset",
               [](PipelineConfig& c, const std::string& v) {
                 if (v != "test" && v != "all") bad_value("eval.subset", v);
                 c.eval_subset = v;
               },
               [](PipelineConfig& c) { return c.eval_subset; }});
  I("eval.bench_windows", [](PipelineConfig& c) -> int& { return c.bench_windows; });
  I("eval.bench_warmup", [](PipelineConfig& c) -> int& { return c.bench_warmup; });

  t.push_back({"sweep.windows_s",
               [](PipelineConfig& c, const std::string& v) {
                 c.sweep.windows_s.clear();
                 for (const std::string& p : split_list("sweep.windows_s", v))
                   c.sweep.windows_s.push_back(parse_f64("sweep.windows_s", p));
               },
               [](PipelineConfig& c) {
                 std::string out;
                 for (double x : c.sweep.windows_s) out += (out.empty() ? "" : ",") + fmt_f64(x);
                 return out;
               }});
  t.push_back({"sweep.horizons_s",
               [](PipelineConfig& c, const std::string& v) {
                 c.sweep.horizons_s.clear();
                 for (const std::string& p : split_list("sweep.horizons_s", v))
                   c.sweep.horizons_s.push_back(parse_f64("sweep.horizons_s", p));
               },
               [](PipelineConfig& c) {
                 std::string out;
                 for (double x : c.sweep.horizons_s) out += (out.empty() ? "" : ",") + fmt_f64(x);
                 return out;
               }});
  t.push_back({"sweep.seeds",
               [](PipelineConfig& c, const std::string& v) {
                 c.sweep.seeds.clear();
                 for (const std::string& p : split_list("sweep.seeds", v))
                   c.sweep.seeds.push_back(parse_u64("sweep.seeds", p));
               },
               [](PipelineConfig& c) {
                 std::string out;
                 for (uint64_t s : c.sweep.seeds) out += (out.empty() ? "" : ",") + std::to_string(s);
                 return out;
               }});
  I("sweep.max_epochs", [](PipelineConfig& c) -> int& { return c.sweep.max_epochs; });

  return t;
}

const std::vector<KeySpec>& key_table() {
  static const std::vector<KeySpec> table = build_table();
  return table;
}

const std::unordered_map<std::string, size_t>& key_index() {
  static const std::unordered_map<std::string, size_t> index = [] {
    std::unordered_map<std::string, size_t> m;
    const auto& table = key_table();
    for (size_t i = 0; i < table.size(); ++i) m[table[i].name] = i;
    return m;
  }();
  return index;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const KeySpec& spec : key_table()) out.push_back(spec.name);
    return out;
  }();
  return names;
}

PipelineConfig parse_config_text(const std::string& text) {
  PipelineConfig cfg;
  const auto& table = key_table();
  const auto& index = key_index();

  std::istringstream in(text);
  std::string raw;
  size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;

    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::ConfigError,
                  "config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = index.find(key);
    if (it == index.end()) {
      throw Error(ErrorCode::ConfigError, "unknown config key '" + key + "'");
    }
    table[it->second].set(cfg, value);
  }
  return cfg;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string resolved_config_text(const PipelineConfig& cfg) {
  PipelineConfig copy = cfg;
  std::string out;
  for (const KeySpec& spec : key_table()) {
    out += spec.name + " = " + spec.get(copy) + "\n";
  }
  return out;
}

void save_resolved_config(const PipelineConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << "# " << tool_version() << " resolved configuration\n";
  out << resolved_config_text(cfg);
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path);
}

CellConfig to_cell_config(const PipelineConfig& cfg) {
  CellConfig cell;
  cell.split = cfg.split;
  cell.smote = cfg.smote;
  cell.use_smote = cfg.smote_enabled;
  cell.use_class_weights = cfg.class_weights;
  cell.model = cfg.model;
  for (int c = 0; c < kNumClasses; ++c) cell.loss.gamma[c] = cfg.gamma;
  cell.opt = cfg.opt;
  cell.sched = cfg.sched;
  return cell;
}

}  // namespace cbanet
