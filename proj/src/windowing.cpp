#include "cbanet/windowing.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "json.hpp"

namespace cbanet {

void validate_window_config(const WindowConfig& cfg) {
  if (cfg.window_s <= 0.0) throw Error(ErrorCode::InvalidConfig, "window_s must be positive");
  if (!(cfg.stride_s > 0.0 && cfg.stride_s <= cfg.window_s)) {
    throw Error(ErrorCode::InvalidConfig, "need 0 < stride_s <= window_s");
  }
  if (cfg.horizon_s < 0.0) throw Error(ErrorCode::InvalidConfig, "horizon_s must be >= 0");
  if (!(cfg.vote_fraction > 0.0 && cfg.vote_fraction <= 0.5)) {
    throw Error(ErrorCode::InvalidConfig, "vote_fraction must lie in (0, 0.5]");
  }
}

EventClass assign_window_label(const EventClass* label_slice, size_t slice_len,
                               const double* window_features, int rows, int channels,
                               const WindowConfig& cfg) {
  std::array<size_t, kNumClasses> counts{};
  for (size_t i = 0; i < slice_len; ++i) counts[static_cast<int>(label_slice[i])]++;

  // (1) sustained aggressive class, highest priority first
  EventClass label = EventClass::Normal;
  bool sustained = false;
  for (EventClass c : {EventClass::HarshTurn, EventClass::HarshBrake, EventClass::HarshAccel}) {
    if (static_cast<double>(counts[static_cast<int>(c)]) >=
        cfg.vote_fraction * static_cast<double>(slice_len)) {
      label = c;
      sustained = true;
      break;
    }
  }
  // (2) otherwise plain majority, priority breaking ties
  if (!sustained) {
    size_t best = 0;
    for (int c = 0; c < kNumClasses; ++c) {
      if (counts[c] > best || (counts[c] == best && c > static_cast<int>(label))) {
        best = counts[c];
        label = static_cast<EventClass>(c);
      }
    }
  }

  // (3) override on raw dynamics; conditions must co-occur within a sample
  bool ov_brake = false, ov_turn = false, ov_accel = false;
  const double decel_th = g_to_ms2(cfg.override_decel_g);
  const double lat_th = g_to_ms2(cfg.override_lat_g);
  const double accel_th = g_to_ms2(cfg.override_accel_g);
  const double v_min = kmh_to_ms(cfg.override_v_min_kmh);
  const double v_turn = kmh_to_ms(30.0);
  for (int r = 0; r < rows; ++r) {
    const double* row = window_features + static_cast<size_t>(r) * channels;
    const double v = row[static_cast<int>(FeatureChannel::Speed)];
    const double a_long = row[static_cast<int>(FeatureChannel::ALong)];
    const double a_lat = row[static_cast<int>(FeatureChannel::ALat)];
    const double brake = row[static_cast<int>(FeatureChannel::Brake)];
    const double throttle = row[static_cast<int>(FeatureChannel::Throttle)];
    ov_brake |= (-a_long >= decel_th && brake >= cfg.override_pedal && v > v_min);
    ov_turn |= (std::abs(a_lat) >= lat_th && v > v_turn);
    ov_accel |= (a_long >= accel_th && throttle >= cfg.override_pedal);
  }
  if (ov_turn) return EventClass::HarshTurn;
  if (ov_brake) return EventClass::HarshBrake;
  if (ov_accel) return EventClass::HarshAccel;
  return label;
}

WindowSet segment(const FeatureFrame& frame, const LabelSequence& labels, const WindowConfig& cfg,
                  double sample_rate_hz, const std::string& session_id,
                  const std::string& driver_id) {
  validate_window_config(cfg);
  const size_t n = frame.size();
  if (labels.size() != n) throw Error(ErrorCode::LengthMismatch, "frame and labels differ in length");

  const int W = std::max(1, static_cast<int>(std::lround(cfg.window_s * sample_rate_hz)));
  const int S = std::max(1, static_cast<int>(std::lround(cfg.stride_s * sample_rate_hz)));
  const int H = static_cast<int>(std::lround(cfg.horizon_s * sample_rate_hz));
  if (n < static_cast<size_t>(W + H)) {
    throw Error(ErrorCode::SessionTooShort,
                "session '" + session_id + "' has " + std::to_string(n) + " samples, needs " +
                    std::to_string(W + H));
  }

  WindowSet out;
  out.rows = W;
  out.channels = kNumChannels;
  const size_t n_windows = (n - static_cast<size_t>(W + H)) / S + 1;
  out.features.reserve(n_windows * out.window_values());

  for (size_t k = 0; k < n_windows; ++k) {
    const size_t start = k * S;
    const size_t label_start = start + H;
    for (int r = 0; r < W; ++r) {
      for (int c = 0; c < kNumChannels; ++c) {
        out.features.push_back(frame.channels[c][start + r]);
      }
    }
    // vote over raw dynamics of the label interval
    std::vector<double> label_block(static_cast<size_t>(W) * kNumChannels);
    for (int r = 0; r < W; ++r) {
      for (int c = 0; c < kNumChannels; ++c) {
        label_block[static_cast<size_t>(r) * kNumChannels + c] = frame.channels[c][label_start + r];
      }
    }
    out.labels.push_back(assign_window_label(labels.data() + label_start, W, label_block.data(), W,
                                             kNumChannels, cfg));
    out.session_ids.push_back(session_id);
    out.driver_ids.push_back(driver_id);
    out.start_t.push_back(static_cast<double>(start) / sample_rate_hz);
    out.synthetic.push_back(0);
    out.provenance.push_back({});
  }
  return out;
}

std::array<size_t, kNumClasses> class_counts(const WindowSet& windows) {
  std::array<size_t, kNumClasses> counts{};
  for (EventClass c : windows.labels) counts[static_cast<int>(c)]++;
  return counts;
}

std::array<size_t, kNumClasses> class_counts(const WindowSet& windows,
                                             const std::vector<size_t>& indices) {
  std::array<size_t, kNumClasses> counts{};
  for (size_t i : indices) counts[static_cast<int>(windows.labels[i])]++;
  return counts;
}

namespace {

void check_ratios(const SplitRatios& r) {
  if (r.train < 0.0 || r.val < 0.0 || r.test < 0.0 ||
      std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidConfig, "split ratios must be non-negative and sum to 1");
  }
}

// Largest-remainder split of n items into three quotas.
std::array<size_t, 3> quotas(size_t n, const SplitRatios& r) {
  const double shares[3] = {r.train * n, r.val * n, r.test * n};
  std::array<size_t, 3> q{};
  double rem[3];
  size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    q[i] = static_cast<size_t>(std::floor(shares[i]));
    rem[i] = shares[i] - static_cast<double>(q[i]);
    assigned += q[i];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (rem[i] > rem[best]) best = i;
    }
    q[best] += 1;
    rem[best] = -1.0;
    ++assigned;
  }
  return q;
}

}  // namespace

DataSplit split_stratified(const WindowSet& windows, const SplitRatios& ratios, uint64_t seed) {
  check_ratios(ratios);
  DataSplit split;
  split.protocol = "stratified";

  std::array<std::vector<size_t>, kNumClasses> by_class;
  for (size_t i = 0; i < windows.size(); ++i) {
    by_class[static_cast<int>(windows.labels[i])].push_back(i);
  }
  for (int c = 0; c < kNumClasses; ++c) {
    std::vector<size_t>& members = by_class[c];
    if (members.empty()) continue;
    if (members.size() < 3) {
      throw Error(ErrorCode::ClassTooSmall, std::string("class ") + class_name(static_cast<EventClass>(c)) +
                                                " has " + std::to_string(members.size()) + " windows");
    }
    std::mt19937_64 rng(derive_seed(seed, SeedRole::Split, static_cast<uint64_t>(c)));
    std::shuffle(members.begin(), members.end(), rng);
    const std::array<size_t, 3> q = quotas(members.size(), ratios);
    size_t pos = 0;
    for (size_t i = 0; i < q[0]; ++i) split.train.push_back(members[pos++]);
    for (size_t i = 0; i < q[1]; ++i) split.val.push_back(members[pos++]);
    for (size_t i = 0; i < q[2]; ++i) split.test.push_back(members[pos++]);
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

namespace {

const std::string& group_id(const WindowSet& w, size_t i, GroupBy by) {
  return by == GroupBy::Session ? w.session_ids[i] : w.driver_ids[i];
}

std::map<std::string, std::vector<size_t>> group_members(const WindowSet& windows, GroupBy by) {
  std::map<std::string, std::vector<size_t>> groups;
  for (size_t i = 0; i < windows.size(); ++i) {
    groups[group_id(windows, i, by)].push_back(i);
  }
  return groups;
}

}  // namespace

DataSplit split_grouped(const WindowSet& windows, GroupBy group_by, const SplitRatios& ratios,
                        uint64_t seed) {
  check_ratios(ratios);
  auto groups = group_members(windows, group_by);
  if (groups.size() < 3) {
    throw Error(ErrorCode::TooFewGroups, "grouped split needs >= 3 groups, have " +
                                             std::to_string(groups.size()));
  }

  std::vector<std::string> names;
  for (const auto& [name, members] : groups) names.push_back(name);
  std::mt19937_64 rng(derive_seed(seed, SeedRole::Split, 100));
  std::shuffle(names.begin(), names.end(), rng);

  const double total = static_cast<double>(windows.size());
  const double want[3] = {ratios.train * total, ratios.val * total, ratios.test * total};
  double have[3] = {0.0, 0.0, 0.0};
  std::array<std::vector<std::string>, 3> assigned;
  for (const std::string& name : names) {
    // largest remaining deficit takes the next group
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (want[i] - have[i] > want[best] - have[best]) best = i;
    }
    assigned[best].push_back(name);
    have[best] += static_cast<double>(groups[name].size());
  }
  // keep every nonzero-ratio split populated
  auto donate = [&](int to) {
    for (int from : {0, 1, 2}) {
      if (from != to && assigned[from].size() > 1) {
        assigned[to].push_back(assigned[from].back());
        assigned[from].pop_back();
        return;
      }
    }
  };
  for (int i = 0; i < 3; ++i) {
    if (want[i] > 0.0 && assigned[i].empty()) donate(i);
  }

  DataSplit split;
  split.protocol = group_by == GroupBy::Session ? "session" : "driver";
  for (int i = 0; i < 3; ++i) {
    std::vector<size_t>* dst = i == 0 ? &split.train : i == 1 ? &split.val : &split.test;
    for (const std::string& name : assigned[i]) {
      const std::vector<size_t>& members = groups[name];
      dst->insert(dst->end(), members.begin(), members.end());
    }
    std::sort(dst->begin(), dst->end());
  }
  return split;
}

DataSplit split_grouped_holdout(const WindowSet& windows, GroupBy group_by,
                                const std::vector<std::string>& test_ids,
                                const std::vector<std::string>& val_ids) {
  auto groups = group_members(windows, group_by);
  if (groups.size() < 3) {
    throw Error(ErrorCode::TooFewGroups, "grouped split needs >= 3 groups, have " +
                                             std::to_string(groups.size()));
  }
  std::set<std::string> test_set(test_ids.begin(), test_ids.end());
  std::set<std::string> val_set(val_ids.begin(), val_ids.end());
  for (const std::string& id : test_set) {
    if (!groups.count(id)) throw Error(ErrorCode::UnknownGroupId, "unknown group '" + id + "'");
  }
  for (const std::string& id : val_set) {
    if (!groups.count(id)) throw Error(ErrorCode::UnknownGroupId, "unknown group '" + id + "'");
    if (test_set.count(id)) throw Error(ErrorCode::InvalidConfig, "group '" + id + "' held out twice");
  }

  DataSplit split;
  split.protocol = group_by == GroupBy::Session ? "session" : "driver";
  for (const auto& [name, members] : groups) {
    std::vector<size_t>* dst = test_set.count(name) ? &split.test
                               : val_set.count(name) ? &split.val
                                                     : &split.train;
    dst->insert(dst->end(), members.begin(), members.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::vector<DataSplit> leave_one_driver_out(const WindowSet& windows) {
  auto groups = group_members(windows, GroupBy::Driver);
  if (groups.size() < 3) {
    throw Error(ErrorCode::TooFewGroups, "leave-one-driver-out needs >= 3 drivers, have " +
                                             std::to_string(groups.size()));
  }
  std::vector<std::string> drivers;
  for (const auto& [name, members] : groups) drivers.push_back(name);
  std::sort(drivers.begin(), drivers.end());

  std::vector<DataSplit> folds;
  for (size_t d = 0; d < drivers.size(); ++d) {
    const std::string& val_driver = drivers[(d + 1) % drivers.size()];
    folds.push_back(split_grouped_holdout(windows, GroupBy::Driver, {drivers[d]}, {val_driver}));
  }
  return folds;
}

void validate_split(const WindowSet& windows, const DataSplit& split) {
  std::vector<uint8_t> seen(windows.size(), 0);
  for (const std::vector<size_t>* part : {&split.train, &split.val, &split.test}) {
    for (size_t i : *part) {
      if (i >= windows.size()) {
        throw Error(ErrorCode::InvalidConfig, "split index " + std::to_string(i) + " out of range");
      }
      if (seen[i]++) {
        throw Error(ErrorCode::InvalidConfig, "window " + std::to_string(i) + " assigned twice");
      }
    }
  }
  if (split.protocol == "session" || split.protocol == "driver") {
    const GroupBy by = split.protocol == "session" ? GroupBy::Session : GroupBy::Driver;
    std::array<std::set<std::string>, 3> ids;
    const std::vector<size_t>* parts[3] = {&split.train, &split.val, &split.test};
    for (int p = 0; p < 3; ++p) {
      for (size_t i : *parts[p]) ids[p].insert(group_id(windows, i, by));
    }
    for (int a = 0; a < 3; ++a) {
      for (int b = a + 1; b < 3; ++b) {
        for (const std::string& id : ids[a]) {
          if (ids[b].count(id)) {
            throw Error(ErrorCode::InvalidConfig, "group '" + id + "' spans two splits");
          }
        }
      }
    }
  }
}

WindowSet subset(const WindowSet& windows, const std::vector<size_t>& indices,
                 const std::string& split_tag) {
  WindowSet out;
  out.rows = windows.rows;
  out.channels = windows.channels;
  out.split_tag = split_tag;
  out.features.reserve(indices.size() * windows.window_values());
  for (size_t i : indices) {
    const double* src = windows.window_data(i);
    out.features.insert(out.features.end(), src, src + windows.window_values());
    out.labels.push_back(windows.labels[i]);
    out.session_ids.push_back(windows.session_ids[i]);
    out.driver_ids.push_back(windows.driver_ids[i]);
    out.start_t.push_back(windows.start_t[i]);
    out.synthetic.push_back(windows.synthetic[i]);
    out.provenance.push_back(windows.provenance[i]);
  }
  return out;
}

void append(WindowSet& dst, const WindowSet& extra) {
  if (dst.size() == 0 && dst.rows == 0) {
    dst.rows = extra.rows;
    dst.channels = extra.channels;
  }
  if (dst.rows != extra.rows || dst.channels != extra.channels) {
    throw Error(ErrorCode::ShapeMismatch, "window shapes differ: " + std::to_string(dst.rows) + "x" +
                                              std::to_string(dst.channels) + " vs " +
                                              std::to_string(extra.rows) + "x" +
                                              std::to_string(extra.channels));
  }
  dst.features.insert(dst.features.end(), extra.features.begin(), extra.features.end());
  dst.labels.insert(dst.labels.end(), extra.labels.begin(), extra.labels.end());
  dst.session_ids.insert(dst.session_ids.end(), extra.session_ids.begin(), extra.session_ids.end());
  dst.driver_ids.insert(dst.driver_ids.end(), extra.driver_ids.begin(), extra.driver_ids.end());
  dst.start_t.insert(dst.start_t.end(), extra.start_t.begin(), extra.start_t.end());
  dst.synthetic.insert(dst.synthetic.end(), extra.synthetic.begin(), extra.synthetic.end());
  dst.provenance.insert(dst.provenance.end(), extra.provenance.begin(), extra.provenance.end());
}

NormStats fit_normalizer_windows(const WindowSet& windows, const std::vector<size_t>& train_indices) {
  if (train_indices.empty() || windows.rows == 0) {
    throw Error(ErrorCode::EmptyTrainingPool, "no training windows to fit on");
  }
  NormStats stats;
  const size_t rows_total = train_indices.size() * static_cast<size_t>(windows.rows);
  for (int c = 0; c < windows.channels; ++c) {
    double sum = 0.0;
    for (size_t w : train_indices) {
      for (int r = 0; r < windows.rows; ++r) sum += windows.at(w, r, c);
    }
    const double mean = sum / static_cast<double>(rows_total);
    double var = 0.0;
    for (size_t w : train_indices) {
      for (int r = 0; r < windows.rows; ++r) {
        const double d = windows.at(w, r, c) - mean;
        var += d * d;
      }
    }
    stats.mean[c] = mean;
    stats.stddev[c] = std::max(std::sqrt(var / static_cast<double>(rows_total)), 1e-8);
  }
  return stats;
}

void apply_normalizer_windows(WindowSet& windows, const NormStats& stats) {
  if (windows.channels != kNumChannels) {
    throw Error(ErrorCode::ChannelMismatch, "window set has " + std::to_string(windows.channels) +
                                                " channels, expected " + std::to_string(kNumChannels));
  }
  for (size_t w = 0; w < windows.size(); ++w) {
    double* block = windows.features.data() + w * windows.window_values();
    for (int r = 0; r < windows.rows; ++r) {
      for (int c = 0; c < windows.channels; ++c) {
        double& v = block[static_cast<size_t>(r) * windows.channels + c];
        v = (v - stats.mean[c]) / stats.stddev[c];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// serialization

namespace {
constexpr char kMagic[8] = {'C', 'B', 'W', 'S', '0', '1', '\n', '\0'};
}

void save_window_set(const WindowSet& windows, const std::string& path) {
  nlohmann::json header;
  header["count"] = windows.size();
  header["rows"] = windows.rows;
  header["channels"] = windows.channels;
  header["split_tag"] = windows.split_tag;
  header["channel_names"] = std::vector<std::string>(channel_names().begin(), channel_names().end());
  nlohmann::json encoding;
  for (int c = 0; c < kNumClasses; ++c) encoding[class_name(static_cast<EventClass>(c))] = c;
  header["class_encoding"] = encoding;
  std::vector<int> labels;
  for (EventClass c : windows.labels) labels.push_back(static_cast<int>(c));
  header["labels"] = labels;
  header["session_ids"] = windows.session_ids;
  header["driver_ids"] = windows.driver_ids;
  header["start_t"] = windows.start_t;
  header["synthetic"] = windows.synthetic;
  nlohmann::json prov = nlohmann::json::array();
  for (const WindowSet::Provenance& p : windows.provenance) {
    prov.push_back({{"base", p.base}, {"neighbor", p.neighbor}, {"lambda", p.lambda}});
  }
  header["provenance"] = prov;

  const std::string header_str = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  out.write(kMagic, sizeof(kMagic));
  const uint64_t len = header_str.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  std::vector<float> payload(windows.features.begin(), windows.features.end());
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!out) throw Error(ErrorCode::IoError, "short write to '" + path + "'");
}

WindowSet load_window_set(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingInput, "cannot open '" + path + "'");
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::UnparsableValue, "'" + path + "' is not a window container");
  }
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_str(len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error(ErrorCode::UnparsableValue, "truncated header in '" + path + "'");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::UnparsableValue, std::string("bad window header: ") + e.what());
  }

  WindowSet out;
  out.rows = header.at("rows").get<int>();
  out.channels = header.at("channels").get<int>();
  out.split_tag = header.value("split_tag", "unsplit");
  const size_t count = header.at("count").get<size_t>();
  for (int label : header.at("labels").get<std::vector<int>>()) {
    if (label < 0 || label >= kNumClasses) {
      throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(label));
    }
    out.labels.push_back(static_cast<EventClass>(label));
  }
  out.session_ids = header.at("session_ids").get<std::vector<std::string>>();
  out.driver_ids = header.at("driver_ids").get<std::vector<std::string>>();
  out.start_t = header.at("start_t").get<std::vector<double>>();
  out.synthetic = header.at("synthetic").get<std::vector<uint8_t>>();
  for (const auto& p : header.at("provenance")) {
    out.provenance.push_back(
        {p.at("base").get<int64_t>(), p.at("neighbor").get<int64_t>(), p.at("lambda").get<double>()});
  }
  if (out.labels.size() != count || out.session_ids.size() != count ||
      out.driver_ids.size() != count || out.start_t.size() != count ||
      out.synthetic.size() != count || out.provenance.size() != count) {
    throw Error(ErrorCode::UnparsableValue, "inconsistent metadata lengths in '" + path + "'");
  }

  const size_t values = count * static_cast<size_t>(out.rows) * out.channels;
  std::vector<float> payload(values);
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(values * sizeof(float)));
  if (!in) throw Error(ErrorCode::UnparsableValue, "truncated payload in '" + path + "'");
  out.features.assign(payload.begin(), payload.end());
  return out;
}

void save_split_manifest(const DataSplit& split, const std::string& path) {
  nlohmann::json doc;
  doc["protocol"] = split.protocol;
  doc["train"] = split.train;
  doc["val"] = split.val;
  doc["test"] = split.test;
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  out << doc.dump(2) << "\n";
}

DataSplit load_split_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingInput, "cannot open '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::UnparsableValue, std::string("bad split manifest: ") + e.what());
  }
  DataSplit split;
  split.protocol = doc.at("protocol").get<std::string>();
  split.train = doc.at("train").get<std::vector<size_t>>();
  split.val = doc.at("val").get<std::vector<size_t>>();
  split.test = doc.at("test").get<std::vector<size_t>>();
  return split;
}

}  // namespace cbanet
