#include "cbanet/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace cbanet {

using nlohmann::json;

void validate_config(const CBANetConfig& cfg) {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); };
  if (cfg.input_rows < 4 || cfg.input_rows % 4 != 0)
    bad("input_rows must be a positive multiple of 4 (two pooling stages), got " +
        std::to_string(cfg.input_rows));
  if (cfg.input_channels < 1) bad("input_channels must be positive");
  if (cfg.conv1_kernel < 1 || cfg.conv1_kernel % 2 == 0 || cfg.conv2_kernel < 1 ||
      cfg.conv2_kernel % 2 == 0)
    bad("conv kernels must be odd");
  if (cfg.conv1_filters < 1 || cfg.conv2_filters < 1 || cfg.lstm1_hidden < 1 ||
      cfg.lstm2_hidden < 1 || cfg.dense1_units < 1 || cfg.dense2_units < 1)
    bad("layer widths must be positive");
  if (cfg.num_classes < 2) bad("num_classes must be at least 2");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0 || cfg.recurrent_dropout < 0.0 ||
      cfg.recurrent_dropout >= 1.0)
    bad("dropout rates must be in [0, 1)");
  if (cfg.bn_eps <= 0.0) bad("bn_eps must be positive");
  if (cfg.bn_momentum < 0.0 || cfg.bn_momentum >= 1.0) bad("bn_momentum must be in [0, 1)");
}

View ModelParameters::tensor(const std::string& name) {
  auto it = index.find(name);
  if (it == index.end()) throw Error(ErrorCode::ShapeMismatch, "unknown tensor " + name);
  const TensorInfo& ti = manifest[it->second];
  const int rows = ti.shape.size() == 2 ? ti.shape[0] : 1;
  const int cols = ti.shape.size() == 2 ? ti.shape[1] : ti.shape[0];
  return View{flat.data() + ti.offset, rows, cols};
}

CView ModelParameters::tensor(const std::string& name) const {
  auto* self = const_cast<ModelParameters*>(this);
  return CView(self->tensor(name));
}

double* ModelParameters::data(const std::string& name) { return tensor(name).p; }

namespace {

struct ManifestBuilder {
  std::vector<TensorInfo> entries;
  size_t cursor = 0;

  void add(const std::string& name, std::vector<int> shape, bool buffer) {
    size_t n = 1;
    for (int s : shape) n *= static_cast<size_t>(s);
    entries.push_back({name, std::move(shape), cursor, n, buffer});
    cursor += n;
  }
};

std::vector<TensorInfo> build_manifest(const CBANetConfig& c, size_t* learnable_count) {
  ManifestBuilder mb;
  const int lstm1_in = c.conv2_filters;
  const int lstm2_in = 2 * c.lstm1_hidden;
  const int head_in = 2 * c.lstm2_hidden;

  mb.add("conv1.W", {c.conv1_kernel * c.input_channels, c.conv1_filters}, false);
  mb.add("conv1.b", {c.conv1_filters}, false);
  mb.add("bn1.gamma_beta", {2, c.conv1_filters}, false);
  mb.add("conv2.W", {c.conv2_kernel * c.conv1_filters, c.conv2_filters}, false);
  mb.add("conv2.b", {c.conv2_filters}, false);
  mb.add("bn2.gamma_beta", {2, c.conv2_filters}, false);
  for (const char* dir : {"fwd", "bwd"}) {
    const std::string p = std::string("lstm1.") + dir;
    mb.add(p + ".Wx", {lstm1_in, 4 * c.lstm1_hidden}, false);
    mb.add(p + ".Wh", {c.lstm1_hidden, 4 * c.lstm1_hidden}, false);
    mb.add(p + ".b", {4 * c.lstm1_hidden}, false);
  }
  mb.add("attn.w", {2 * c.lstm1_hidden}, false);
  mb.add("attn.b", {1}, false);
  for (const char* dir : {"fwd", "bwd"}) {
    const std::string p = std::string("lstm2.") + dir;
    mb.add(p + ".Wx", {lstm2_in, 4 * c.lstm2_hidden}, false);
    mb.add(p + ".Wh", {c.lstm2_hidden, 4 * c.lstm2_hidden}, false);
    mb.add(p + ".b", {4 * c.lstm2_hidden}, false);
  }
  mb.add("dense1.W", {head_in, c.dense1_units}, false);
  mb.add("dense1.b", {c.dense1_units}, false);
  mb.add("bn3.gamma_beta", {2, c.dense1_units}, false);
  mb.add("dense2.W", {c.dense1_units, c.dense2_units}, false);
  mb.add("dense2.b", {c.dense2_units}, false);
  mb.add("dense3.W", {c.dense2_units, c.num_classes}, false);
  mb.add("dense3.b", {c.num_classes}, false);
  *learnable_count = mb.cursor;

  mb.add("bn1.running_mean", {c.conv1_filters}, true);
  mb.add("bn1.running_var", {c.conv1_filters}, true);
  mb.add("bn2.running_mean", {c.conv2_filters}, true);
  mb.add("bn2.running_var", {c.conv2_filters}, true);
  mb.add("bn3.running_mean", {c.dense1_units}, true);
  mb.add("bn3.running_var", {c.dense1_units}, true);
  return mb.entries;
}

void fill_uniform(std::mt19937_64& rng, double limit, double* p, size_t n) {
  std::uniform_real_distribution<double> uni(-limit, limit);
  for (size_t i = 0; i < n; ++i) p[i] = uni(rng);
}

}  // namespace

ModelParameters build_model(const CBANetConfig& cfg, uint64_t seed) {
  validate_config(cfg);
  ModelParameters mp;
  mp.config = cfg;
  mp.seed = seed;
  mp.manifest = build_manifest(cfg, &mp.learnable_count);
  size_t total = 0;
  for (size_t i = 0; i < mp.manifest.size(); ++i) {
    mp.index[mp.manifest[i].name] = i;
    total += mp.manifest[i].size;
  }
  mp.flat.assign(total, 0.0);

  std::mt19937_64 rng(derive_seed(seed, SeedRole::ModelInit));
  auto he = [&](const std::string& name, int fan_in) {
    View v = mp.tensor(name);
    fill_uniform(rng, std::sqrt(6.0 / fan_in), v.p, v.size());
  };
  auto gamma_beta = [&](const std::string& name) {
    View v = mp.tensor(name);
    for (int c = 0; c < v.cols; ++c) v(0, c) = 1.0;
  };
  auto lstm_init = [&](const std::string& prefix, int hidden) {
    const double limit = 1.0 / std::sqrt(static_cast<double>(hidden));
    View wx = mp.tensor(prefix + ".Wx");
    fill_uniform(rng, limit, wx.p, wx.size());
    View wh = mp.tensor(prefix + ".Wh");
    fill_uniform(rng, limit, wh.p, wh.size());
    double* b = mp.data(prefix + ".b");
    for (int j = 0; j < hidden; ++j) b[hidden + j] = 1.0;  // forget gate
  };

  he("conv1.W", cfg.conv1_kernel * cfg.input_channels);
  gamma_beta("bn1.gamma_beta");
  he("conv2.W", cfg.conv2_kernel * cfg.conv1_filters);
  gamma_beta("bn2.gamma_beta");
  lstm_init("lstm1.fwd", cfg.lstm1_hidden);
  lstm_init("lstm1.bwd", cfg.lstm1_hidden);
  he("attn.w", 2 * cfg.lstm1_hidden);
  lstm_init("lstm2.fwd", cfg.lstm2_hidden);
  lstm_init("lstm2.bwd", cfg.lstm2_hidden);
  he("dense1.W", 2 * cfg.lstm2_hidden);
  gamma_beta("bn3.gamma_beta");
  he("dense2.W", cfg.dense1_units);
  he("dense3.W", cfg.dense2_units);

  for (const TensorInfo& ti : mp.manifest) {
    if (ti.buffer && ti.name.find("running_var") != std::string::npos)
      std::fill_n(mp.flat.data() + ti.offset, ti.size, 1.0);
  }
  return mp;
}

size_t parameter_count(const ModelParameters& params) { return params.learnable_count; }

namespace {

LstmParams lstm_params(ModelParameters& p, const std::string& prefix, int in, int hidden) {
  LstmParams lp;
  lp.Wx = CView(p.tensor(prefix + ".Wx"));
  lp.Wh = CView(p.tensor(prefix + ".Wh"));
  lp.b = p.data(prefix + ".b");
  lp.in = in;
  lp.hidden = hidden;
  return lp;
}

BatchNormBuffers bn_buffers(ModelParameters& p, const std::string& prefix) {
  return BatchNormBuffers{p.data(prefix + ".running_mean"), p.data(prefix + ".running_var")};
}

Mat seq_to_mat(const Seq& s) {
  Mat m(s.B, s.C);
  std::memcpy(m.d.data(), s.d.data(), sizeof(double) * s.d.size());
  return m;
}

Seq mat_to_seq(const Mat& m) {
  Seq s(m.rows, 1, m.cols);
  std::memcpy(s.d.data(), m.d.data(), sizeof(double) * m.d.size());
  return s;
}

}  // namespace

ForwardResult model_forward(ModelParameters& params, const Seq& x, RunMode mode,
                            std::mt19937_64& rng, ModelCache& cache) {
  const CBANetConfig& c = params.config;
  if (x.T != c.input_rows || x.C != c.input_channels)
    throw Error(ErrorCode::ShapeMismatch,
                "model input is " + std::to_string(x.T) + "x" + std::to_string(x.C) +
                    ", expected " + std::to_string(c.input_rows) + "x" +
                    std::to_string(c.input_channels));
  if (x.B < 1) throw Error(ErrorCode::BatchTooSmall, "empty batch");
  cache.B = x.B;

  Seq a, b2;
  conv1d_forward(x, params.tensor("conv1.W"), params.data("conv1.b"), c.conv1_kernel, a,
                 cache.conv1);
  batchnorm1d_forward(a, params.tensor("bn1.gamma_beta"), bn_buffers(params, "bn1"), c.bn_eps,
                      c.bn_momentum, mode, b2, cache.bn1);
  relu_forward(b2, a, cache.relu1);
  maxpool1d_forward(a, b2, cache.pool1);
  dropout_forward(b2, c.dropout, mode, rng, a, cache.drop1);

  conv1d_forward(a, params.tensor("conv2.W"), params.data("conv2.b"), c.conv2_kernel, b2,
                 cache.conv2);
  batchnorm1d_forward(b2, params.tensor("bn2.gamma_beta"), bn_buffers(params, "bn2"), c.bn_eps,
                      c.bn_momentum, mode, a, cache.bn2);
  relu_forward(a, b2, cache.relu2);
  maxpool1d_forward(b2, a, cache.pool2);
  dropout_forward(a, c.dropout, mode, rng, b2, cache.drop2);

  LstmParams l1f = lstm_params(params, "lstm1.fwd", c.conv2_filters, c.lstm1_hidden);
  LstmParams l1b = lstm_params(params, "lstm1.bwd", c.conv2_filters, c.lstm1_hidden);
  bilstm_forward(b2, l1f, l1b, c.recurrent_dropout, mode, rng, a, cache.lstm1);

  ForwardResult out;
  attention_forward(a, params.data("attn.w"), *params.data("attn.b"), b2, out.alpha, cache.attn);

  LstmParams l2f = lstm_params(params, "lstm2.fwd", 2 * c.lstm1_hidden, c.lstm2_hidden);
  LstmParams l2b = lstm_params(params, "lstm2.bwd", 2 * c.lstm1_hidden, c.lstm2_hidden);
  bilstm_forward(b2, l2f, l2b, c.recurrent_dropout, mode, rng, a, cache.lstm2);
  cache.lstm2_T = a.T;

  const int H2 = c.lstm2_hidden;
  Mat concat(x.B, 2 * H2);
  for (int bi = 0; bi < x.B; ++bi) {
    std::memcpy(concat.row(bi), a.step(bi, a.T - 1), sizeof(double) * H2);
    std::memcpy(concat.row(bi) + H2, a.step(bi, 0) + H2, sizeof(double) * H2);
  }

  Mat m1, m2;
  linear_forward(concat, params.tensor("dense1.W"), params.data("dense1.b"), m1, cache.dense1);
  Seq s1, s2;
  batchnorm1d_forward(mat_to_seq(m1), params.tensor("bn3.gamma_beta"), bn_buffers(params, "bn3"),
                      c.bn_eps, c.bn_momentum, mode, s1, cache.bn3);
  relu_forward(s1, s2, cache.relu3);
  linear_forward(seq_to_mat(s2), params.tensor("dense2.W"), params.data("dense2.b"), m1,
                 cache.dense2);
  relu_forward(mat_to_seq(m1), s1, cache.relu4);
  linear_forward(seq_to_mat(s1), params.tensor("dense3.W"), params.data("dense3.b"), out.logits,
                 cache.dense3);
  softmax_rows(out.logits, out.probs);
  cache.valid = true;
  return out;
}

std::vector<double> model_backward(ModelParameters& params, ModelCache& cache,
                                   const Mat& dlogits) {
  if (!cache.valid)
    throw Error(ErrorCode::StaleCache, "model backward without a matching forward");
  cache.valid = false;
  const CBANetConfig& c = params.config;
  if (dlogits.rows != cache.B || dlogits.cols != c.num_classes)
    throw Error(ErrorCode::ShapeMismatch, "dlogits shape");

  std::vector<double> grads(params.flat.size(), 0.0);
  auto gview = [&](const std::string& name) {
    const TensorInfo& ti = params.manifest[params.index.at(name)];
    const int rows = ti.shape.size() == 2 ? ti.shape[0] : 1;
    const int cols = ti.shape.size() == 2 ? ti.shape[1] : ti.shape[0];
    return View{grads.data() + ti.offset, rows, cols};
  };
  auto lstm_grads = [&](const std::string& prefix) {
    return LstmGrads{gview(prefix + ".Wx"), gview(prefix + ".Wh"), gview(prefix + ".b").p};
  };

  Mat dm, dm2;
  Seq ds, ds2;
  linear_backward(cache.dense3, params.tensor("dense3.W"), dlogits, gview("dense3.W"),
                  gview("dense3.b").p, dm);
  relu_backward(cache.relu4, mat_to_seq(dm), ds);
  linear_backward(cache.dense2, params.tensor("dense2.W"), seq_to_mat(ds), gview("dense2.W"),
                  gview("dense2.b").p, dm);
  relu_backward(cache.relu3, mat_to_seq(dm), ds);
  batchnorm1d_backward(cache.bn3, ds, params.tensor("bn3.gamma_beta"), gview("bn3.gamma_beta"),
                       ds2);
  linear_backward(cache.dense1, params.tensor("dense1.W"), seq_to_mat(ds2), gview("dense1.W"),
                  gview("dense1.b").p, dm);

  const int H2 = c.lstm2_hidden;
  Seq dy2(cache.B, cache.lstm2_T, 2 * H2);
  for (int bi = 0; bi < cache.B; ++bi) {
    std::memcpy(dy2.step(bi, cache.lstm2_T - 1), dm.row(bi), sizeof(double) * H2);
    std::memcpy(dy2.step(bi, 0) + H2, dm.row(bi) + H2, sizeof(double) * H2);
  }

  LstmParams l2f = lstm_params(params, "lstm2.fwd", 2 * c.lstm1_hidden, c.lstm2_hidden);
  LstmParams l2b = lstm_params(params, "lstm2.bwd", 2 * c.lstm1_hidden, c.lstm2_hidden);
  bilstm_backward(cache.lstm2, l2f, l2b, dy2, lstm_grads("lstm2.fwd"), lstm_grads("lstm2.bwd"),
                  ds);

  attention_backward(cache.attn, params.data("attn.w"), ds, gview("attn.w").p, gview("attn.b").p,
                     ds2);

  LstmParams l1f = lstm_params(params, "lstm1.fwd", c.conv2_filters, c.lstm1_hidden);
  LstmParams l1b = lstm_params(params, "lstm1.bwd", c.conv2_filters, c.lstm1_hidden);
  bilstm_backward(cache.lstm1, l1f, l1b, ds2, lstm_grads("lstm1.fwd"), lstm_grads("lstm1.bwd"),
                  ds);

  dropout_backward(cache.drop2, ds, ds2);
  maxpool1d_backward(cache.pool2, ds2, ds);
  relu_backward(cache.relu2, ds, ds2);
  batchnorm1d_backward(cache.bn2, ds2, params.tensor("bn2.gamma_beta"), gview("bn2.gamma_beta"),
                       ds);
  conv1d_backward(cache.conv2, ds, params.tensor("conv2.W"), gview("conv2.W"), gview("conv2.b").p,
                  ds2);

  dropout_backward(cache.drop1, ds2, ds);
  maxpool1d_backward(cache.pool1, ds, ds2);
  relu_backward(cache.relu1, ds2, ds);
  batchnorm1d_backward(cache.bn1, ds, params.tensor("bn1.gamma_beta"), gview("bn1.gamma_beta"),
                       ds2);
  conv1d_backward(cache.conv1, ds2, params.tensor("conv1.W"), gview("conv1.W"), gview("conv1.b").p,
                  ds);

  return grads;
}

void save_checkpoint(const ModelParameters& params, const std::string& path) {
  const CBANetConfig& c = params.config;
  json header;
  header["format"] = "cbanet-checkpoint-v1";
  header["seed"] = params.seed;
  header["learnable_count"] = params.learnable_count;
  header["config"] = {{"input_rows", c.input_rows},
                      {"input_channels", c.input_channels},
                      {"conv1_filters", c.conv1_filters},
                      {"conv1_kernel", c.conv1_kernel},
                      {"conv2_filters", c.conv2_filters},
                      {"conv2_kernel", c.conv2_kernel},
                      {"lstm1_hidden", c.lstm1_hidden},
                      {"lstm2_hidden", c.lstm2_hidden},
                      {"dense1_units", c.dense1_units},
                      {"dense2_units", c.dense2_units},
                      {"num_classes", c.num_classes},
                      {"dropout", c.dropout},
                      {"recurrent_dropout", c.recurrent_dropout},
                      {"bn_eps", c.bn_eps},
                      {"bn_momentum", c.bn_momentum}};
  json tensors = json::array();
  for (const TensorInfo& ti : params.manifest) {
    tensors.push_back({{"name", ti.name},
                       {"shape", ti.shape},
                       {"byte_offset", ti.offset * sizeof(float)},
                       {"size", ti.size},
                       {"buffer", ti.buffer}});
  }
  header["tensors"] = std::move(tensors);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp);
    out << header.dump() << '\n';
    std::vector<float> payload(params.flat.size());
    for (size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<float>(params.flat[i]);
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw Error(ErrorCode::IoError, "cannot move " + tmp + " into place");
}

ModelParameters load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::IoError, "missing checkpoint header");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IoError, std::string("bad checkpoint header: ") + e.what());
  }
  if (header.value("format", "") != "cbanet-checkpoint-v1")
    throw Error(ErrorCode::IoError, "unrecognized checkpoint format");

  CBANetConfig c;
  const json& jc = header.at("config");
  c.input_rows = jc.at("input_rows");
  c.input_channels = jc.at("input_channels");
  c.conv1_filters = jc.at("conv1_filters");
  c.conv1_kernel = jc.at("conv1_kernel");
  c.conv2_filters = jc.at("conv2_filters");
  c.conv2_kernel = jc.at("conv2_kernel");
  c.lstm1_hidden = jc.at("lstm1_hidden");
  c.lstm2_hidden = jc.at("lstm2_hidden");
  c.dense1_units = jc.at("dense1_units");
  c.dense2_units = jc.at("dense2_units");
  c.num_classes = jc.at("num_classes");
  c.dropout = jc.at("dropout");
  c.recurrent_dropout = jc.at("recurrent_dropout");
  c.bn_eps = jc.at("bn_eps");
  c.bn_momentum = jc.at("bn_momentum");

  ModelParameters mp = build_model(c, header.at("seed").get<uint64_t>());
  for (const json& jt : header.at("tensors")) {
    const std::string name = jt.at("name");
    auto it = mp.index.find(name);
    if (it == mp.index.end()) throw Error(ErrorCode::IoError, "unexpected tensor " + name);
    const TensorInfo& ti = mp.manifest[it->second];
    if (jt.at("size").get<size_t>() != ti.size ||
        jt.at("byte_offset").get<size_t>() != ti.offset * sizeof(float))
      throw Error(ErrorCode::IoError, "tensor layout mismatch for " + name);
  }

  std::vector<float> payload(mp.flat.size());
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(payload.size() * sizeof(float)))
    throw Error(ErrorCode::IoError, "truncated checkpoint payload");
  for (size_t i = 0; i < payload.size(); ++i) mp.flat[i] = static_cast<double>(payload[i]);
  return mp;
}

}  // namespace cbanet
