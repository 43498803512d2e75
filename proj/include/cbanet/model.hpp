#pragma once
// CBANet: conv blocks -> BiLSTM -> temporal attention -> BiLSTM -> dense head.
// Parameters live in one flat double vector described by a manifest; learnable
// tensors come first, batchnorm running statistics (buffers) after them.

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "cbanet/layers.hpp"

namespace cbanet {

struct CBANetConfig {
  int input_rows = 100;
  int input_channels = 10;
  int conv1_filters = 64;
  int conv1_kernel = 5;
  int conv2_filters = 128;
  int conv2_kernel = 3;
  int lstm1_hidden = 64;
  int lstm2_hidden = 32;
  int dense1_units = 64;
  int dense2_units = 32;
  int num_classes = 4;
  double dropout = 0.2;
  double recurrent_dropout = 0.2;
  double bn_eps = 1e-5;
  double bn_momentum = 0.9;
};

void validate_config(const CBANetConfig& cfg);  // throws InvalidConfig

struct TensorInfo {
  std::string name;
  std::vector<int> shape;
  size_t offset = 0;  // element offset into the flat vector
  size_t size = 0;
  bool buffer = false;
};

struct ModelParameters {
  CBANetConfig config;
  uint64_t seed = 0;
  std::vector<TensorInfo> manifest;
  std::unordered_map<std::string, size_t> index;
  std::vector<double> flat;
  size_t learnable_count = 0;

  View tensor(const std::string& name);
  CView tensor(const std::string& name) const;
  double* data(const std::string& name);
};

ModelParameters build_model(const CBANetConfig& cfg, uint64_t seed);
size_t parameter_count(const ModelParameters& params);

struct ModelCache {
  bool valid = false;
  int B = 0;
  Conv1dCache conv1;
  BatchNormCache bn1;
  ReluCache relu1;
  MaxPoolCache pool1;
  DropoutCache drop1;
  Conv1dCache conv2;
  BatchNormCache bn2;
  ReluCache relu2;
  MaxPoolCache pool2;
  DropoutCache drop2;
  BiLstmCache lstm1;
  AttentionCache attn;
  BiLstmCache lstm2;
  LinearCache dense1;
  BatchNormCache bn3;
  ReluCache relu3;
  LinearCache dense2;
  ReluCache relu4;
  LinearCache dense3;
  int lstm2_T = 0;
};

struct ForwardResult {
  Mat logits;  // B x classes
  Mat probs;
  Mat alpha;  // attention weights, B x (input_rows / 4)
};

// Train mode updates batchnorm running statistics and draws dropout masks
// from rng; eval mode touches neither.
ForwardResult model_forward(ModelParameters& params, const Seq& x, RunMode mode,
                            std::mt19937_64& rng, ModelCache& cache);

// Gradient w.r.t. every flat entry (buffer region stays zero), aligned with
// params.flat. dlogits is the loss gradient w.r.t. the pre-softmax logits.
std::vector<double> model_backward(ModelParameters& params, ModelCache& cache, const Mat& dlogits);

void save_checkpoint(const ModelParameters& params, const std::string& path);
ModelParameters load_checkpoint(const std::string& path);

}  // namespace cbanet
