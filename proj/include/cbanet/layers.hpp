#pragma once
// Layer primitives with exact backward passes. Each forward fills a cache
// struct; the matching backward consumes it and throws StaleCache when the
// cache was never filled (or was already invalidated). Sequences are stored
// row-major as [batch][time][channel].

#include <cstdint>
#include <random>
#include <vector>

#include "cbanet/common.hpp"
#include "cbanet/linalg.hpp"

namespace cbanet {

struct Seq {
  int B = 0, T = 0, C = 0;
  std::vector<double> d;

  Seq() = default;
  Seq(int b, int t, int c) : B(b), T(t), C(c), d(static_cast<size_t>(b) * t * c, 0.0) {}

  double& at(int b, int t, int c) { return d[(static_cast<size_t>(b) * T + t) * C + c]; }
  double at(int b, int t, int c) const { return d[(static_cast<size_t>(b) * T + t) * C + c]; }
  double* step(int b, int t) { return d.data() + (static_cast<size_t>(b) * T + t) * C; }
  const double* step(int b, int t) const { return d.data() + (static_cast<size_t>(b) * T + t) * C; }
  void resize(int b, int t, int c) {
    B = b;
    T = t;
    C = c;
    d.assign(static_cast<size_t>(b) * t * c, 0.0);
  }
  size_t size() const { return d.size(); }
};

// Non-owning parameter views into the model's flat storage.
struct View {
  double* p = nullptr;
  int rows = 0, cols = 0;
  double& operator()(int r, int c) { return p[static_cast<size_t>(r) * cols + c]; }
  double* row(int r) { return p + static_cast<size_t>(r) * cols; }
  size_t size() const { return static_cast<size_t>(rows) * cols; }
};

struct CView {
  const double* p = nullptr;
  int rows = 0, cols = 0;
  CView() = default;
  CView(const double* q, int r, int c) : p(q), rows(r), cols(c) {}
  CView(View v) : p(v.p), rows(v.rows), cols(v.cols) {}
  double operator()(int r, int c) const { return p[static_cast<size_t>(r) * cols + c]; }
  const double* row(int r) const { return p + static_cast<size_t>(r) * cols; }
  size_t size() const { return static_cast<size_t>(rows) * cols; }
};

enum class RunMode { Train, Eval };

// ---- conv1d: same zero padding, cross-correlation, stride 1 ----
// Weights are (kernel * C_in) x C_out, tap-major rows: row j*C_in + c holds the
// tap at input offset (j - kernel/2) for channel c.

struct Conv1dCache {
  bool valid = false;
  int B = 0, T = 0, Cin = 0, Cout = 0, k = 0;
  Mat cols;  // (B*T) x (k*Cin) im2col buffer
};

void conv1d_forward(const Seq& x, CView W, const double* bias, int kernel, Seq& y,
                    Conv1dCache& cache);
void conv1d_backward(Conv1dCache& cache, const Seq& dy, CView W, View dW, double* dbias, Seq& dx);

// ---- maxpool1d: size 2 / stride 2, ties pick the earliest timestep ----

struct MaxPoolCache {
  bool valid = false;
  int B = 0, T = 0, C = 0, To = 0;
  std::vector<int32_t> argmax;  // source timestep per output element
};

void maxpool1d_forward(const Seq& x, Seq& y, MaxPoolCache& cache);
void maxpool1d_backward(MaxPoolCache& cache, const Seq& dy, Seq& dx);

// ---- batchnorm1d: per-channel statistics over batch x time ----

struct BatchNormCache {
  bool valid = false;
  bool train_stats = false;  // stats depend on the batch (train mode)
  int B = 0, T = 0, C = 0;
  std::vector<double> xhat;     // normalized input, same layout as x
  std::vector<double> inv_std;  // per channel
};

struct BatchNormBuffers {
  double* running_mean = nullptr;  // length C, updated in train mode
  double* running_var = nullptr;
};

void batchnorm1d_forward(const Seq& x, CView gamma_beta, BatchNormBuffers buffers, double eps,
                         double momentum, RunMode mode, Seq& y, BatchNormCache& cache);
void batchnorm1d_backward(BatchNormCache& cache, const Seq& dy, CView gamma_beta, View dgamma_beta,
                          Seq& dx);

// ---- relu ----

struct ReluCache {
  bool valid = false;
  std::vector<uint8_t> pos;
};

void relu_forward(const Seq& x, Seq& y, ReluCache& cache);
void relu_backward(ReluCache& cache, const Seq& dy, Seq& dx);

// ---- dropout: inverted scaling, identity in eval mode ----

struct DropoutCache {
  bool valid = false;
  double scale = 1.0;
  std::vector<uint8_t> keep;  // empty means identity pass
};

void dropout_forward(const Seq& x, double rate, RunMode mode, std::mt19937_64& rng, Seq& y,
                     DropoutCache& cache);
void dropout_backward(DropoutCache& cache, const Seq& dy, Seq& dx);

// ---- lstm / bilstm ----
// Gate packing along the 4H axis is [input | forget | cell | output].
// Initial hidden and cell states are zero. Recurrent dropout draws one mask
// per sequence element of h_{t-1} (fixed across timesteps, inverted scaling).

struct LstmParams {
  CView Wx;  // I x 4H
  CView Wh;  // H x 4H
  const double* b = nullptr;  // 4H
  int in = 0, hidden = 0;
};

struct LstmGrads {
  View dWx;
  View dWh;
  double* db = nullptr;
};

struct LstmCache {
  bool valid = false;
  int B = 0, T = 0, I = 0, H = 0;
  Seq x;        // layer input (stored for dWx)
  Seq gates;    // B x T x 4H, post-activation
  Seq c;        // cell states
  Seq h;        // hidden states
  Seq h_drop;   // h_{t-1} after recurrent dropout, as fed to the gate matmul
  std::vector<double> rmask;  // B x H recurrent dropout mask (scaled), empty if off
};

void lstm_forward(const Seq& x, const LstmParams& p, double recurrent_dropout, RunMode mode,
                  std::mt19937_64& rng, Seq& h_out, LstmCache& cache);
void lstm_backward(LstmCache& cache, const LstmParams& p, const Seq& dh_out, LstmGrads g, Seq& dx);

struct BiLstmCache {
  bool valid = false;
  LstmCache fwd;
  LstmCache bwd;  // runs on the time-reversed input
};

// Output is B x T x 2H: forward direction in channels [0, H), backward
// direction (re-reversed to input time order) in [H, 2H).
void bilstm_forward(const Seq& x, const LstmParams& fwd, const LstmParams& bwd,
                    double recurrent_dropout, RunMode mode, std::mt19937_64& rng, Seq& y,
                    BiLstmCache& cache);
void bilstm_backward(BiLstmCache& cache, const LstmParams& fwd, const LstmParams& bwd,
                     const Seq& dy, LstmGrads gfwd, LstmGrads gbwd, Seq& dx);

// ---- temporal attention ----
// e_t = tanh(w . h_t + b), alpha = softmax(e), y_t = alpha_t * h_t.

struct AttentionCache {
  bool valid = false;
  int B = 0, T = 0, D = 0;
  Seq h;
  Mat e;      // post-tanh scores
  Mat alpha;  // B x T
};

void attention_forward(const Seq& h, const double* w, double b, Seq& y, Mat& alpha,
                       AttentionCache& cache);
void attention_backward(AttentionCache& cache, const double* w, const Seq& dy, double* dw,
                        double* db, Seq& dh);

// ---- dense ----

struct LinearCache {
  bool valid = false;
  Mat x;
};

void linear_forward(const Mat& x, CView W, const double* b, Mat& y, LinearCache& cache);
void linear_backward(LinearCache& cache, CView W, const Mat& dy, View dW, double* db, Mat& dx);

// ---- softmax over rows, max-subtracted ----

void softmax_rows(const Mat& logits, Mat& probs);

}  // namespace cbanet
