#include "cbanet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace cbanet {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

void consume(bool& valid, const char* op) {
  if (!valid) throw Error(ErrorCode::StaleCache, std::string(op) + ": backward without a matching forward");
  valid = false;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

// ---------------- conv1d ----------------

void conv1d_forward(const Seq& x, CView W, const double* bias, int kernel, Seq& y,
                    Conv1dCache& cache) {
  if (kernel < 1 || kernel % 2 == 0)
    throw Error(ErrorCode::InvalidConfig, "conv1d kernel must be odd, got " + std::to_string(kernel));
  const int Cin = x.C, Cout = W.cols;
  require(W.rows == kernel * Cin, "conv1d weights expect " + std::to_string(kernel * Cin) +
                                      " rows, got " + std::to_string(W.rows));
  const int pad = kernel / 2;
  const int BT = x.B * x.T;

  cache.B = x.B;
  cache.T = x.T;
  cache.Cin = Cin;
  cache.Cout = Cout;
  cache.k = kernel;
  cache.cols = Mat(BT, kernel * Cin);
  for (int b = 0; b < x.B; ++b) {
    for (int t = 0; t < x.T; ++t) {
      double* row = cache.cols.row(b * x.T + t);
      for (int j = 0; j < kernel; ++j) {
        const int src = t + j - pad;
        if (src >= 0 && src < x.T)
          std::memcpy(row + j * Cin, x.step(b, src), sizeof(double) * Cin);
      }
    }
  }

  y.resize(x.B, x.T, Cout);
  for (int r = 0; r < BT; ++r) {
    double* out = y.d.data() + static_cast<size_t>(r) * Cout;
    std::memcpy(out, bias, sizeof(double) * Cout);
  }
  matmul_accum(y.d.data(), cache.cols.d.data(), W.p, BT, kernel * Cin, Cout);
  cache.valid = true;
}

void conv1d_backward(Conv1dCache& cache, const Seq& dy, CView W, View dW, double* dbias, Seq& dx) {
  consume(cache.valid, "conv1d");
  const int BT = cache.B * cache.T;
  const int KC = cache.k * cache.Cin;
  require(dy.B == cache.B && dy.T == cache.T && dy.C == cache.Cout, "conv1d dy shape");

  for (int r = 0; r < BT; ++r) {
    const double* g = dy.d.data() + static_cast<size_t>(r) * cache.Cout;
    const double* col = cache.cols.row(r);
    for (int i = 0; i < KC; ++i) {
      if (col[i] != 0.0) axpy(dW.row(i), col[i], g, cache.Cout);
    }
    axpy(dbias, 1.0, g, cache.Cout);
  }

  Mat Wt(cache.Cout, KC);
  for (int i = 0; i < KC; ++i)
    for (int o = 0; o < cache.Cout; ++o) Wt(o, i) = W(i, o);
  Mat dcols(BT, KC);
  matmul_accum(dcols.d.data(), dy.d.data(), Wt.d.data(), BT, cache.Cout, KC);

  dx.resize(cache.B, cache.T, cache.Cin);
  const int pad = cache.k / 2;
  for (int b = 0; b < cache.B; ++b) {
    for (int t = 0; t < cache.T; ++t) {
      const double* row = dcols.row(b * cache.T + t);
      for (int j = 0; j < cache.k; ++j) {
        const int src = t + j - pad;
        if (src >= 0 && src < cache.T) axpy(dx.step(b, src), 1.0, row + j * cache.Cin, cache.Cin);
      }
    }
  }
}

// ---------------- maxpool1d ----------------

void maxpool1d_forward(const Seq& x, Seq& y, MaxPoolCache& cache) {
  if (x.T < 2) throw Error(ErrorCode::ShapeMismatch, "maxpool1d needs at least 2 timesteps");
  const int To = x.T / 2;
  cache.B = x.B;
  cache.T = x.T;
  cache.C = x.C;
  cache.To = To;
  cache.argmax.assign(static_cast<size_t>(x.B) * To * x.C, 0);
  y.resize(x.B, To, x.C);
  for (int b = 0; b < x.B; ++b) {
    for (int to = 0; to < To; ++to) {
      const double* a = x.step(b, 2 * to);
      const double* bb = x.step(b, 2 * to + 1);
      double* out = y.step(b, to);
      int32_t* arg = cache.argmax.data() + (static_cast<size_t>(b) * To + to) * x.C;
      for (int c = 0; c < x.C; ++c) {
        if (bb[c] > a[c]) {
          out[c] = bb[c];
          arg[c] = 2 * to + 1;
        } else {
          out[c] = a[c];
          arg[c] = 2 * to;
        }
      }
    }
  }
  cache.valid = true;
}

void maxpool1d_backward(MaxPoolCache& cache, const Seq& dy, Seq& dx) {
  consume(cache.valid, "maxpool1d");
  require(dy.B == cache.B && dy.T == cache.To && dy.C == cache.C, "maxpool1d dy shape");
  dx.resize(cache.B, cache.T, cache.C);
  for (int b = 0; b < cache.B; ++b) {
    for (int to = 0; to < cache.To; ++to) {
      const double* g = dy.step(b, to);
      const int32_t* arg = cache.argmax.data() + (static_cast<size_t>(b) * cache.To + to) * cache.C;
      for (int c = 0; c < cache.C; ++c) dx.at(b, arg[c], c) += g[c];
    }
  }
}

// ---------------- batchnorm1d ----------------

void batchnorm1d_forward(const Seq& x, CView gamma_beta, BatchNormBuffers buffers, double eps,
                         double momentum, RunMode mode, Seq& y, BatchNormCache& cache) {
  const int C = x.C;
  require(gamma_beta.rows == 2 && gamma_beta.cols == C, "batchnorm gamma/beta shape");
  const int N = x.B * x.T;
  const double* gamma = gamma_beta.row(0);
  const double* beta = gamma_beta.row(1);

  cache.B = x.B;
  cache.T = x.T;
  cache.C = C;
  cache.xhat.assign(x.d.size(), 0.0);
  cache.inv_std.assign(C, 0.0);
  y.resize(x.B, x.T, C);

  std::vector<double> mean(C, 0.0), var(C, 0.0);
  if (mode == RunMode::Train) {
    if (N < 2)
      throw Error(ErrorCode::BatchTooSmall,
                  "batchnorm needs at least 2 samples in train mode, got " + std::to_string(N));
    for (int r = 0; r < N; ++r) axpy(mean.data(), 1.0, x.d.data() + static_cast<size_t>(r) * C, C);
    for (int c = 0; c < C; ++c) mean[c] /= N;
    for (int r = 0; r < N; ++r) {
      const double* row = x.d.data() + static_cast<size_t>(r) * C;
      for (int c = 0; c < C; ++c) {
        const double d = row[c] - mean[c];
        var[c] += d * d;
      }
    }
    for (int c = 0; c < C; ++c) var[c] /= N;
    for (int c = 0; c < C; ++c) {
      buffers.running_mean[c] = momentum * buffers.running_mean[c] + (1.0 - momentum) * mean[c];
      buffers.running_var[c] = momentum * buffers.running_var[c] + (1.0 - momentum) * var[c];
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[c] = buffers.running_mean[c];
      var[c] = buffers.running_var[c];
    }
  }

  for (int c = 0; c < C; ++c) cache.inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
  for (int r = 0; r < N; ++r) {
    const double* row = x.d.data() + static_cast<size_t>(r) * C;
    double* xh = cache.xhat.data() + static_cast<size_t>(r) * C;
    double* out = y.d.data() + static_cast<size_t>(r) * C;
    for (int c = 0; c < C; ++c) {
      xh[c] = (row[c] - mean[c]) * cache.inv_std[c];
      out[c] = gamma[c] * xh[c] + beta[c];
    }
  }
  cache.train_stats = (mode == RunMode::Train);
  cache.valid = true;
}

void batchnorm1d_backward(BatchNormCache& cache, const Seq& dy, CView gamma_beta, View dgamma_beta,
                          Seq& dx) {
  consume(cache.valid, "batchnorm1d");
  const int C = cache.C;
  const int N = cache.B * cache.T;
  require(dy.B == cache.B && dy.T == cache.T && dy.C == C, "batchnorm dy shape");
  const double* gamma = gamma_beta.row(0);
  double* dgamma = dgamma_beta.row(0);
  double* dbeta = dgamma_beta.row(1);

  std::vector<double> sum_dy(C, 0.0), sum_dy_xhat(C, 0.0);
  for (int r = 0; r < N; ++r) {
    const double* g = dy.d.data() + static_cast<size_t>(r) * C;
    const double* xh = cache.xhat.data() + static_cast<size_t>(r) * C;
    for (int c = 0; c < C; ++c) {
      sum_dy[c] += g[c];
      sum_dy_xhat[c] += g[c] * xh[c];
    }
  }
  for (int c = 0; c < C; ++c) {
    dgamma[c] += sum_dy_xhat[c];
    dbeta[c] += sum_dy[c];
  }

  dx.resize(cache.B, cache.T, C);
  for (int r = 0; r < N; ++r) {
    const double* g = dy.d.data() + static_cast<size_t>(r) * C;
    const double* xh = cache.xhat.data() + static_cast<size_t>(r) * C;
    double* out = dx.d.data() + static_cast<size_t>(r) * C;
    if (cache.train_stats) {
      for (int c = 0; c < C; ++c)
        out[c] = gamma[c] * cache.inv_std[c] *
                 (g[c] - sum_dy[c] / N - xh[c] * sum_dy_xhat[c] / N);
    } else {
      for (int c = 0; c < C; ++c) out[c] = gamma[c] * cache.inv_std[c] * g[c];
    }
  }
}

// ---------------- relu ----------------

void relu_forward(const Seq& x, Seq& y, ReluCache& cache) {
  y.resize(x.B, x.T, x.C);
  cache.pos.assign(x.d.size(), 0);
  for (size_t i = 0; i < x.d.size(); ++i) {
    if (x.d[i] > 0.0) {
      y.d[i] = x.d[i];
      cache.pos[i] = 1;
    }
  }
  cache.valid = true;
}

void relu_backward(ReluCache& cache, const Seq& dy, Seq& dx) {
  consume(cache.valid, "relu");
  require(dy.d.size() == cache.pos.size(), "relu dy shape");
  dx.resize(dy.B, dy.T, dy.C);
  for (size_t i = 0; i < dy.d.size(); ++i) dx.d[i] = cache.pos[i] ? dy.d[i] : 0.0;
}

// ---------------- dropout ----------------

void dropout_forward(const Seq& x, double rate, RunMode mode, std::mt19937_64& rng, Seq& y,
                     DropoutCache& cache) {
  if (rate < 0.0 || rate >= 1.0)
    throw Error(ErrorCode::InvalidConfig, "dropout rate must be in [0, 1), got " + std::to_string(rate));
  y.resize(x.B, x.T, x.C);
  if (mode == RunMode::Eval || rate == 0.0) {
    y.d = x.d;
    cache.keep.clear();
    cache.scale = 1.0;
    cache.valid = true;
    return;
  }
  const double p_keep = 1.0 - rate;
  cache.scale = 1.0 / p_keep;
  cache.keep.assign(x.d.size(), 0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (size_t i = 0; i < x.d.size(); ++i) {
    if (uni(rng) < p_keep) {
      cache.keep[i] = 1;
      y.d[i] = x.d[i] * cache.scale;
    }
  }
  cache.valid = true;
}

void dropout_backward(DropoutCache& cache, const Seq& dy, Seq& dx) {
  consume(cache.valid, "dropout");
  dx.resize(dy.B, dy.T, dy.C);
  if (cache.keep.empty()) {
    dx.d = dy.d;
    return;
  }
  require(dy.d.size() == cache.keep.size(), "dropout dy shape");
  for (size_t i = 0; i < dy.d.size(); ++i) dx.d[i] = cache.keep[i] ? dy.d[i] * cache.scale : 0.0;
}

// ---------------- lstm ----------------

void lstm_forward(const Seq& x, const LstmParams& p, double recurrent_dropout, RunMode mode,
                  std::mt19937_64& rng, Seq& h_out, LstmCache& cache) {
  const int B = x.B, T = x.T, I = x.C, H = p.hidden;
  require(p.in == I, "lstm input width " + std::to_string(I) + " vs params " + std::to_string(p.in));
  require(p.Wx.rows == I && p.Wx.cols == 4 * H, "lstm Wx shape");
  require(p.Wh.rows == H && p.Wh.cols == 4 * H, "lstm Wh shape");

  cache.B = B;
  cache.T = T;
  cache.I = I;
  cache.H = H;
  cache.x = x;
  cache.gates.resize(B, T, 4 * H);
  cache.c.resize(B, T, H);
  cache.h.resize(B, T, H);
  cache.h_drop.resize(B, T, H);

  cache.rmask.clear();
  if (mode == RunMode::Train && recurrent_dropout > 0.0) {
    const double p_keep = 1.0 - recurrent_dropout;
    cache.rmask.assign(static_cast<size_t>(B) * H, 0.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (auto& m : cache.rmask)
      if (uni(rng) < p_keep) m = 1.0 / p_keep;
  }

  // Input contribution for all timesteps in one shot.
  Mat zx(B * T, 4 * H);
  for (int r = 0; r < B * T; ++r) std::memcpy(zx.row(r), p.b, sizeof(double) * 4 * H);
  matmul_accum(zx.d.data(), x.d.data(), p.Wx.p, B * T, I, 4 * H);

  Mat hdrop(B, H), zh(B, 4 * H);
  for (int t = 0; t < T; ++t) {
    hdrop.zero();
    if (t > 0) {
      for (int b = 0; b < B; ++b) {
        const double* hp = cache.h.step(b, t - 1);
        double* out = hdrop.row(b);
        if (cache.rmask.empty()) {
          std::memcpy(out, hp, sizeof(double) * H);
        } else {
          const double* m = cache.rmask.data() + static_cast<size_t>(b) * H;
          for (int j = 0; j < H; ++j) out[j] = hp[j] * m[j];
        }
      }
    }
    for (int b = 0; b < B; ++b)
      std::memcpy(cache.h_drop.step(b, t), hdrop.row(b), sizeof(double) * H);

    zh.zero();
    matmul_accum(zh.d.data(), hdrop.d.data(), p.Wh.p, B, H, 4 * H);

    for (int b = 0; b < B; ++b) {
      const double* zxr = zx.row(b * T + t);
      const double* zhr = zh.row(b);
      double* g = cache.gates.step(b, t);
      double* ct = cache.c.step(b, t);
      double* ht = cache.h.step(b, t);
      const double* cprev = t > 0 ? cache.c.step(b, t - 1) : nullptr;
      for (int j = 0; j < H; ++j) {
        const double zi = zxr[j] + zhr[j];
        const double zf = zxr[H + j] + zhr[H + j];
        const double zg = zxr[2 * H + j] + zhr[2 * H + j];
        const double zo = zxr[3 * H + j] + zhr[3 * H + j];
        const double gi = sigmoid(zi);
        const double gf = sigmoid(zf);
        const double gg = std::tanh(zg);
        const double go = sigmoid(zo);
        g[j] = gi;
        g[H + j] = gf;
        g[2 * H + j] = gg;
        g[3 * H + j] = go;
        const double cp = cprev ? cprev[j] : 0.0;
        ct[j] = gf * cp + gi * gg;
        ht[j] = go * std::tanh(ct[j]);
      }
    }
  }
  h_out = cache.h;
  cache.valid = true;
}

void lstm_backward(LstmCache& cache, const LstmParams& p, const Seq& dh_out, LstmGrads g, Seq& dx) {
  consume(cache.valid, "lstm");
  const int B = cache.B, T = cache.T, I = cache.I, H = cache.H;
  require(dh_out.B == B && dh_out.T == T && dh_out.C == H, "lstm dh shape");

  Mat Wxt(4 * H, I), Wht(4 * H, H);
  for (int i = 0; i < I; ++i)
    for (int j = 0; j < 4 * H; ++j) Wxt(j, i) = p.Wx(i, j);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < 4 * H; ++j) Wht(j, i) = p.Wh(i, j);

  dx.resize(B, T, I);
  Mat dh_carry(B, H), dc(B, H), dz(B, 4 * H), dh_prev(B, H);
  for (int t = T - 1; t >= 0; --t) {
    for (int b = 0; b < B; ++b) {
      const double* gg = cache.gates.step(b, t);
      const double* ct = cache.c.step(b, t);
      const double* cprev = t > 0 ? cache.c.step(b, t - 1) : nullptr;
      const double* du = dh_out.step(b, t);
      double* dcb = dc.row(b);
      double* dzb = dz.row(b);
      const double* carry = dh_carry.row(b);
      for (int j = 0; j < H; ++j) {
        const double gi = gg[j], gf = gg[H + j], gc = gg[2 * H + j], go = gg[3 * H + j];
        const double tc = std::tanh(ct[j]);
        const double dh = du[j] + carry[j];
        const double ddo = dh * tc;
        dcb[j] += dh * go * (1.0 - tc * tc);
        const double di = dcb[j] * gc;
        const double df = dcb[j] * (cprev ? cprev[j] : 0.0);
        const double dg = dcb[j] * gi;
        dzb[j] = di * gi * (1.0 - gi);
        dzb[H + j] = df * gf * (1.0 - gf);
        dzb[2 * H + j] = dg * (1.0 - gc * gc);
        dzb[3 * H + j] = ddo * go * (1.0 - go);
      }
    }

    for (int b = 0; b < B; ++b) {
      const double* xt = cache.x.step(b, t);
      const double* hd = cache.h_drop.step(b, t);
      const double* dzb = dz.row(b);
      for (int i = 0; i < I; ++i)
        if (xt[i] != 0.0) axpy(g.dWx.row(i), xt[i], dzb, 4 * H);
      for (int j = 0; j < H; ++j)
        if (hd[j] != 0.0) axpy(g.dWh.row(j), hd[j], dzb, 4 * H);
      axpy(g.db, 1.0, dzb, 4 * H);
    }

    for (int b = 0; b < B; ++b) {
      const double* dzb = dz.row(b);
      double* dxt = dx.step(b, t);
      for (int j = 0; j < 4 * H; ++j)
        if (dzb[j] != 0.0) axpy(dxt, dzb[j], Wxt.row(j), I);
    }

    dh_prev.zero();
    matmul_accum(dh_prev.d.data(), dz.d.data(), Wht.d.data(), B, 4 * H, H);
    for (int b = 0; b < B; ++b) {
      double* carry = dh_carry.row(b);
      const double* dp = dh_prev.row(b);
      double* dcb = dc.row(b);
      const double* gg = cache.gates.step(b, t);
      if (cache.rmask.empty()) {
        std::memcpy(carry, dp, sizeof(double) * H);
      } else {
        const double* m = cache.rmask.data() + static_cast<size_t>(b) * H;
        for (int j = 0; j < H; ++j) carry[j] = dp[j] * m[j];
      }
      for (int j = 0; j < H; ++j) dcb[j] *= gg[H + j];
    }
  }
}

namespace {

Seq reverse_time(const Seq& x) {
  Seq r(x.B, x.T, x.C);
  for (int b = 0; b < x.B; ++b)
    for (int t = 0; t < x.T; ++t)
      std::memcpy(r.step(b, t), x.step(b, x.T - 1 - t), sizeof(double) * x.C);
  return r;
}

}  // namespace

void bilstm_forward(const Seq& x, const LstmParams& fwd, const LstmParams& bwd,
                    double recurrent_dropout, RunMode mode, std::mt19937_64& rng, Seq& y,
                    BiLstmCache& cache) {
  require(fwd.hidden == bwd.hidden, "bilstm direction widths differ");
  const int H = fwd.hidden;
  Seq h_fwd, h_bwd;
  lstm_forward(x, fwd, recurrent_dropout, mode, rng, h_fwd, cache.fwd);
  Seq x_rev = reverse_time(x);
  lstm_forward(x_rev, bwd, recurrent_dropout, mode, rng, h_bwd, cache.bwd);

  y.resize(x.B, x.T, 2 * H);
  for (int b = 0; b < x.B; ++b) {
    for (int t = 0; t < x.T; ++t) {
      std::memcpy(y.step(b, t), h_fwd.step(b, t), sizeof(double) * H);
      std::memcpy(y.step(b, t) + H, h_bwd.step(b, x.T - 1 - t), sizeof(double) * H);
    }
  }
  cache.valid = true;
}

void bilstm_backward(BiLstmCache& cache, const LstmParams& fwd, const LstmParams& bwd,
                     const Seq& dy, LstmGrads gfwd, LstmGrads gbwd, Seq& dx) {
  consume(cache.valid, "bilstm");
  const int B = dy.B, T = dy.T, H = fwd.hidden;
  require(dy.C == 2 * H, "bilstm dy width");

  Seq dh_fwd(B, T, H), dh_bwd(B, T, H);
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < T; ++t) {
      std::memcpy(dh_fwd.step(b, t), dy.step(b, t), sizeof(double) * H);
      std::memcpy(dh_bwd.step(b, T - 1 - t), dy.step(b, t) + H, sizeof(double) * H);
    }
  }

  Seq dx_fwd, dx_bwd_rev;
  lstm_backward(cache.fwd, fwd, dh_fwd, gfwd, dx_fwd);
  lstm_backward(cache.bwd, bwd, dh_bwd, gbwd, dx_bwd_rev);

  dx = dx_fwd;
  for (int b = 0; b < B; ++b)
    for (int t = 0; t < T; ++t) axpy(dx.step(b, t), 1.0, dx_bwd_rev.step(b, T - 1 - t), dx.C);
}

// ---------------- temporal attention ----------------

void attention_forward(const Seq& h, const double* w, double b, Seq& y, Mat& alpha,
                       AttentionCache& cache) {
  const int B = h.B, T = h.T, D = h.C;
  cache.B = B;
  cache.T = T;
  cache.D = D;
  cache.h = h;
  cache.e = Mat(B, T);
  cache.alpha = Mat(B, T);
  y.resize(B, T, D);

  for (int bi = 0; bi < B; ++bi) {
    double* e = cache.e.row(bi);
    for (int t = 0; t < T; ++t) e[t] = std::tanh(dot(w, h.step(bi, t), D) + b);
    double m = e[0];
    for (int t = 1; t < T; ++t) m = std::max(m, e[t]);
    double* a = cache.alpha.row(bi);
    double sum = 0.0;
    for (int t = 0; t < T; ++t) {
      a[t] = std::exp(e[t] - m);
      sum += a[t];
    }
    for (int t = 0; t < T; ++t) a[t] /= sum;
    for (int t = 0; t < T; ++t) {
      const double* src = h.step(bi, t);
      double* out = y.step(bi, t);
      for (int c = 0; c < D; ++c) out[c] = a[t] * src[c];
    }
  }
  alpha = cache.alpha;
  cache.valid = true;
}

void attention_backward(AttentionCache& cache, const double* w, const Seq& dy, double* dw,
                        double* db, Seq& dh) {
  consume(cache.valid, "attention");
  const int B = cache.B, T = cache.T, D = cache.D;
  require(dy.B == B && dy.T == T && dy.C == D, "attention dy shape");

  dh.resize(B, T, D);
  std::vector<double> dalpha(T), ds(T);
  for (int bi = 0; bi < B; ++bi) {
    const double* a = cache.alpha.row(bi);
    const double* e = cache.e.row(bi);
    for (int t = 0; t < T; ++t) {
      dalpha[t] = dot(dy.step(bi, t), cache.h.step(bi, t), D);
      axpy(dh.step(bi, t), a[t], dy.step(bi, t), D);
    }
    double mix = 0.0;
    for (int t = 0; t < T; ++t) mix += a[t] * dalpha[t];
    for (int t = 0; t < T; ++t) {
      const double de = a[t] * (dalpha[t] - mix);
      ds[t] = de * (1.0 - e[t] * e[t]);
    }
    for (int t = 0; t < T; ++t) {
      axpy(dw, ds[t], cache.h.step(bi, t), D);
      *db += ds[t];
      axpy(dh.step(bi, t), ds[t], w, D);
    }
  }
}

// ---------------- dense ----------------

void linear_forward(const Mat& x, CView W, const double* b, Mat& y, LinearCache& cache) {
  require(x.cols == W.rows, "linear input width " + std::to_string(x.cols) + " vs weights " +
                                std::to_string(W.rows));
  cache.x = x;
  y = Mat(x.rows, W.cols);
  for (int r = 0; r < x.rows; ++r) std::memcpy(y.row(r), b, sizeof(double) * W.cols);
  matmul_accum(y.d.data(), x.d.data(), W.p, x.rows, x.cols, W.cols);
  cache.valid = true;
}

void linear_backward(LinearCache& cache, CView W, const Mat& dy, View dW, double* db, Mat& dx) {
  consume(cache.valid, "linear");
  require(dy.rows == cache.x.rows && dy.cols == W.cols, "linear dy shape");
  for (int r = 0; r < dy.rows; ++r) {
    const double* g = dy.row(r);
    const double* xr = cache.x.row(r);
    for (int i = 0; i < cache.x.cols; ++i)
      if (xr[i] != 0.0) axpy(dW.row(i), xr[i], g, dy.cols);
    axpy(db, 1.0, g, dy.cols);
  }
  Mat Wt(W.cols, W.rows);
  for (int i = 0; i < W.rows; ++i)
    for (int o = 0; o < W.cols; ++o) Wt(o, i) = W(i, o);
  dx = Mat(dy.rows, W.rows);
  matmul_accum(dx.d.data(), dy.d.data(), Wt.d.data(), dy.rows, dy.cols, W.rows);
}

// ---------------- softmax ----------------

void softmax_rows(const Mat& logits, Mat& probs) {
  probs = Mat(logits.rows, logits.cols);
  for (int r = 0; r < logits.rows; ++r) {
    const double* z = logits.row(r);
    double* p = probs.row(r);
    double m = z[0];
    for (int c = 1; c < logits.cols; ++c) m = std::max(m, z[c]);
    double sum = 0.0;
    for (int c = 0; c < logits.cols; ++c) {
      p[c] = std::exp(z[c] - m);
      sum += p[c];
    }
    for (int c = 0; c < logits.cols; ++c) p[c] /= sum;
  }
}

}  // namespace cbanet
