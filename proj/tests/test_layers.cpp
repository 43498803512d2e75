#include <cmath>
#include <functional>
#include <random>

#include "cbanet/layers.hpp"
#include "doctest.h"

using namespace cbanet;

namespace {

constexpr double kStep = 1e-5;
constexpr double kTol = 1e-4;

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)});
}

void fill(std::mt19937_64& rng, double* p, size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> uni(lo, hi);
  for (size_t i = 0; i < n; ++i) p[i] = uni(rng);
}

double contract(const std::vector<double>& u, const std::vector<double>& y) {
  REQUIRE(u.size() == y.size());
  double s = 0.0;
  for (size_t i = 0; i < u.size(); ++i) s += u[i] * y[i];
  return s;
}

// Central-difference check of every entry of vals against the analytic grad.
void check_grad(const std::function<double()>& f, double* vals, const double* analytic, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    const double keep = vals[i];
    vals[i] = keep + kStep;
    const double lp = f();
    vals[i] = keep - kStep;
    const double lm = f();
    vals[i] = keep;
    const double fd = (lp - lm) / (2.0 * kStep);
    INFO("entry " << i << " fd=" << fd << " analytic=" << analytic[i]);
    CHECK(rel_err(fd, analytic[i]) <= kTol);
  }
}

Seq seq_from(std::initializer_list<double> vals, int B, int T, int C) {
  Seq s(B, T, C);
  REQUIRE(vals.size() == s.d.size());
  std::copy(vals.begin(), vals.end(), s.d.begin());
  return s;
}

}  // namespace

TEST_CASE("conv1d worked examples") {
  // Ones signal, ones kernel, same padding: edge positions see two taps.
  Seq x = seq_from({1, 1, 1, 1}, 1, 4, 1);
  Mat W(3, 1);
  W(0, 0) = W(1, 0) = W(2, 0) = 1.0;
  double bias = 0.0;
  Seq y;
  Conv1dCache cc;
  conv1d_forward(x, CView(W.d.data(), 3, 1), &bias, 3, y, cc);
  CHECK(y.d == std::vector<double>{2, 3, 3, 2});

  // Identity kernel passes the signal through.
  Seq sig = seq_from({0.5, -1.0, 2.0, 0.25}, 1, 4, 1);
  W(0, 0) = 0.0;
  W(1, 0) = 1.0;
  W(2, 0) = 0.0;
  conv1d_forward(sig, CView(W.d.data(), 3, 1), &bias, 3, y, cc);
  for (int t = 0; t < 4; ++t) CHECK(y.at(0, t, 0) == doctest::Approx(sig.at(0, t, 0)));

  // Center-tap scaling.
  W(1, 0) = 2.0;
  conv1d_forward(sig, CView(W.d.data(), 3, 1), &bias, 3, y, cc);
  for (int t = 0; t < 4; ++t) CHECK(y.at(0, t, 0) == doctest::Approx(2.0 * sig.at(0, t, 0)));

  // Bias shifts every output.
  bias = 0.75;
  conv1d_forward(sig, CView(W.d.data(), 3, 1), &bias, 3, y, cc);
  for (int t = 0; t < 4; ++t) CHECK(y.at(0, t, 0) == doctest::Approx(2.0 * sig.at(0, t, 0) + 0.75));

  CHECK_THROWS_AS(conv1d_forward(sig, CView(W.d.data(), 3, 1), &bias, 4, y, cc), Error);
}

TEST_CASE("conv1d gradients match finite differences") {
  std::mt19937_64 rng(11);
  const int B = 2, T = 8, Cin = 2, Cout = 3, k = 3;
  Seq x(B, T, Cin);
  fill(rng, x.d.data(), x.d.size());
  Mat W(k * Cin, Cout);
  fill(rng, W.d.data(), W.d.size());
  std::vector<double> bias(Cout);
  fill(rng, bias.data(), bias.size());
  std::vector<double> u(static_cast<size_t>(B) * T * Cout);
  fill(rng, u.data(), u.size());

  auto f = [&]() {
    Seq y;
    Conv1dCache cc;
    conv1d_forward(x, CView(W.d.data(), W.rows, W.cols), bias.data(), k, y, cc);
    return contract(u, y.d);
  };

  Seq y, dx;
  Conv1dCache cc;
  conv1d_forward(x, CView(W.d.data(), W.rows, W.cols), bias.data(), k, y, cc);
  Seq dy(B, T, Cout);
  dy.d = u;
  Mat dW(k * Cin, Cout);
  std::vector<double> db(Cout, 0.0);
  conv1d_backward(cc, dy, CView(W.d.data(), W.rows, W.cols), View{dW.d.data(), dW.rows, dW.cols},
                  db.data(), dx);

  check_grad(f, x.d.data(), dx.d.data(), x.d.size());
  check_grad(f, W.d.data(), dW.d.data(), W.d.size());
  check_grad(f, bias.data(), db.data(), bias.size());

  Seq scratch;
  CHECK_THROWS_AS(conv1d_backward(cc, dy, CView(W.d.data(), W.rows, W.cols),
                                  View{dW.d.data(), dW.rows, dW.cols}, db.data(), scratch),
                  Error);
}

TEST_CASE("maxpool1d examples and tie routing") {
  Seq x = seq_from({1, 2, 3, 4}, 1, 4, 1);
  Seq y;
  MaxPoolCache pc;
  maxpool1d_forward(x, y, pc);
  CHECK(y.d == std::vector<double>{2, 4});

  // Odd length drops the trailing sample.
  Seq x5 = seq_from({1, 2, 3, 4, 9}, 1, 5, 1);
  maxpool1d_forward(x5, y, pc);
  CHECK(y.T == 2);
  CHECK(y.d == std::vector<double>{2, 4});

  // Ties route the gradient to the earliest timestep.
  Seq tie = seq_from({3, 3}, 1, 2, 1);
  maxpool1d_forward(tie, y, pc);
  Seq dy(1, 1, 1);
  dy.d[0] = 1.0;
  Seq dx;
  maxpool1d_backward(pc, dy, dx);
  CHECK(dx.d == std::vector<double>{1, 0});
}

TEST_CASE("maxpool1d gradient matches finite differences") {
  std::mt19937_64 rng(12);
  Seq x(2, 8, 3);
  fill(rng, x.d.data(), x.d.size());
  std::vector<double> u(2 * 4 * 3);
  fill(rng, u.data(), u.size());

  auto f = [&]() {
    Seq y;
    MaxPoolCache pc;
    maxpool1d_forward(x, y, pc);
    return contract(u, y.d);
  };

  Seq y, dx;
  MaxPoolCache pc;
  maxpool1d_forward(x, y, pc);
  Seq dy(2, 4, 3);
  dy.d = u;
  maxpool1d_backward(pc, dy, dx);
  check_grad(f, x.d.data(), dx.d.data(), x.d.size());
}

TEST_CASE("batchnorm1d worked examples") {
  const double eps = 1e-5;
  Mat gb(2, 1);
  gb(0, 0) = 1.0;
  gb(1, 0) = 0.0;
  std::vector<double> rm(1, 0.0), rv(1, 1.0);
  BatchNormBuffers buf{rm.data(), rv.data()};

  Seq x = seq_from({1, 3}, 2, 1, 1);
  Seq y;
  BatchNormCache bc;
  batchnorm1d_forward(x, CView(gb.d.data(), 2, 1), buf, eps, 0.9, RunMode::Train, y, bc);
  const double expect = 1.0 / std::sqrt(1.0 + eps);  // mean 2, population var 1
  CHECK(y.d[0] == doctest::Approx(-expect).epsilon(1e-12));
  CHECK(y.d[1] == doctest::Approx(expect).epsilon(1e-12));
  CHECK(rm[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 2.0));
  CHECK(rv[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 1.0));

  // Constant input collapses to beta.
  gb(1, 0) = 0.25;
  Seq cx = seq_from({5, 5, 5}, 3, 1, 1);
  batchnorm1d_forward(cx, CView(gb.d.data(), 2, 1), buf, eps, 0.9, RunMode::Train, y, bc);
  for (double v : y.d) CHECK(v == doctest::Approx(0.25));

  // Eval mode leaves the running statistics untouched.
  const double rm_before = rm[0], rv_before = rv[0];
  batchnorm1d_forward(cx, CView(gb.d.data(), 2, 1), buf, eps, 0.9, RunMode::Eval, y, bc);
  CHECK(rm[0] == rm_before);
  CHECK(rv[0] == rv_before);

  Seq one = seq_from({1.0}, 1, 1, 1);
  try {
    batchnorm1d_forward(one, CView(gb.d.data(), 2, 1), buf, eps, 0.9, RunMode::Train, y, bc);
    FAIL("expected BatchTooSmall");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BatchTooSmall);
  }
}

TEST_CASE("batchnorm1d gradients match finite differences in both modes") {
  std::mt19937_64 rng(13);
  const int B = 3, T = 4, C = 2;
  Seq x(B, T, C);
  fill(rng, x.d.data(), x.d.size());
  Mat gb(2, C);
  fill(rng, gb.d.data(), gb.d.size(), 0.5, 1.5);
  std::vector<double> u(static_cast<size_t>(B) * T * C);
  fill(rng, u.data(), u.size());
  std::vector<double> rm(C, 0.1), rv(C, 0.8);

  for (RunMode mode : {RunMode::Train, RunMode::Eval}) {
    auto f = [&]() {
      std::vector<double> rm_copy = rm, rv_copy = rv;  // keep stats fixed across probes
      BatchNormBuffers buf{rm_copy.data(), rv_copy.data()};
      Seq y;
      BatchNormCache bc;
      batchnorm1d_forward(x, CView(gb.d.data(), 2, C), buf, 1e-5, 0.9, mode, y, bc);
      return contract(u, y.d);
    };

    std::vector<double> rm_copy = rm, rv_copy = rv;
    BatchNormBuffers buf{rm_copy.data(), rv_copy.data()};
    Seq y, dx;
    BatchNormCache bc;
    batchnorm1d_forward(x, CView(gb.d.data(), 2, C), buf, 1e-5, 0.9, mode, y, bc);
    Seq dy(B, T, C);
    dy.d = u;
    Mat dgb(2, C);
    batchnorm1d_backward(bc, dy, CView(gb.d.data(), 2, C), View{dgb.d.data(), 2, C}, dx);

    check_grad(f, x.d.data(), dx.d.data(), x.d.size());
    check_grad(f, gb.d.data(), dgb.d.data(), gb.d.size());
  }
}

TEST_CASE("relu and dropout") {
  std::mt19937_64 rng(14);
  Seq x = seq_from({-1.0, 0.5, -0.25, 2.0}, 1, 4, 1);
  Seq y;
  ReluCache rc;
  relu_forward(x, y, rc);
  CHECK(y.d == std::vector<double>{0.0, 0.5, 0.0, 2.0});
  Seq dy(1, 4, 1);
  dy.d = {1, 1, 1, 1};
  Seq dx;
  relu_backward(rc, dy, dx);
  CHECK(dx.d == std::vector<double>{0, 1, 0, 1});

  // Eval dropout is the identity.
  Seq big(1, 1, 10000);
  std::fill(big.d.begin(), big.d.end(), 1.0);
  Seq out;
  DropoutCache dc;
  dropout_forward(big, 0.2, RunMode::Eval, rng, out, dc);
  CHECK(out.d == big.d);

  // Inverted scaling keeps the expectation near 1 (within 2% over 1e4 draws).
  dropout_forward(big, 0.2, RunMode::Train, rng, out, dc);
  double mean = 0.0;
  int dropped = 0;
  for (double v : out.d) {
    mean += v;
    if (v == 0.0) ++dropped;
  }
  mean /= out.d.size();
  CHECK(mean == doctest::Approx(1.0).epsilon(0.02));
  CHECK(dropped > 1000);
  for (double v : out.d) CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.8)));

  // Backward applies the identical mask.
  Seq din(1, 1, 10000);
  std::fill(din.d.begin(), din.d.end(), 2.0);
  Seq dgrad;
  dropout_backward(dc, din, dgrad);
  for (size_t i = 0; i < dgrad.d.size(); ++i)
    CHECK(dgrad.d[i] == (out.d[i] == 0.0 ? 0.0 : doctest::Approx(2.0 / 0.8)));

  CHECK_THROWS_AS(dropout_forward(big, 1.0, RunMode::Train, rng, out, dc), Error);
}

TEST_CASE("dropout gradient matches finite differences with a reseeded mask") {
  std::mt19937_64 seeder(15);
  Seq x(2, 3, 4);
  fill(seeder, x.d.data(), x.d.size());
  std::vector<double> u(x.d.size());
  fill(seeder, u.data(), u.size());
  const uint64_t mask_seed = 77;

  auto f = [&]() {
    std::mt19937_64 rng(mask_seed);
    Seq y;
    DropoutCache dc;
    dropout_forward(x, 0.4, RunMode::Train, rng, y, dc);
    return contract(u, y.d);
  };

  std::mt19937_64 rng(mask_seed);
  Seq y, dx;
  DropoutCache dc;
  dropout_forward(x, 0.4, RunMode::Train, rng, y, dc);
  Seq dy(2, 3, 4);
  dy.d = u;
  dropout_backward(dc, dy, dx);
  check_grad(f, x.d.data(), dx.d.data(), x.d.size());
}

namespace {

LstmParams make_params(Mat& Wx, Mat& Wh, std::vector<double>& b, int in, int hidden) {
  return LstmParams{CView(Wx.d.data(), in, 4 * hidden), CView(Wh.d.data(), hidden, 4 * hidden),
                    b.data(), in, hidden};
}

}  // namespace

TEST_CASE("lstm zero weights give zero output") {
  const int B = 2, T = 4, I = 3, H = 2;
  Mat Wx(I, 4 * H), Wh(H, 4 * H);
  std::vector<double> b(4 * H, 0.0);
  std::mt19937_64 rng(1);
  Seq x(B, T, I);
  fill(rng, x.d.data(), x.d.size());
  Seq h;
  LstmCache lc;
  lstm_forward(x, make_params(Wx, Wh, b, I, H), 0.0, RunMode::Eval, rng, h, lc);
  for (double v : h.d) CHECK(v == 0.0);
}

TEST_CASE("lstm gradients match finite differences") {
  std::mt19937_64 rng(16);
  const int B = 2, T = 8, I = 2, H = 3;
  Seq x(B, T, I);
  fill(rng, x.d.data(), x.d.size());
  Mat Wx(I, 4 * H), Wh(H, 4 * H);
  fill(rng, Wx.d.data(), Wx.d.size(), -0.5, 0.5);
  fill(rng, Wh.d.data(), Wh.d.size(), -0.5, 0.5);
  std::vector<double> b(4 * H);
  fill(rng, b.data(), b.size(), -0.5, 0.5);
  std::vector<double> u(static_cast<size_t>(B) * T * H);
  fill(rng, u.data(), u.size());

  LstmParams p = make_params(Wx, Wh, b, I, H);

  SUBCASE("without recurrent dropout") {
    auto f = [&]() {
      std::mt19937_64 r2(0);
      Seq h;
      LstmCache lc;
      lstm_forward(x, p, 0.0, RunMode::Eval, r2, h, lc);
      return contract(u, h.d);
    };

    std::mt19937_64 r2(0);
    Seq h, dx;
    LstmCache lc;
    lstm_forward(x, p, 0.0, RunMode::Eval, r2, h, lc);
    Seq dh(B, T, H);
    dh.d = u;
    Mat dWx(I, 4 * H), dWh(H, 4 * H);
    std::vector<double> db(4 * H, 0.0);
    lstm_backward(lc, p,
                  dh, LstmGrads{View{dWx.d.data(), I, 4 * H}, View{dWh.d.data(), H, 4 * H},
                                db.data()},
                  dx);

    check_grad(f, x.d.data(), dx.d.data(), x.d.size());
    check_grad(f, Wx.d.data(), dWx.d.data(), Wx.d.size());
    check_grad(f, Wh.d.data(), dWh.d.data(), Wh.d.size());
    check_grad(f, b.data(), db.data(), b.size());
  }

  SUBCASE("with recurrent dropout, mask reseeded per probe") {
    const uint64_t mask_seed = 99;
    auto f = [&]() {
      std::mt19937_64 r2(mask_seed);
      Seq h;
      LstmCache lc;
      lstm_forward(x, p, 0.5, RunMode::Train, r2, h, lc);
      return contract(u, h.d);
    };

    std::mt19937_64 r2(mask_seed);
    Seq h, dx;
    LstmCache lc;
    lstm_forward(x, p, 0.5, RunMode::Train, r2, h, lc);
    Seq dh(B, T, H);
    dh.d = u;
    Mat dWx(I, 4 * H), dWh(H, 4 * H);
    std::vector<double> db(4 * H, 0.0);
    lstm_backward(lc, p,
                  dh, LstmGrads{View{dWx.d.data(), I, 4 * H}, View{dWh.d.data(), H, 4 * H},
                                db.data()},
                  dx);

    check_grad(f, x.d.data(), dx.d.data(), x.d.size());
    check_grad(f, Wx.d.data(), dWx.d.data(), Wx.d.size());
    check_grad(f, Wh.d.data(), dWh.d.data(), Wh.d.size());
    check_grad(f, b.data(), db.data(), b.size());
  }
}

TEST_CASE("bilstm structure") {
  std::mt19937_64 rng(17);
  const int B = 2, T = 5, I = 3, H = 2;
  Mat Wx(I, 4 * H), Wh(H, 4 * H);
  fill(rng, Wx.d.data(), Wx.d.size(), -0.5, 0.5);
  fill(rng, Wh.d.data(), Wh.d.size(), -0.5, 0.5);
  std::vector<double> b(4 * H);
  fill(rng, b.data(), b.size(), -0.5, 0.5);
  LstmParams shared = make_params(Wx, Wh, b, I, H);

  SUBCASE("T=1 with shared weights makes both directions agree") {
    Seq x(B, 1, I);
    fill(rng, x.d.data(), x.d.size());
    Seq y;
    BiLstmCache bc;
    std::mt19937_64 r2(0);
    bilstm_forward(x, shared, shared, 0.0, RunMode::Eval, r2, y, bc);
    for (int bi = 0; bi < B; ++bi)
      for (int j = 0; j < H; ++j) CHECK(y.at(bi, 0, j) == doctest::Approx(y.at(bi, 0, H + j)));
  }

  SUBCASE("reversing input and swapping directions reverses the output") {
    Mat Wx2(I, 4 * H), Wh2(H, 4 * H);
    fill(rng, Wx2.d.data(), Wx2.d.size(), -0.5, 0.5);
    fill(rng, Wh2.d.data(), Wh2.d.size(), -0.5, 0.5);
    std::vector<double> b2(4 * H);
    fill(rng, b2.data(), b2.size(), -0.5, 0.5);
    LstmParams other = make_params(Wx2, Wh2, b2, I, H);

    Seq x(B, T, I);
    fill(rng, x.d.data(), x.d.size());
    Seq x_rev(B, T, I);
    for (int bi = 0; bi < B; ++bi)
      for (int t = 0; t < T; ++t)
        for (int c = 0; c < I; ++c) x_rev.at(bi, t, c) = x.at(bi, T - 1 - t, c);

    Seq y, y2;
    BiLstmCache c1, c2;
    std::mt19937_64 r2(0);
    bilstm_forward(x, shared, other, 0.0, RunMode::Eval, r2, y, c1);
    bilstm_forward(x_rev, other, shared, 0.0, RunMode::Eval, r2, y2, c2);
    for (int bi = 0; bi < B; ++bi) {
      for (int t = 0; t < T; ++t) {
        for (int j = 0; j < H; ++j) {
          CHECK(y2.at(bi, t, j) == doctest::Approx(y.at(bi, T - 1 - t, H + j)));
          CHECK(y2.at(bi, t, H + j) == doctest::Approx(y.at(bi, T - 1 - t, j)));
        }
      }
    }
  }
}

TEST_CASE("bilstm gradients match finite differences") {
  std::mt19937_64 rng(18);
  const int B = 2, T = 8, I = 2, H = 3;
  Seq x(B, T, I);
  fill(rng, x.d.data(), x.d.size());
  Mat Wxf(I, 4 * H), Whf(H, 4 * H), Wxb(I, 4 * H), Whb(H, 4 * H);
  fill(rng, Wxf.d.data(), Wxf.d.size(), -0.5, 0.5);
  fill(rng, Whf.d.data(), Whf.d.size(), -0.5, 0.5);
  fill(rng, Wxb.d.data(), Wxb.d.size(), -0.5, 0.5);
  fill(rng, Whb.d.data(), Whb.d.size(), -0.5, 0.5);
  std::vector<double> bf(4 * H), bb(4 * H);
  fill(rng, bf.data(), bf.size(), -0.5, 0.5);
  fill(rng, bb.data(), bb.size(), -0.5, 0.5);
  std::vector<double> u(static_cast<size_t>(B) * T * 2 * H);
  fill(rng, u.data(), u.size());

  LstmParams pf = make_params(Wxf, Whf, bf, I, H);
  LstmParams pb = make_params(Wxb, Whb, bb, I, H);

  auto f = [&]() {
    std::mt19937_64 r2(0);
    Seq y;
    BiLstmCache bc;
    bilstm_forward(x, pf, pb, 0.0, RunMode::Eval, r2, y, bc);
    return contract(u, y.d);
  };

  std::mt19937_64 r2(0);
  Seq y, dx;
  BiLstmCache bc;
  bilstm_forward(x, pf, pb, 0.0, RunMode::Eval, r2, y, bc);
  Seq dy(B, T, 2 * H);
  dy.d = u;
  Mat dWxf(I, 4 * H), dWhf(H, 4 * H), dWxb(I, 4 * H), dWhb(H, 4 * H);
  std::vector<double> dbf(4 * H, 0.0), dbb(4 * H, 0.0);
  bilstm_backward(bc, pf, pb, dy,
                  LstmGrads{View{dWxf.d.data(), I, 4 * H}, View{dWhf.d.data(), H, 4 * H},
                            dbf.data()},
                  LstmGrads{View{dWxb.d.data(), I, 4 * H}, View{dWhb.d.data(), H, 4 * H},
                            dbb.data()},
                  dx);

  check_grad(f, x.d.data(), dx.d.data(), x.d.size());
  check_grad(f, Wxf.d.data(), dWxf.d.data(), Wxf.d.size());
  check_grad(f, Whb.d.data(), dWhb.d.data(), Whb.d.size());
  check_grad(f, bf.data(), dbf.data(), bf.size());
  check_grad(f, bb.data(), dbb.data(), bb.size());
}

TEST_CASE("attention weights and limits") {
  std::mt19937_64 rng(19);
  const int B = 2, T = 5, D = 3;

  SUBCASE("identical timesteps get uniform weights") {
    Seq h(B, T, D);
    for (int bi = 0; bi < B; ++bi)
      for (int t = 0; t < T; ++t)
        for (int c = 0; c < D; ++c) h.at(bi, t, c) = 0.3 * (c + 1);
    std::vector<double> w(D);
    fill(rng, w.data(), w.size());
    Seq y;
    Mat alpha;
    AttentionCache ac;
    attention_forward(h, w.data(), 0.2, y, alpha, ac);
    for (int bi = 0; bi < B; ++bi)
      for (int t = 0; t < T; ++t) CHECK(alpha(bi, t) == doctest::Approx(1.0 / T));
    for (int bi = 0; bi < B; ++bi)
      for (int t = 0; t < T; ++t)
        for (int c = 0; c < D; ++c)
          CHECK(y.at(bi, t, c) == doctest::Approx(h.at(bi, t, c) / T));
  }

  SUBCASE("weights sum to one and tanh caps the spread") {
    Seq h(B, T, D);
    fill(rng, h.d.data(), h.d.size(), -10.0, 10.0);
    std::vector<double> w = {5.0, -7.0, 3.0};  // saturates the score tanh
    Seq y;
    Mat alpha;
    AttentionCache ac;
    attention_forward(h, w.data(), 0.0, y, alpha, ac);
    for (int bi = 0; bi < B; ++bi) {
      double sum = 0.0, amin = 1.0, amax = 0.0;
      for (int t = 0; t < T; ++t) {
        sum += alpha(bi, t);
        amin = std::min(amin, alpha(bi, t));
        amax = std::max(amax, alpha(bi, t));
      }
      CHECK(sum == doctest::Approx(1.0));
      // Scores live in (-1, 1), so the odds ratio cannot exceed e^2.
      CHECK(amax / amin <= std::exp(2.0) + 1e-9);
    }
  }
}

TEST_CASE("attention gradients match finite differences") {
  std::mt19937_64 rng(20);
  const int B = 2, T = 5, D = 3;
  Seq h(B, T, D);
  fill(rng, h.d.data(), h.d.size());
  std::vector<double> w(D);
  fill(rng, w.data(), w.size());
  double b = 0.1;
  std::vector<double> u(static_cast<size_t>(B) * T * D);
  fill(rng, u.data(), u.size());

  auto f = [&]() {
    Seq y;
    Mat alpha;
    AttentionCache ac;
    attention_forward(h, w.data(), b, y, alpha, ac);
    return contract(u, y.d);
  };

  Seq y, dh;
  Mat alpha;
  AttentionCache ac;
  attention_forward(h, w.data(), b, y, alpha, ac);
  Seq dy(B, T, D);
  dy.d = u;
  std::vector<double> dw(D, 0.0);
  double db = 0.0;
  attention_backward(ac, w.data(), dy, dw.data(), &db, dh);

  check_grad(f, h.d.data(), dh.d.data(), h.d.size());
  check_grad(f, w.data(), dw.data(), w.size());
  check_grad(f, &b, &db, 1);
}

TEST_CASE("linear layer and softmax") {
  std::mt19937_64 rng(21);
  const int B = 3, I = 4, O = 2;
  Mat x(B, I), W(I, O);
  fill(rng, x.d.data(), x.d.size());
  fill(rng, W.d.data(), W.d.size());
  std::vector<double> b(O);
  fill(rng, b.data(), b.size());
  std::vector<double> u(static_cast<size_t>(B) * O);
  fill(rng, u.data(), u.size());

  auto f = [&]() {
    Mat y;
    LinearCache lc;
    linear_forward(x, CView(W.d.data(), I, O), b.data(), y, lc);
    return contract(u, y.d);
  };

  Mat y, dxm;
  LinearCache lc;
  linear_forward(x, CView(W.d.data(), I, O), b.data(), y, lc);
  Mat dy(B, O);
  dy.d = u;
  Mat dW(I, O);
  std::vector<double> db(O, 0.0);
  linear_backward(lc, CView(W.d.data(), I, O), dy, View{dW.d.data(), I, O}, db.data(), dxm);

  check_grad(f, x.d.data(), dxm.d.data(), x.d.size());
  check_grad(f, W.d.data(), dW.d.data(), W.d.size());
  check_grad(f, b.data(), db.data(), b.size());

  // Softmax: uniform on equal logits, exact ratios, and overflow safety.
  Mat logits(2, 2);
  logits(0, 0) = 0.0;
  logits(0, 1) = 0.0;
  logits(1, 0) = 1000.0;
  logits(1, 1) = 1000.0 + std::log(3.0);
  Mat probs;
  softmax_rows(logits, probs);
  CHECK(probs(0, 0) == doctest::Approx(0.5));
  CHECK(probs(1, 0) == doctest::Approx(0.25));
  CHECK(probs(1, 1) == doctest::Approx(0.75));
}
