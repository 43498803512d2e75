#pragma once
// Dense kernels used by the layers. Everything is double precision, row-major
// and deterministic: accumulation order is fixed, so identical inputs give
// bit-identical results. The hot loops are written in axpy form (contiguous
// elementwise multiply-add) so they vectorize without relaxed FP semantics.

#include <cstddef>
#include <vector>

#include "cbanet/common.hpp"

namespace cbanet {

struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> d;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), d(static_cast<size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return d[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return d[static_cast<size_t>(r) * cols + c]; }
  double* row(int r) { return d.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return d.data() + static_cast<size_t>(r) * cols; }
  void zero() { std::fill(d.begin(), d.end(), 0.0); }
};

// y[0..n) += a * x[0..n)
inline void axpy(double* y, double a, const double* x, int n) {
  for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

inline double dot(const double* a, const double* b, int n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

// C(MxN) += A(MxK) * B(KxN)
inline void matmul_accum(double* C, const double* A, const double* B, int M, int K, int N) {
  for (int m = 0; m < M; ++m) {
    double* c_row = C + static_cast<size_t>(m) * N;
    const double* a_row = A + static_cast<size_t>(m) * K;
    for (int k = 0; k < K; ++k) {
      axpy(c_row, a_row[k], B + static_cast<size_t>(k) * N, N);
    }
  }
}

inline void matmul_accum(Mat& C, const Mat& A, const Mat& B) {
  if (A.cols != B.rows || C.rows != A.rows || C.cols != B.cols) {
    throw Error(ErrorCode::ShapeMismatch, "matmul: (" + std::to_string(A.rows) + "x" +
                                              std::to_string(A.cols) + ") * (" +
                                              std::to_string(B.rows) + "x" +
                                              std::to_string(B.cols) + ") -> (" +
                                              std::to_string(C.rows) + "x" +
                                              std::to_string(C.cols) + ")");
  }
  matmul_accum(C.d.data(), A.d.data(), B.d.data(), A.rows, A.cols, B.cols);
}

inline Mat matmul(const Mat& A, const Mat& B) {
  Mat C(A.rows, B.cols);
  matmul_accum(C, A, B);
  return C;
}

inline Mat transpose(const Mat& A) {
  Mat T(A.cols, A.rows);
  for (int r = 0; r < A.rows; ++r) {
    for (int c = 0; c < A.cols; ++c) T(c, r) = A(r, c);
  }
  return T;
}

}  // namespace cbanet
