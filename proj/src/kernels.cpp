#include "tae/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace tae::kernels {
namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr long kParallelWork = 1L << 16;

template <typename T>
inline T at(const T* p, int ld, Trans t, int r, int c) {
  return t == Trans::no ? p[static_cast<long>(r) * ld + c] : p[static_cast<long>(c) * ld + r];
}

template <typename T>
void scale_row(T* c, int n, T beta) {
  if (beta == T(0)) {
    std::fill(c, c + n, T(0));
  } else if (beta != T(1)) {
    for (int j = 0; j < n; ++j) c[j] *= beta;
  }
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }
void set_threads(int n) { omp_set_num_threads(std::max(1, n)); }

template <typename T>
void gemm(Trans ta, Trans tb, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc) {
  const long work = static_cast<long>(m) * n * k;
  if (tb == Trans::no) {
    // Row i of C accumulates alpha * A(i,p) * B(p,:); the inner loop is a
    // contiguous axpy over n.
#pragma omp parallel for schedule(static) if (work > kParallelWork)
    for (int i = 0; i < m; ++i) {
      T* ci = c + static_cast<long>(i) * ldc;
      scale_row(ci, n, beta);
      for (int p = 0; p < k; ++p) {
        const T s = alpha * at(a, lda, ta, i, p);
        if (s == T(0)) continue;
        const T* bp = b + static_cast<long>(p) * ldb;
#pragma omp simd
        for (int j = 0; j < n; ++j) ci[j] += s * bp[j];
      }
    }
    return;
  }
  // B transposed: C(i,j) is a dot product of row i of op(A) with row j of B.
  if (ta == Trans::no) {
#pragma omp parallel for schedule(static) if (work > kParallelWork)
    for (int i = 0; i < m; ++i) {
      const T* ai = a + static_cast<long>(i) * lda;
      T* ci = c + static_cast<long>(i) * ldc;
      for (int j = 0; j < n; ++j) {
        const T* bj = b + static_cast<long>(j) * ldb;
        T s = T(0);
#pragma omp simd reduction(+ : s)
        for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
        ci[j] = alpha * s + (beta == T(0) ? T(0) : beta * ci[j]);
      }
    }
    return;
  }
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (int i = 0; i < m; ++i) {
    T* ci = c + static_cast<long>(i) * ldc;
    for (int j = 0; j < n; ++j) {
      T s = T(0);
      for (int p = 0; p < k; ++p) s += at(a, lda, ta, i, p) * at(b, ldb, tb, p, j);
      ci[j] = alpha * s + (beta == T(0) ? T(0) : beta * ci[j]);
    }
  }
}

template <typename T>
void softmax_rows(T* x, int rows, int cols) {
#pragma omp parallel for schedule(static) if (static_cast<long>(rows) * cols > kParallelWork)
  for (int r = 0; r < rows; ++r) {
    T* row = x + static_cast<long>(r) * cols;
    T mx = -std::numeric_limits<T>::infinity();
    for (int j = 0; j < cols; ++j) mx = std::max(mx, row[j]);
    if (mx == -std::numeric_limits<T>::infinity()) {
      std::fill(row, row + cols, T(0));
      continue;
    }
    T sum = T(0);
    for (int j = 0; j < cols; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    const T inv = T(1) / sum;
    for (int j = 0; j < cols; ++j) row[j] *= inv;
  }
}

template <typename T>
void layer_norm_rows(const T* x, T* xhat, T* inv_std, int rows, int cols, T eps) {
#pragma omp parallel for schedule(static) if (static_cast<long>(rows) * cols > kParallelWork)
  for (int r = 0; r < rows; ++r) {
    const T* xr = x + static_cast<long>(r) * cols;
    T* yr = xhat + static_cast<long>(r) * cols;
    T mean = T(0);
    for (int j = 0; j < cols; ++j) mean += xr[j];
    mean /= T(cols);
    T var = T(0);
    for (int j = 0; j < cols; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= T(cols);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (int j = 0; j < cols; ++j) yr[j] = (xr[j] - mean) * is;
  }
}

namespace reference {

template <typename T>
void gemm(Trans ta, Trans tb, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      T s = T(0);
      for (int p = 0; p < k; ++p) s += at(a, lda, ta, i, p) * at(b, ldb, tb, p, j);
      T& cij = c[static_cast<long>(i) * ldc + j];
      cij = alpha * s + (beta == T(0) ? T(0) : beta * cij);
    }
  }
}

template <typename T>
void softmax_rows(T* x, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    T* row = x + static_cast<long>(r) * cols;
    T mx = *std::max_element(row, row + cols);
    if (mx == -std::numeric_limits<T>::infinity()) {
      std::fill(row, row + cols, T(0));
      continue;
    }
    T sum = T(0);
    for (int j = 0; j < cols; ++j) sum += std::exp(row[j] - mx);
    for (int j = 0; j < cols; ++j) row[j] = std::exp(row[j] - mx) / sum;
  }
}

template <typename T>
void layer_norm_rows(const T* x, T* xhat, T* inv_std, int rows, int cols, T eps) {
  for (int r = 0; r < rows; ++r) {
    const T* xr = x + static_cast<long>(r) * cols;
    T mean = T(0);
    for (int j = 0; j < cols; ++j) mean += xr[j];
    mean /= T(cols);
    T var = T(0);
    for (int j = 0; j < cols; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= T(cols);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (int j = 0; j < cols; ++j) xhat[static_cast<long>(r) * cols + j] = (xr[j] - mean) * inv_std[r];
  }
}

}  // namespace reference

#define TAE_INSTANTIATE(T)                                                                  \
  template void gemm<T>(Trans, Trans, int, int, int, T, const T*, int, const T*, int, T, T*, \
                        int);                                                               \
  template void softmax_rows<T>(T*, int, int);                                              \
  template void layer_norm_rows<T>(const T*, T*, T*, int, int, T);                          \
  template void reference::gemm<T>(Trans, Trans, int, int, int, T, const T*, int, const T*,  \
                                   int, T, T*, int);                                        \
  template void reference::softmax_rows<T>(T*, int, int);                                   \
  template void reference::layer_norm_rows<T>(const T*, T*, T*, int, int, T);

TAE_INSTANTIATE(float)
TAE_INSTANTIATE(double)
#undef TAE_INSTANTIATE

}  // namespace tae::kernels
