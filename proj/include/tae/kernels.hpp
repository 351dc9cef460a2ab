#pragma once

// Dense row-major kernels used by the autodiff tape and the incremental
// decoder. The top-level versions split work across OpenMP threads by output
// row, so every output element is reduced in the same order regardless of the
// thread count. `reference::` holds plain serial loops kept as a test oracle.

#include <cmath>
#include <cstddef>

namespace tae::kernels {

enum class Trans { no, yes };

/// tanh approximation of GELU and its derivative.
template <typename T>
inline T gelu(T x, T* deriv = nullptr) {
  constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T k = T(0.044715);
  const T th = std::tanh(c * (x + k * x * x * x));
  if (deriv) *deriv = T(0.5) * (T(1) + th) + T(0.5) * x * (T(1) - th * th) * c * (T(1) + T(3) * k * x * x);
  return T(0.5) * x * (T(1) + th);
}

/// C[m,n] = alpha * op(A)[m,k] * op(B)[k,n] + beta * C.
template <typename T>
void gemm(Trans ta, Trans tb, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc);

/// In-place softmax over each row. Entries equal to -inf stay at zero mass.
template <typename T>
void softmax_rows(T* x, int rows, int cols);

/// y = (x - mean) / sqrt(var + eps) per row; writes the normalized value and
/// the per-row inverse standard deviation (needed by the backward pass).
template <typename T>
void layer_norm_rows(const T* x, T* xhat, T* inv_std, int rows, int cols, T eps);

/// Number of OpenMP threads the kernels will use.
int max_threads();
void set_threads(int n);

namespace reference {

template <typename T>
void gemm(Trans ta, Trans tb, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc);

template <typename T>
void softmax_rows(T* x, int rows, int cols);

template <typename T>
void layer_norm_rows(const T* x, T* xhat, T* inv_std, int rows, int cols, T eps);

}  // namespace reference
}  // namespace tae::kernels
