#include "skb/core/kernels.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <type_traits>
#include <vector>

namespace skb::kernels {
namespace {

// Transposes a [rows x cols] block into [cols x rows].
template <typename T>
std::vector<T> transposed(std::size_t rows, std::size_t cols, std::span<const T> src) {
  std::vector<T> dst(rows * cols);
  constexpr std::size_t tile = 32;
#pragma omp parallel for schedule(static)
  for (std::size_t r0 = 0; r0 < rows; r0 += tile) {
    const std::size_t r1 = std::min(rows, r0 + tile);
    for (std::size_t c0 = 0; c0 < cols; c0 += tile) {
      const std::size_t c1 = std::min(cols, c0 + tile);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * cols + c];
    }
  }
  return dst;
}

// C[m x n] (+)= A[m x k] * B[k x n], all row-major. Each kRows x kTile block
// of C is accumulated in registers over the whole k range, in increasing p, and
// then written back once.
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  constexpr std::size_t kRows = 8;
  constexpr std::size_t kTile = 16;
  const std::size_t row_groups = (m + kRows - 1) / kRows;
#pragma omp parallel for schedule(static)
  for (std::size_t g = 0; g < row_groups; ++g) {
    const std::size_t i0 = g * kRows;
    const std::size_t rows = std::min(kRows, m - i0);
    for (std::size_t j0 = 0; j0 < n; j0 += kTile) {
      const std::size_t cols = std::min(kTile, n - j0);
      T acc[kRows][kTile] = {};
      if (rows == kRows && cols == kTile) {
        for (std::size_t p = 0; p < k; ++p) {
          const T* bp = b + p * n + j0;
          for (std::size_t r = 0; r < kRows; ++r) {
            const T av = a[(i0 + r) * k + p];
#pragma omp simd
            for (std::size_t j = 0; j < kTile; ++j) acc[r][j] += av * bp[j];
          }
        }
      } else {
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t p = 0; p < k; ++p) {
            const T av = a[(i0 + r) * k + p];
            const T* bp = b + p * n + j0;
            for (std::size_t j = 0; j < cols; ++j) acc[r][j] += av * bp[j];
          }
        }
      }
      for (std::size_t r = 0; r < rows; ++r) {
        T* cr = c + (i0 + r) * n + j0;
        if (accumulate) {
          for (std::size_t j = 0; j < cols; ++j) cr[j] += acc[r][j];
        } else {
          for (std::size_t j = 0; j < cols; ++j) cr[j] = acc[r][j];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, std::span<const T> a,
          std::span<const T> b, std::span<T> c, bool accumulate) {
  std::vector<T> a_packed;
  std::vector<T> b_packed;
  const T* ap = a.data();
  const T* bp = b.data();
  if (ta == Trans::Yes) {
    a_packed = transposed<T>(k, m, a);
    ap = a_packed.data();
  }
  if (tb == Trans::Yes) {
    b_packed = transposed<T>(n, k, b);
    bp = b_packed.data();
  }
  gemm_nn(m, n, k, ap, bp, c.data(), accumulate);
}

template <typename T>
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const T> x, std::span<T> out) {
#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * cols;
    T* yr = out.data() + r * cols;
    T mx = xr[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
    T sum = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      yr[j] = exp_nonpositive(xr[j] - mx);
      sum += yr[j];
    }
    const T inv = T{1} / sum;
    for (std::size_t j = 0; j < cols; ++j) yr[j] *= inv;
  }
}

template <typename T>
void layer_norm_rows(std::size_t rows, std::size_t cols, std::span<const T> x, std::span<const T> gain,
                     std::span<const T> bias, T eps, std::span<T> out, std::span<T> mean, std::span<T> rstd) {
#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * cols;
    T* yr = out.data() + r * cols;
    T mu = 0;
    for (std::size_t j = 0; j < cols; ++j) mu += xr[j];
    mu /= static_cast<T>(cols);
    T var = 0;
    for (std::size_t j = 0; j < cols; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<T>(cols);
    const T rs = T{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < cols; ++j) yr[j] = (xr[j] - mu) * rs * gain[j] + bias[j];
    mean[r] = mu;
    rstd[r] = rs;
  }
}

template <typename T>
void layer_norm_rows_backward(std::size_t rows, std::size_t cols, std::span<const T> x, std::span<const T> gain,
                              std::span<const T> mean, std::span<const T> rstd, std::span<const T> dout,
                              std::span<T> dx, std::span<T> dgain, std::span<T> dbias) {
  if (!dx.empty()) {
#pragma omp parallel for schedule(static)
    for (std::size_t r = 0; r < rows; ++r) {
      const T* xr = x.data() + r * cols;
      const T* gr = dout.data() + r * cols;
      T* dxr = dx.data() + r * cols;
      const T mu = mean[r];
      const T rs = rstd[r];
      T sum_g = 0;
      T sum_gx = 0;
      for (std::size_t j = 0; j < cols; ++j) {
        const T g = gr[j] * gain[j];
        sum_g += g;
        sum_gx += g * (xr[j] - mu) * rs;
      }
      const T inv_n = T{1} / static_cast<T>(cols);
      for (std::size_t j = 0; j < cols; ++j) {
        const T xhat = (xr[j] - mu) * rs;
        dxr[j] += rs * (gr[j] * gain[j] - inv_n * sum_g - xhat * inv_n * sum_gx);
      }
    }
  }
  if (!dgain.empty() || !dbias.empty()) {
#pragma omp parallel for schedule(static)
    for (std::size_t j = 0; j < cols; ++j) {
      T sg = 0;
      T sb = 0;
      for (std::size_t r = 0; r < rows; ++r) {
        const T g = dout[r * cols + j];
        sg += g * (x[r * cols + j] - mean[r]) * rstd[r];
        sb += g;
      }
      if (!dgain.empty()) dgain[j] += sg;
      if (!dbias.empty()) dbias[j] += sb;
    }
  }
}

namespace {
template <typename T>
constexpr T kGeluC = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
template <typename T>
constexpr T kGeluA = static_cast<T>(0.044715);
}  // namespace

template <typename T>
inline T sigmoid(T z) {
  const T e = exp_nonpositive(-std::abs(z));
  const T s = T{1} / (T{1} + e);
  return z >= T{0} ? s : e * s;
}

// 0.5 v (1 + tanh(u)) is evaluated as v * sigmoid(2u), which avoids the
// cancellation of 1 + tanh(u) for large negative inputs.
template <typename T>
void gelu(std::span<const T> x, std::span<T> out) {
  const std::size_t n = x.size();
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const T v = x[i];
    out[i] = v * sigmoid(T{2} * kGeluC<T> * (v + kGeluA<T> * v * v * v));
  }
}

template <typename T>
void gelu_backward(std::span<const T> x, std::span<const T> dout, std::span<T> dx) {
  const std::size_t n = x.size();
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const T v = x[i];
    const T s = sigmoid(T{2} * kGeluC<T> * (v + kGeluA<T> * v * v * v));
    const T du = kGeluC<T> * (T{1} + T{3} * kGeluA<T> * v * v);
    dx[i] += dout[i] * (s + T{2} * v * s * (T{1} - s) * du);
  }
}

template <typename T>
void column_sums(std::size_t rows, std::size_t cols, std::span<const T> x, std::span<T> out) {
#pragma omp parallel for schedule(static)
  for (std::size_t j = 0; j < cols; ++j) {
    T s = 0;
    for (std::size_t r = 0; r < rows; ++r) s += x[r * cols + j];
    out[j] += s;
  }
}

#define SKB_INSTANTIATE_KERNELS(T)                                                                            \
  template void gemm<T>(Trans, Trans, std::size_t, std::size_t, std::size_t, std::span<const T>,             \
                        std::span<const T>, std::span<T>, bool);                                              \
  template void softmax_rows<T>(std::size_t, std::size_t, std::span<const T>, std::span<T>);                  \
  template void layer_norm_rows<T>(std::size_t, std::size_t, std::span<const T>, std::span<const T>,          \
                                   std::span<const T>, T, std::span<T>, std::span<T>, std::span<T>);          \
  template void layer_norm_rows_backward<T>(std::size_t, std::size_t, std::span<const T>, std::span<const T>, \
                                            std::span<const T>, std::span<const T>, std::span<const T>,       \
                                            std::span<T>, std::span<T>, std::span<T>);                        \
  template void gelu<T>(std::span<const T>, std::span<T>);                                                    \
  template void gelu_backward<T>(std::span<const T>, std::span<const T>, std::span<T>);                       \
  template void column_sums<T>(std::size_t, std::size_t, std::span<const T>, std::span<T>);

SKB_INSTANTIATE_KERNELS(float)
SKB_INSTANTIATE_KERNELS(double)

}  // namespace skb::kernels
