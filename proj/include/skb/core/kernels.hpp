#pragma once

// OpenMP-parallel compute kernels. Every kernel writes each output element from
// exactly one thread in a fixed order, so results do not depend on thread count.
// Serial reference versions live in reference.hpp.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <type_traits>

namespace skb::kernels {

enum class Trans { No, Yes };

// exp(x) for x <= 0, exactly 0 below -87. The single-precision version is a
// branch-free Cody-Waite reduction with a degree-6 polynomial so that loops
// vectorize (given -fno-trapping-math).
template <typename T>
inline T exp_nonpositive(T x) {
  if constexpr (std::is_same_v<T, float>) {
    const bool underflow = x < -87.0f;
    x = std::max(x, -87.0f);
    const float n = std::floor(x * 1.44269504f + 0.5f);
    const float r = (x - n * 0.693359375f) - n * -2.12194440e-4f;
    float p = 1.9875691500e-4f;
    p = p * r + 1.3981999507e-3f;
    p = p * r + 8.3334519073e-3f;
    p = p * r + 4.1665795894e-2f;
    p = p * r + 1.6666665459e-1f;
    p = p * r + 5.0000001201e-1f;
    p = p * r * r + r + 1.0f;
    const float v = p * std::bit_cast<float>((static_cast<std::int32_t>(n) + 127) << 23);
    return underflow ? 0.0f : v;
  } else {
    return std::exp(x);
  }
}

// C[m x n] (+)= op(A) * op(B), op(A) is [m x k], op(B) is [k x n].
// A is stored [m x k] (or [k x m] when transposed); B likewise.
template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, std::span<const T> a,
          std::span<const T> b, std::span<T> c, bool accumulate);

// Row-wise softmax of a [rows x cols] block.
template <typename T>
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const T> x, std::span<T> out);

// Row-wise layer normalization. mean/rstd receive one value per row for the backward pass.
template <typename T>
void layer_norm_rows(std::size_t rows, std::size_t cols, std::span<const T> x, std::span<const T> gain,
                     std::span<const T> bias, T eps, std::span<T> out, std::span<T> mean, std::span<T> rstd);

// Accumulates dx, dgain, dbias.
template <typename T>
void layer_norm_rows_backward(std::size_t rows, std::size_t cols, std::span<const T> x, std::span<const T> gain,
                              std::span<const T> mean, std::span<const T> rstd, std::span<const T> dout,
                              std::span<T> dx, std::span<T> dgain, std::span<T> dbias);

// GELU, tanh approximation.
template <typename T>
void gelu(std::span<const T> x, std::span<T> out);

// dx += dout * gelu'(x)
template <typename T>
void gelu_backward(std::span<const T> x, std::span<const T> dout, std::span<T> dx);

// out[j] += sum_i x[i, j]; column sums of a [rows x cols] block.
template <typename T>
void column_sums(std::size_t rows, std::size_t cols, std::span<const T> x, std::span<T> out);

}  // namespace skb::kernels
