#include "skb/core/reference.hpp"

#include <cmath>

namespace skb::reference {

template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, std::span<const T> a,
          std::span<const T> b, std::span<T> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T s = 0;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = ta == Trans::Yes ? a[p * m + i] : a[i * k + p];
        const T bv = tb == Trans::Yes ? b[j * k + p] : b[p * n + j];
        s += av * bv;
      }
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

template <typename T>
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const T> x, std::span<T> out) {
  for (std::size_t r = 0; r < rows; ++r) {
    T mx = x[r * cols];
    for (std::size_t j = 1; j < cols; ++j) mx = x[r * cols + j] > mx ? x[r * cols + j] : mx;
    T sum = 0;
    for (std::size_t j = 0; j < cols; ++j) sum += std::exp(x[r * cols + j] - mx);
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = std::exp(x[r * cols + j] - mx) / sum;
  }
}

template <typename T>
void layer_norm_rows(std::size_t rows, std::size_t cols, std::span<const T> x, std::span<const T> gain,
                     std::span<const T> bias, T eps, std::span<T> out) {
  for (std::size_t r = 0; r < rows; ++r) {
    T mu = 0;
    for (std::size_t j = 0; j < cols; ++j) mu += x[r * cols + j];
    mu /= static_cast<T>(cols);
    T var = 0;
    for (std::size_t j = 0; j < cols; ++j) var += (x[r * cols + j] - mu) * (x[r * cols + j] - mu);
    var /= static_cast<T>(cols);
    for (std::size_t j = 0; j < cols; ++j)
      out[r * cols + j] = (x[r * cols + j] - mu) / std::sqrt(var + eps) * gain[j] + bias[j];
  }
}

template <typename T>
void gelu(std::span<const T> x, std::span<T> out) {
  const T pi = static_cast<T>(3.14159265358979323846);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T v = x[i];
    out[i] = T{0.5} * v * (T{1} + std::tanh(std::sqrt(T{2} / pi) * (v + T{0.044715} * std::pow(v, T{3}))));
  }
}

template void gemm<float>(Trans, Trans, std::size_t, std::size_t, std::size_t, std::span<const float>,
                          std::span<const float>, std::span<float>, bool);
template void gemm<double>(Trans, Trans, std::size_t, std::size_t, std::size_t, std::span<const double>,
                           std::span<const double>, std::span<double>, bool);
template void softmax_rows<float>(std::size_t, std::size_t, std::span<const float>, std::span<float>);
template void softmax_rows<double>(std::size_t, std::size_t, std::span<const double>, std::span<double>);
template void layer_norm_rows<float>(std::size_t, std::size_t, std::span<const float>, std::span<const float>,
                                     std::span<const float>, float, std::span<float>);
template void layer_norm_rows<double>(std::size_t, std::size_t, std::span<const double>, std::span<const double>,
                                      std::span<const double>, double, std::span<double>);
template void gelu<float>(std::span<const float>, std::span<float>);
template void gelu<double>(std::span<const double>, std::span<double>);

}  // namespace skb::reference
