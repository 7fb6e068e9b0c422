#pragma once

// Straightforward serial kernels. They define the expected results of the
// parallel kernels in tests and act as the baseline in the benchmark.

#include <cstddef>
#include <span>

#include "skb/core/kernels.hpp"

namespace skb::reference {

using kernels::Trans;

template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, std::span<const T> a,
          std::span<const T> b, std::span<T> c, bool accumulate);

template <typename T>
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const T> x, std::span<T> out);

template <typename T>
void layer_norm_rows(std::size_t rows, std::size_t cols, std::span<const T> x, std::span<const T> gain,
                     std::span<const T> bias, T eps, std::span<T> out);

template <typename T>
void gelu(std::span<const T> x, std::span<T> out);

}  // namespace skb::reference
