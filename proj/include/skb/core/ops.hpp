#pragma once

// Differentiable operations recorded on a Tape. Shapes are [rows x cols]
// unless stated otherwise; tensors of higher rank fold leading axes into rows.

#include <cstdint>
#include <span>
#include <vector>

#include "skb/core/tape.hpp"

namespace skb::ops {

// [m x k] * [k x n]
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);

// [m x k] * [n x k]^T
template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b);

// x [r x in] * w [in x out] + bias [out]
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> bias);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, T factor);
template <typename T>
Var<T> add_scalar(Var<T> a, T offset);

template <typename T>
Var<T> gelu(Var<T> x);
template <typename T>
Var<T> relu(Var<T> x);

// Normalizes over the last axis.
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps);

// Max-subtracted softmax along `axis`.
template <typename T>
Var<T> softmax(Var<T> x, std::size_t axis);

// Inverted dropout. Identity when the tape is not training or p == 0.
template <typename T>
Var<T> dropout(Var<T> x, T p);

// out[i] = table[ids[i]]
template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const std::size_t> ids);

// Inserts `token` [1 x d] ahead of each of `batch` equal-length segments of `body`.
template <typename T>
Var<T> prepend_rows(Var<T> token, Var<T> body, std::size_t batch);

// Multi-head scaled dot-product attention over `batch` sequences of equal
// padded length. q, k, v are [batch*len x H]; key_valid has batch*len entries
// and masked keys receive a -1e9 additive logit. Dropout applies to the
// attention weights.
template <typename T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, std::span<const std::uint8_t> key_valid, std::size_t batch,
                 std::size_t heads, T dropout_p);

// Columns [begin, end) of a matrix.
template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t end);

template <typename T>
Var<T> sum(Var<T> x);
template <typename T>
Var<T> mean(Var<T> x);

// Row-wise squared Euclidean distance, [r x d] x [r x d] -> [r]
template <typename T>
Var<T> squared_distance(Var<T> a, Var<T> b);

// Sum of |pred - target| over entries with mask == 1 divided by the number of
// such entries; 0 when nothing is masked.
template <typename T>
Var<T> l1_loss(Var<T> pred, Var<T> target, const Tensor<T>& mask);

// Mean negative log-softmax of the labelled class over rows with mask == 1.
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> labels, std::span<const T> mask);

// Unmasked convenience overload.
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> labels);

}  // namespace skb::ops
