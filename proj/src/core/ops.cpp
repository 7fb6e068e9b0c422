#include "skb/core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "skb/core/kernels.hpp"

namespace skb::ops {
namespace {

using kernels::Trans;

template <typename T>
Tape<T>& tape_of(Var<T> a) {
  return *a.tape;
}

// Handle of the node the next record() call will create.
template <typename T>
Var<T> next_var(Tape<T>& t) {
  return {&t, t.size()};
}

template <typename T>
void require_same_shape(const char* op, Var<T> a, Var<T> b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <typename T>
void require_rank2(const char* op, Var<T> a) {
  if (a.value().rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
  }
}

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  auto d = dst.data();
  auto s = src.data();
  const std::size_t n = d.size();
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < n; ++i) d[i] += s[i];
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.dim(1) != bv.dim(0)) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(av.shape()) + " x " +
                         shape_str(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor<T> out({m, n});
  kernels::gemm<T>(Trans::No, Trans::No, m, n, k, av.data(), bv.data(), out.data(), false);
  auto& t = tape_of(a);
  auto y = next_var(t);
  return t.record(std::move(out), {a, b}, [a, b, y, m, n, k](Tape<T>& t) {
    const auto& gy = t.grad(y);
    if (t.needs_grad(a))
      kernels::gemm<T>(Trans::No, Trans::Yes, m, k, n, gy.data(), b.value().data(), t.grad(a).data(), true);
    if (t.needs_grad(b))
      kernels::gemm<T>(Trans::Yes, Trans::No, k, n, m, a.value().data(), gy.data(), t.grad(b).data(), true);
  });
}

template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  require_rank2("matmul_nt", a);
  require_rank2("matmul_nt", b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.dim(1) != bv.dim(1)) {
    throw DimensionError("matmul_nt: inner dimensions differ, " + shape_str(av.shape()) + " x " +
                         shape_str(bv.shape()) + "^T");
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(0);
  Tensor<T> out({m, n});
  kernels::gemm<T>(Trans::No, Trans::Yes, m, n, k, av.data(), bv.data(), out.data(), false);
  auto& t = tape_of(a);
  auto y = next_var(t);
  return t.record(std::move(out), {a, b}, [a, b, y, m, n, k](Tape<T>& t) {
    const auto& gy = t.grad(y);
    if (t.needs_grad(a))
      kernels::gemm<T>(Trans::No, Trans::No, m, k, n, gy.data(), b.value().data(), t.grad(a).data(), true);
    if (t.needs_grad(b))
      kernels::gemm<T>(Trans::Yes, Trans::No, n, k, m, gy.data(), a.value().data(), t.grad(b).data(), true);
  });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> bias) {
  require_rank2("linear", w);
  const auto& xv = x.value();
  const auto& wv = w.value();
  const std::size_t rows = xv.rows(), in = xv.cols(), outw = wv.dim(1);
  if (wv.dim(0) != in || bias.value().size() != outw) {
    throw DimensionError("linear: input " + shape_str(xv.shape()) + " weight " + shape_str(wv.shape()) +
                         " bias " + shape_str(bias.shape()));
  }
  Tensor<T> out({rows, outw});
  const auto& bv = bias.value();
  for (std::size_t r = 0; r < rows; ++r) std::copy(bv.vec().begin(), bv.vec().end(), out.row(r).begin());
  kernels::gemm<T>(Trans::No, Trans::No, rows, outw, in, xv.data(), wv.data(), out.data(), true);
  auto& t = tape_of(x);
  auto y = next_var(t);
  return t.record(std::move(out), {x, w, bias}, [x, w, bias, y, rows, in, outw](Tape<T>& t) {
    const auto& gy = t.grad(y);
    if (t.needs_grad(x))
      kernels::gemm<T>(Trans::No, Trans::Yes, rows, in, outw, gy.data(), w.value().data(), t.grad(x).data(), true);
    if (t.needs_grad(w))
      kernels::gemm<T>(Trans::Yes, Trans::No, in, outw, rows, x.value().data(), gy.data(), t.grad(w).data(), true);
    if (t.needs_grad(bias)) kernels::column_sums<T>(rows, outw, gy.data(), t.grad(bias).data());
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape("add", a, b);
  Tensor<T> out(a.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t n = out.size();
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + bv[i];
  auto& t = tape_of(a);
  auto y = next_var(t);
  return t.record(std::move(out), {a, b}, [a, b, y](Tape<T>& t) {
    const auto& gy = t.grad(y);
    if (t.needs_grad(a)) accumulate(t.grad(a), gy);
    if (t.needs_grad(b)) accumulate(t.grad(b), gy);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape("sub", a, b);
  Tensor<T> out(a.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  auto& t = tape_of(a);
  auto y = next_var(t);
  return t.record(std::move(out), {a, b}, [a, b, y](Tape<T>& t) {
    const auto& gy = t.grad(y);
    if (t.needs_grad(a)) accumulate(t.grad(a), gy);
    if (t.needs_grad(b)) {
      auto& gb = t.grad(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= gy[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape("mul", a, b);
  Tensor<T> out(a.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  auto& t = tape_of(a);
  auto y = next_var(t);
  return t.record(std::move(out), {a, b}, [a, b, y](Tape<T>& t) {
    const auto& gy = t.grad(y);
    if (t.needs_grad(a)) {
      auto& ga = t.grad(a);
      const auto& bv = b.value();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * bv[i];
    }
    if (t.needs_grad(b)) {
      auto& gb = t.grad(b);
      const auto& av = a.value();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  Tensor<T> out(a.value());
  for (auto& v : out.vec()) v *= factor;
  auto& t = tape_of(a);
  auto y = next_var(t);
  return t.record(std::move(out), {a}, [a, y, factor](Tape<T>& t) {
    const auto& gy = t.grad(y);
    auto& ga = t.grad(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * factor;
  });
}

template <typename T>
Var<T> add_scalar(Var<T> a, T offset) {
  Tensor<T> out(a.value());
  for (auto& v : out.vec()) v += offset;
  auto& t = tape_of(a);
  auto y = next_var(t);
  return t.record(std::move(out), {a}, [a, y](Tape<T>& t) { accumulate(t.grad(a), t.grad(y)); });
}

template <typename T>
Var<T> gelu(Var<T> x) {
  Tensor<T> out(x.shape());
  kernels::gelu<T>(x.value().data(), out.data());
  auto& t = tape_of(x);
  auto y = next_var(t);
  return t.record(std::move(out), {x}, [x, y](Tape<T>& t) {
    kernels::gelu_backward<T>(x.value().data(), t.grad(y).data(), t.grad(x).data());
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  Tensor<T> out(x.value());
  for (auto& v : out.vec()) v = std::max(v, T{0});
  auto& t = tape_of(x);
  auto y = next_var(t);
  return t.record(std::move(out), {x}, [x, y](Tape<T>& t) {
    const auto& gy = t.grad(y);
    const auto& xv = x.value();
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (xv[i] > T{0}) gx[i] += gy[i];
  });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps) {
  const auto& xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (cols < 2) throw DimensionError("layer_norm: last axis must have at least 2 entries, got " + shape_str(xv.shape()));
  if (gain.value().size() != cols || bias.value().size() != cols) {
    throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape()) + " do not match " + shape_str(xv.shape()));
  }
  Tensor<T> out(xv.shape());
  std::vector<T> mean(rows), rstd(rows);
  kernels::layer_norm_rows<T>(rows, cols, xv.data(), gain.value().data(), bias.value().data(), eps, out.data(),
                              mean, rstd);
  auto& t = tape_of(x);
  auto y = next_var(t);
  return t.record(std::move(out), {x, gain, bias},
                  [x, gain, bias, y, rows, cols, mean = std::move(mean), rstd = std::move(rstd)](Tape<T>& t) {
                    std::span<T> dx, dg, db;
                    if (t.needs_grad(x)) dx = t.grad(x).data();
                    if (t.needs_grad(gain)) dg = t.grad(gain).data();
                    if (t.needs_grad(bias)) db = t.grad(bias).data();
                    kernels::layer_norm_rows_backward<T>(rows, cols, x.value().data(), gain.value().data(), mean,
                                                         rstd, t.grad(y).data(), dx, dg, db);
                  });
}

template <typename T>
Var<T> softmax(Var<T> x, std::size_t axis) {
  const auto& xv = x.value();
  if (axis >= xv.rank()) throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(xv.shape()));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= xv.dim(i);
  for (std::size_t i = axis + 1; i < xv.rank(); ++i) inner *= xv.dim(i);
  const std::size_t len = xv.dim(axis);
  Tensor<T> out(xv.shape());
  if (inner == 1) {
    kernels::softmax_rows<T>(outer, len, xv.data(), out.data());
  } else {
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        T mx = xv[base];
        for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
        T s = 0;
        for (std::size_t j = 0; j < len; ++j) {
          out[base + j * inner] = std::exp(xv[base + j * inner] - mx);
          s += out[base + j * inner];
        }
        for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= s;
      }
    }
  }
  auto& t = tape_of(x);
  auto y = next_var(t);
  return t.record(std::move(out), {x}, [x, y, outer, inner, len](Tape<T>& t) {
    const auto& yv = t.value(y);
    const auto& gy = t.grad(y);
    auto& gx = t.grad(x);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        T dot = 0;
        for (std::size_t j = 0; j < len; ++j) dot += gy[base + j * inner] * yv[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t idx = base + j * inner;
          gx[idx] += yv[idx] * (gy[idx] - dot);
        }
      }
    }
  });
}

template <typename T>
Var<T> dropout(Var<T> x, T p) {
  auto& t = tape_of(x);
  if (!t.training() || p <= T{0}) return x;
  if (p >= T{1}) throw ContractViolation("dropout probability must be below 1");
  std::bernoulli_distribution keep(1.0 - static_cast<double>(p));
  const T inv = T{1} / (T{1} - p);
  std::vector<T> factor(x.value().size());
  for (auto& f : factor) f = keep(t.rng()) ? inv : T{0};
  Tensor<T> out(x.value());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor[i];
  auto y = next_var(t);
  return t.record(std::move(out), {x}, [x, y, factor = std::move(factor)](Tape<T>& t) {
    const auto& gy = t.grad(y);
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * factor[i];
  });
}

template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const std::size_t> ids) {
  const auto& tv = table.value();
  const std::size_t width = tv.cols();
  if (ids.empty()) throw DimensionError("gather_rows: empty index list");
  for (auto id : ids) {
    if (id >= tv.rows()) {
      throw IndexError("gather_rows: row " + std::to_string(id) + " out of range for " + shape_str(tv.shape()));
    }
  }
  Tensor<T> out({ids.size(), width});
  for (std::size_t i = 0; i < ids.size(); ++i) std::copy_n(tv.row(ids[i]).begin(), width, out.row(i).begin());
  auto& t = tape_of(table);
  auto y = next_var(t);
  return t.record(std::move(out), {table},
                  [table, y, width, idx = std::vector<std::size_t>(ids.begin(), ids.end())](Tape<T>& t) {
                    const auto& gy = t.grad(y);
                    auto& gt = t.grad(table);
                    for (std::size_t i = 0; i < idx.size(); ++i) {
                      auto dst = gt.row(idx[i]);
                      auto src = gy.row(i);
                      for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
                    }
                  });
}

template <typename T>
Var<T> prepend_rows(Var<T> token, Var<T> body, std::size_t batch) {
  const auto& tv = token.value();
  const auto& bv = body.value();
  const std::size_t width = bv.cols();
  if (tv.size() != width) {
    throw DimensionError("prepend_rows: token " + shape_str(tv.shape()) + " vs body " + shape_str(bv.shape()));
  }
  if (batch == 0 || bv.rows() % batch != 0) {
    throw DimensionError("prepend_rows: " + std::to_string(bv.rows()) + " rows do not split into " +
                         std::to_string(batch) + " segments");
  }
  const std::size_t len = bv.rows() / batch;
  Tensor<T> out({batch * (len + 1), width});
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy_n(tv.data().begin(), width, out.row(b * (len + 1)).begin());
    for (std::size_t i = 0; i < len; ++i)
      std::copy_n(bv.row(b * len + i).begin(), width, out.row(b * (len + 1) + 1 + i).begin());
  }
  auto& t = tape_of(body);
  auto y = next_var(t);
  return t.record(std::move(out), {token, body}, [token, body, y, batch, len, width](Tape<T>& t) {
    const auto& gy = t.grad(y);
    if (t.needs_grad(token)) {
      auto& gt = t.grad(token);
      for (std::size_t b = 0; b < batch; ++b) {
        auto src = gy.row(b * (len + 1));
        for (std::size_t j = 0; j < width; ++j) gt[j] += src[j];
      }
    }
    if (t.needs_grad(body)) {
      auto& gb = t.grad(body);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < len; ++i) {
          auto src = gy.row(b * (len + 1) + 1 + i);
          auto dst = gb.row(b * len + i);
          for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
        }
    }
  });
}

template <typename T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, std::span<const std::uint8_t> key_valid, std::size_t batch,
                 std::size_t heads, T dropout_p) {
  require_same_shape("attention", q, k);
  require_same_shape("attention", q, v);
  const auto& qv = q.value();
  const std::size_t rows = qv.rows(), hidden = qv.cols();
  if (heads == 0 || hidden % heads != 0) {
    throw DimensionError("attention: hidden width " + std::to_string(hidden) + " not divisible by " +
                         std::to_string(heads) + " heads");
  }
  if (batch == 0 || rows % batch != 0 || key_valid.size() != rows) {
    throw DimensionError("attention: " + std::to_string(rows) + " rows, " + std::to_string(key_valid.size()) +
                         " mask entries, batch " + std::to_string(batch));
  }
  const std::size_t len = rows / batch;
  const std::size_t hd = hidden / heads;
  for (std::size_t b = 0; b < batch; ++b) {
    if (std::none_of(key_valid.begin() + b * len, key_valid.begin() + (b + 1) * len, [](auto m) { return m != 0; })) {
      throw ContractViolation("attention: sequence " + std::to_string(b) + " has no valid position");
    }
  }
  auto& t = tape_of(q);
  const T scale = T{1} / std::sqrt(static_cast<T>(hd));
  const std::size_t block = len * len;
  std::vector<T> probs(batch * heads * block);
  std::vector<T> keep;
  const bool drop = t.training() && dropout_p > T{0};
  if (drop) {
    std::bernoulli_distribution keep_dist(1.0 - static_cast<double>(dropout_p));
    const T inv = T{1} / (T{1} - dropout_p);
    keep.resize(probs.size());
    for (auto& f : keep) f = keep_dist(t.rng()) ? inv : T{0};
  }
  std::vector<std::uint8_t> valid(key_valid.begin(), key_valid.end());
  Tensor<T> out({rows, hidden});
  const auto& kv = k.value();
  const auto& vv = v.value();
  const std::size_t pairs = batch * heads;
#pragma omp parallel for schedule(static)
  for (std::size_t bh = 0; bh < pairs; ++bh) {
    const std::size_t b = bh / heads, h = bh % heads;
    T* P = probs.data() + bh * block;
    const std::size_t r0 = b * len, c0 = h * hd;
    for (std::size_t i = 0; i < len; ++i) {
      const T* qi = qv.data().data() + (r0 + i) * hidden + c0;
      T* pi = P + i * len;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < len; ++j) {
        const T* kj = kv.data().data() + (r0 + j) * hidden + c0;
        T s = 0;
#pragma omp simd reduction(+ : s)
        for (std::size_t d = 0; d < hd; ++d) s += qi[d] * kj[d];
        s = s * scale + (valid[r0 + j] ? T{0} : T{-1e9});
        pi[j] = s;
        mx = std::max(mx, s);
      }
      T sum = 0;
      for (std::size_t j = 0; j < len; ++j) {
        pi[j] = kernels::exp_nonpositive(pi[j] - mx);
        sum += pi[j];
      }
      for (std::size_t j = 0; j < len; ++j) pi[j] /= sum;
      T* oi = out.data().data() + (r0 + i) * hidden + c0;
      for (std::size_t j = 0; j < len; ++j) {
        const T w = drop ? pi[j] * keep[bh * block + i * len + j] : pi[j];
        if (w == T{0}) continue;
        const T* vj = vv.data().data() + (r0 + j) * hidden + c0;
#pragma omp simd
        for (std::size_t d = 0; d < hd; ++d) oi[d] += w * vj[d];
      }
    }
  }
  auto y = next_var(t);
  return t.record(
      std::move(out), {q, k, v},
      [q, k, v, y, len, hidden, heads, hd, scale, pairs, drop, probs = std::move(probs),
       keep = std::move(keep)](Tape<T>& t) {
        const auto& gy = t.grad(y);
        const auto& qv = q.value();
        const auto& kv = k.value();
        const auto& vv = v.value();
        T* gq = t.needs_grad(q) ? t.grad(q).data().data() : nullptr;
        T* gk = t.needs_grad(k) ? t.grad(k).data().data() : nullptr;
        T* gv = t.needs_grad(v) ? t.grad(v).data().data() : nullptr;
        const std::size_t block = len * len;
#pragma omp parallel for schedule(static)
        for (std::size_t bh = 0; bh < pairs; ++bh) {
          const std::size_t b = bh / heads, h = bh % heads;
          const T* P = probs.data() + bh * block;
          const T* K = drop ? keep.data() + bh * block : nullptr;
          const std::size_t r0 = b * len, c0 = h * hd;
          std::vector<T> dS(len);
          for (std::size_t i = 0; i < len; ++i) {
            const T* gi = gy.data().data() + (r0 + i) * hidden + c0;
            const T* pi = P + i * len;
            T dot = 0;
            for (std::size_t j = 0; j < len; ++j) {
              const T* vj = vv.data().data() + (r0 + j) * hidden + c0;
              T dp = 0;
#pragma omp simd reduction(+ : dp)
              for (std::size_t d = 0; d < hd; ++d) dp += gi[d] * vj[d];
              const T f = K ? K[i * len + j] : T{1};
              dp *= f;
              dS[j] = dp;
              dot += pi[j] * dp;
              if (gv) {
                const T w = pi[j] * f;
                T* gvj = gv + (r0 + j) * hidden + c0;
#pragma omp simd
                for (std::size_t d = 0; d < hd; ++d) gvj[d] += w * gi[d];
              }
            }
            for (std::size_t j = 0; j < len; ++j) dS[j] = pi[j] * (dS[j] - dot) * scale;
            const T* qi = qv.data().data() + (r0 + i) * hidden + c0;
            for (std::size_t j = 0; j < len; ++j) {
              if (dS[j] == T{0}) continue;
              const T* kj = kv.data().data() + (r0 + j) * hidden + c0;
              if (gq) {
                T* gqi = gq + (r0 + i) * hidden + c0;
#pragma omp simd
                for (std::size_t d = 0; d < hd; ++d) gqi[d] += dS[j] * kj[d];
              }
              if (gk) {
                T* gkj = gk + (r0 + j) * hidden + c0;
#pragma omp simd
                for (std::size_t d = 0; d < hd; ++d) gkj[d] += dS[j] * qi[d];
              }
            }
          }
        }
      });
}

template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t end) {
  require_rank2("slice_cols", x);
  const auto& xv = x.value();
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  if (begin >= end || end > cols) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " +
                         shape_str(xv.shape()));
  }
  const std::size_t width = end - begin;
  Tensor<T> out({rows, width});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < width; ++j) out.at(r, j) = xv.at(r, begin + j);
  auto& t = tape_of(x);
  auto y = next_var(t);
  return t.record(std::move(out), {x}, [x, y, rows, begin, width](Tape<T>& t) {
    const auto& gy = t.grad(y);
    auto& gx = t.grad(x);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < width; ++j) gx.at(r, begin + j) += gy.at(r, j);
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T s = 0;
  for (auto v : x.value().vec()) s += v;
  auto& t = tape_of(x);
  auto y = next_var(t);
  return t.record(Tensor<T>({1}, {s}), {x}, [x, y](Tape<T>& t) {
    const T g = t.grad(y)[0];
    for (auto& v : t.grad(x).vec()) v += g;
  });
}

template <typename T>
Var<T> mean(Var<T> x) {
  return scale(sum(x), T{1} / static_cast<T>(x.value().size()));
}

template <typename T>
Var<T> squared_distance(Var<T> a, Var<T> b) {
  require_same_shape("squared_distance", a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t rows = av.rows(), cols = av.cols();
  Tensor<T> out({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    T s = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      const T d = av.at(r, j) - bv.at(r, j);
      s += d * d;
    }
    out[r] = s;
  }
  auto& t = tape_of(a);
  auto y = next_var(t);
  return t.record(std::move(out), {a, b}, [a, b, y, rows, cols](Tape<T>& t) {
    const auto& gy = t.grad(y);
    const auto& av = a.value();
    const auto& bv = b.value();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < cols; ++j) {
        const T g = T{2} * (av.at(r, j) - bv.at(r, j)) * gy[r];
        if (t.needs_grad(a)) t.grad(a).at(r, j) += g;
        if (t.needs_grad(b)) t.grad(b).at(r, j) -= g;
      }
    }
  });
}

template <typename T>
Var<T> l1_loss(Var<T> pred, Var<T> target, const Tensor<T>& mask) {
  require_same_shape("l1_loss", pred, target);
  if (mask.shape() != pred.shape()) {
    throw DimensionError("l1_loss: mask " + shape_str(mask.shape()) + " vs prediction " + shape_str(pred.shape()));
  }
  const auto& pv = pred.value();
  const auto& tv = target.value();
  T total = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (mask[i] == T{0}) continue;
    total += std::abs(pv[i] - tv[i]);
    ++count;
  }
  const T denom = count ? static_cast<T>(count) : T{1};
  auto& t = tape_of(pred);
  auto y = next_var(t);
  return t.record(Tensor<T>({1}, {total / denom}), {pred, target}, [pred, target, y, mask, denom](Tape<T>& t) {
    const T g = t.grad(y)[0] / denom;
    const auto& pv = pred.value();
    const auto& tv = target.value();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      if (mask[i] == T{0}) continue;
      const T diff = pv[i] - tv[i];
      const T s = diff > T{0} ? T{1} : (diff < T{0} ? T{-1} : T{0});
      if (t.needs_grad(pred)) t.grad(pred)[i] += g * s;
      if (t.needs_grad(target)) t.grad(target)[i] -= g * s;
    }
  });
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> labels, std::span<const T> mask) {
  require_rank2("cross_entropy", logits);
  const auto& lv = logits.value();
  const std::size_t rows = lv.dim(0), classes = lv.dim(1);
  if (labels.size() != rows || mask.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(rows) + " rows but " + std::to_string(labels.size()) +
                         " labels and " + std::to_string(mask.size()) + " mask entries");
  }
  Tensor<T> probs(lv.shape());
  kernels::softmax_rows<T>(rows, classes, lv.data(), probs.data());
  T total = 0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (mask[r] == T{0}) continue;
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes) {
      throw IndexError("cross_entropy: label " + std::to_string(labels[r]) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
    auto row = lv.row(r);
    T mx = row[0];
    for (auto v : row) mx = std::max(mx, v);
    T s = 0;
    for (auto v : row) s += std::exp(v - mx);
    total += -(row[labels[r]] - mx - std::log(s));
    ++count;
  }
  const T denom = count ? static_cast<T>(count) : T{1};
  auto& t = tape_of(logits);
  auto y = next_var(t);
  return t.record(Tensor<T>({1}, {total / denom}), {logits},
                  [logits, y, classes, denom, probs = std::move(probs), lab = std::vector<int>(labels.begin(), labels.end()),
                   msk = std::vector<T>(mask.begin(), mask.end())](Tape<T>& t) {
                    const T g = t.grad(y)[0] / denom;
                    auto& gl = t.grad(logits);
                    for (std::size_t r = 0; r < lab.size(); ++r) {
                      if (msk[r] == T{0}) continue;
                      for (std::size_t c = 0; c < classes; ++c) {
                        const T target = static_cast<int>(c) == lab[r] ? T{1} : T{0};
                        gl.at(r, c) += g * (probs.at(r, c) - target);
                      }
                    }
                  });
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> labels) {
  std::vector<T> mask(labels.size(), T{1});
  return cross_entropy(logits, labels, std::span<const T>(mask));
}

#define SKB_INSTANTIATE_OPS(T)                                                                                 \
  template Var<T> matmul(Var<T>, Var<T>);                                                                      \
  template Var<T> matmul_nt(Var<T>, Var<T>);                                                                   \
  template Var<T> linear(Var<T>, Var<T>, Var<T>);                                                              \
  template Var<T> add(Var<T>, Var<T>);                                                                         \
  template Var<T> sub(Var<T>, Var<T>);                                                                         \
  template Var<T> mul(Var<T>, Var<T>);                                                                         \
  template Var<T> scale(Var<T>, T);                                                                            \
  template Var<T> add_scalar(Var<T>, T);                                                                       \
  template Var<T> gelu(Var<T>);                                                                                \
  template Var<T> relu(Var<T>);                                                                                \
  template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, T);                                                       \
  template Var<T> softmax(Var<T>, std::size_t);                                                                \
  template Var<T> dropout(Var<T>, T);                                                                          \
  template Var<T> gather_rows(Var<T>, std::span<const std::size_t>);                                           \
  template Var<T> prepend_rows(Var<T>, Var<T>, std::size_t);                                                   \
  template Var<T> attention(Var<T>, Var<T>, Var<T>, std::span<const std::uint8_t>, std::size_t, std::size_t, T); \
  template Var<T> slice_cols(Var<T>, std::size_t, std::size_t);                                              \
  template Var<T> sum(Var<T>);                                                                                 \
  template Var<T> mean(Var<T>);                                                                                \
  template Var<T> squared_distance(Var<T>, Var<T>);                                                            \
  template Var<T> l1_loss(Var<T>, Var<T>, const Tensor<T>&);                                                   \
  template Var<T> cross_entropy(Var<T>, std::span<const int>, std::span<const T>);                             \
  template Var<T> cross_entropy(Var<T>, std::span<const int>);

SKB_INSTANTIATE_OPS(float)
SKB_INSTANTIATE_OPS(double)

}  // namespace skb::ops
