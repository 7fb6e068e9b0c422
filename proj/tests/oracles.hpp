#pragma once

// Independent scalar-loop oracles used by the unit tests and the acceptance
// binary. Nothing here calls into the library's kernels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "skb/core/parameter.hpp"
#include "skb/core/tape.hpp"
#include "skb/data/sketch.hpp"

namespace oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j)
      for (std::size_t p = 0; p < b.size(); ++p) c[i][j] += a[i][p] * b[p][j];
  return c;
}

inline std::vector<double> softmax(const std::vector<double>& x) {
  std::vector<double> e(x.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (e[i] = std::exp(x[i]));
  for (auto& v : e) v /= s;
  return e;
}

inline std::vector<double> log_softmax(const std::vector<double>& x) {
  double m = x[0];
  for (double v : x) m = std::max(m, v);
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - m - std::log(s);
  return out;
}

inline std::vector<double> layer_norm(const std::vector<double>& x, const std::vector<double>& g,
                                      const std::vector<double>& b, double eps) {
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = g[i] * (x[i] - mean) / std::sqrt(var + eps) + b[i];
  return out;
}

inline double gelu(double x) {
  const double pi = 3.14159265358979323846;
  return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / pi) * (x + 0.044715 * std::pow(x, 3))));
}

inline double l1_loss(const std::vector<double>& pred, const std::vector<double>& target,
                      const std::vector<double>& mask) {
  double s = 0.0, n = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (mask[i] != 1.0) continue;
    s += std::abs(pred[i] - target[i]);
    n += 1.0;
  }
  return n == 0.0 ? 0.0 : s / n;
}

inline double cross_entropy(const Mat& logits, const std::vector<int>& labels, const std::vector<double>& mask) {
  double s = 0.0, n = 0.0;
  for (std::size_t r = 0; r < logits.size(); ++r) {
    if (mask[r] != 1.0) continue;
    s -= log_softmax(logits[r])[static_cast<std::size_t>(labels[r])];
    n += 1.0;
  }
  return n == 0.0 ? 0.0 : s / n;
}

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

inline double triplet(const Mat& a, const Mat& p, const Mat& n, double margin) {
  double s = 0.0;
  for (std::size_t r = 0; r < a.size(); ++r) s += std::max(0.0, sq_dist(a[r], p[r]) - sq_dist(a[r], n[r]) + margin);
  return s / static_cast<double>(a.size());
}

// Sorts every class by (score desc, index asc) and looks for the label among the first k.
inline double top_k(const Mat& scores, const std::vector<int>& labels, std::size_t k) {
  double hits = 0.0;
  for (std::size_t q = 0; q < scores.size(); ++q) {
    std::vector<std::size_t> order(scores[q].size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return scores[q][a] != scores[q][b] ? scores[q][a] > scores[q][b] : a < b;
    });
    for (std::size_t i = 0; i < k; ++i)
      if (static_cast<int>(order[i]) == labels[q]) hits += 1.0;
  }
  return hits / static_cast<double>(scores.size());
}

// Full ranking by (Euclidean distance, index); AP = mean of precision@rank at each relevant hit.
inline double average_precision(const std::vector<double>& q, int label, const Mat& gallery,
                                const std::vector<int>& glabels, long self = -1) {
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t g = 0; g < gallery.size(); ++g) {
    if (static_cast<long>(g) == self) continue;
    ranked.push_back({std::sqrt(sq_dist(q, gallery[g])), g});
  }
  std::sort(ranked.begin(), ranked.end());
  double hits = 0.0, sum = 0.0;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    if (glabels[ranked[r].second] != label) continue;
    hits += 1.0;
    sum += hits / static_cast<double>(r + 1);
  }
  return hits == 0.0 ? 0.0 : sum / hits;
}

// Recursive Ramer-Douglas-Peucker on squared cross products; the first of
// equally distant points splits.
inline void rdp_rec(const std::vector<skb::data::Point2>& s, std::size_t lo, std::size_t hi, double eps,
                    std::vector<bool>& keep) {
  if (hi <= lo + 1) return;
  const double vx = s[hi].x - s[lo].x, vy = s[hi].y - s[lo].y;
  const double len2 = vx * vx + vy * vy;
  std::size_t best = lo;
  double best_d = -1.0;
  for (std::size_t i = lo + 1; i < hi; ++i) {
    const double wx = s[i].x - s[lo].x, wy = s[i].y - s[lo].y;
    const double d = len2 == 0.0 ? std::sqrt(wx * wx + wy * wy) : std::abs(vx * wy - vy * wx) / std::sqrt(len2);
    if (d > best_d) {
      best_d = d;
      best = i;
    }
  }
  if (best_d <= eps) return;
  keep[best] = true;
  rdp_rec(s, lo, best, eps, keep);
  rdp_rec(s, best, hi, eps, keep);
}

inline std::vector<skb::data::Point2> rdp(const std::vector<skb::data::Point2>& s, double eps) {
  if (s.size() < 3) return s;
  std::vector<bool> keep(s.size(), false);
  keep.front() = keep.back() = true;
  rdp_rec(s, 0, s.size() - 1, eps, keep);
  std::vector<skb::data::Point2> out;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (keep[i]) out.push_back(s[i]);
  return out;
}

// Largest-remainder apportionment with rationals: floors, then leftovers to the
// biggest fractional parts, ties to the lower index.
inline std::vector<std::size_t> apportion(std::size_t total, const std::vector<std::size_t>& counts) {
  std::size_t n = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  std::vector<std::size_t> out(counts.size(), 0);
  if (n == 0) return out;
  std::vector<std::pair<std::size_t, std::size_t>> rem;
  std::size_t given = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    out[i] = (total * counts[i]) / n;
    given += out[i];
    rem.push_back({(total * counts[i]) % n, i});
  }
  std::sort(rem.begin(), rem.end(), [](auto a, auto b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  for (std::size_t j = 0; given < total; ++j, ++given) ++out[rem[j].second];
  return out;
}

inline std::size_t round_half_up(double x) { return static_cast<std::size_t>(std::floor(x + 0.5)); }

// Central finite differences over every scalar of every parameter in `store`.
// `loss` builds a scalar on a fresh tape from the store's current values.
struct GradCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
};

// |a - n| / max(|a|, |n|); pairs with both magnitudes under `floor` compare
// absolutely, which keeps central-difference round-off (~1e-10) on gradients
// that are exactly zero from dominating.
inline double rel_error(double a, double n, double floor = 1e-5) {
  const double scale = std::max(std::abs(a), std::abs(n));
  if (scale < floor) return std::abs(a - n) / floor;
  return std::abs(a - n) / scale;
}

inline GradCheck check_gradients(skb::ParameterStore<double>& store,
                                 const std::function<skb::Var<double>(skb::Tape<double>&)>& loss, double h = 1e-5) {
  store.zero_grads();
  {
    skb::Tape<double> tape(true, 7);
    tape.backward(loss(tape));
  }
  GradCheck out;
  for (auto& p : store) {
    auto v = p.value.data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double orig = v[i];
      v[i] = orig + h;
      skb::Tape<double> t1(true, 7);
      const double up = loss(t1).value().item();
      v[i] = orig - h;
      skb::Tape<double> t2(true, 7);
      const double down = loss(t2).value().item();
      v[i] = orig;
      const double numeric = (up - down) / (2 * h);
      out.max_rel = std::max(out.max_rel, rel_error(p.grad[i], numeric));
      ++out.checked;
    }
  }
  return out;
}

inline Mat random_mat(std::size_t r, std::size_t c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  Mat m(r, std::vector<double>(c));
  for (auto& row : m)
    for (auto& v : row) v = d(rng);
  return m;
}

template <typename T>
skb::Tensor<T> to_tensor(const Mat& m) {
  std::vector<T> flat;
  for (const auto& row : m)
    for (double v : row) flat.push_back(static_cast<T>(v));
  return skb::Tensor<T>({m.size(), m[0].size()}, std::move(flat));
}

template <typename T>
Mat to_mat(const skb::Tensor<T>& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = static_cast<double>(t.at(r, c));
  return m;
}

}  // namespace oracle

namespace oracle {

// x [1 x in] through Linear layers given as (w [in x out], b [out]) with GELU between.
inline std::vector<double> mlp(std::vector<double> x,
                               const std::vector<std::pair<const skb::Tensor<double>*, const skb::Tensor<double>*>>& layers) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& w = *layers[l].first;
    const auto& b = *layers[l].second;
    std::vector<double> y(w.dim(1));
    for (std::size_t j = 0; j < y.size(); ++j) {
      y[j] = b[j];
      for (std::size_t i = 0; i < x.size(); ++i) y[j] += x[i] * w.at(i, j);
      if (l + 1 < layers.size()) y[j] = gelu(y[j]);
    }
    x = std::move(y);
  }
  return x;
}

}  // namespace oracle
