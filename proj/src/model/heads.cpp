#include "skb/model/heads.hpp"

#include <algorithm>
#include <numeric>

#include "skb/core/ops.hpp"

namespace skb::model {

template <typename T>
Var<T> triplet_loss(Var<T> anchor, Var<T> positive, Var<T> negative, T margin) {
  auto d_ap = ops::squared_distance(anchor, positive);
  auto d_an = ops::squared_distance(anchor, negative);
  return ops::mean(ops::relu(ops::add_scalar(ops::sub(d_ap, d_an), margin)));
}

template Var<float> triplet_loss(Var<float>, Var<float>, Var<float>, float);
template Var<double> triplet_loss(Var<double>, Var<double>, Var<double>, double);

double top_k_accuracy(const Tensor<double>& scores, std::span<const int> labels, std::size_t k) {
  const std::size_t q = scores.rows(), c = scores.cols();
  if (labels.size() != q) throw DimensionError("top_k_accuracy: label count differs from score rows");
  if (k == 0 || k > c) throw ContractViolation("top_k_accuracy: k must lie in [1, " + std::to_string(c) + "]");
  if (q == 0) throw ContractViolation("top_k_accuracy: no queries");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < q; ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    if (labels[i] < 0 || y >= c) throw IndexError("top_k_accuracy: label out of range");
    const auto row = scores.row(i);
    std::size_t above = 0;
    for (std::size_t j = 0; j < c; ++j) {
      if (row[j] > row[y] || (row[j] == row[y] && j < y)) ++above;
    }
    if (above < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(q);
}

namespace {

std::vector<std::size_t> rank_gallery(std::span<const double> query, const Tensor<double>& gallery,
                                      std::ptrdiff_t self_index) {
  const std::size_t g = gallery.rows(), d = gallery.cols();
  if (query.size() != d) throw DimensionError("retrieval: query width differs from gallery width");
  std::vector<double> dist(g, 0.0);
  for (std::size_t j = 0; j < g; ++j) {
    const auto row = gallery.row(j);
    double s = 0.0;
    for (std::size_t t = 0; t < d; ++t) s += (query[t] - row[t]) * (query[t] - row[t]);
    dist[j] = s;
  }
  std::vector<std::size_t> order;
  order.reserve(g);
  for (std::size_t j = 0; j < g; ++j) {
    if (static_cast<std::ptrdiff_t>(j) != self_index) order.push_back(j);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  return order;
}

std::ptrdiff_t self_of(std::span<const std::ptrdiff_t> self_index, std::size_t q) {
  return self_index.empty() ? -1 : self_index[q];
}

// Validates everything up front so the parallel loops never throw. `min_rank`
// is the number of gallery entries every query needs after self exclusion.
void check_retrieval_args(const Tensor<double>& queries, std::span<const int> query_labels,
                          const Tensor<double>& gallery, std::span<const int> gallery_labels,
                          std::span<const std::ptrdiff_t> self_index, std::size_t min_rank) {
  if (query_labels.size() != queries.rows()) throw DimensionError("retrieval: query label count mismatch");
  if (gallery_labels.size() != gallery.rows()) throw DimensionError("retrieval: gallery label count mismatch");
  if (!self_index.empty() && self_index.size() != queries.rows())
    throw DimensionError("retrieval: self index count mismatch");
  if (queries.rows() == 0) throw ContractViolation("retrieval: no queries");
  if (queries.cols() != gallery.cols()) throw DimensionError("retrieval: query width differs from gallery width");
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    const auto self = self_of(self_index, q);
    const std::size_t available =
        gallery.rows() - (self >= 0 && static_cast<std::size_t>(self) < gallery.rows() ? 1 : 0);
    if (available < min_rank)
      throw ContractViolation("retrieval: gallery holds " + std::to_string(available) + " candidates, need " +
                              std::to_string(min_rank));
  }
}

}  // namespace

double average_precision(std::span<const double> query, int query_label, const Tensor<double>& gallery,
                         std::span<const int> gallery_labels, std::ptrdiff_t self_index) {
  if (gallery_labels.size() != gallery.rows()) throw DimensionError("retrieval: gallery label count mismatch");
  const auto order = rank_gallery(query, gallery, self_index);
  if (order.empty()) throw ContractViolation("average_precision: empty gallery");
  double sum = 0.0;
  std::size_t relevant = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (gallery_labels[order[r]] != query_label) continue;
    ++relevant;
    sum += static_cast<double>(relevant) / static_cast<double>(r + 1);
  }
  return relevant == 0 ? 0.0 : sum / static_cast<double>(relevant);
}

double mean_average_precision(const Tensor<double>& queries, std::span<const int> query_labels,
                              const Tensor<double>& gallery, std::span<const int> gallery_labels,
                              std::span<const std::ptrdiff_t> self_index) {
  check_retrieval_args(queries, query_labels, gallery, gallery_labels, self_index, 1);
  const auto q = static_cast<std::ptrdiff_t>(queries.rows());
  std::vector<double> ap(queries.rows());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < q; ++i) {
    const auto u = static_cast<std::size_t>(i);
    ap[u] = average_precision(queries.row(u), query_labels[u], gallery, gallery_labels, self_of(self_index, u));
  }
  return std::accumulate(ap.begin(), ap.end(), 0.0) / static_cast<double>(ap.size());
}

double retrieval_top_k(const Tensor<double>& queries, std::span<const int> query_labels, const Tensor<double>& gallery,
                       std::span<const int> gallery_labels, std::size_t k,
                       std::span<const std::ptrdiff_t> self_index) {
  if (k == 0) throw ContractViolation("retrieval_top_k: k must be positive");
  check_retrieval_args(queries, query_labels, gallery, gallery_labels, self_index, k);
  const auto q = static_cast<std::ptrdiff_t>(queries.rows());
  std::vector<std::uint8_t> hit(queries.rows(), 0);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < q; ++i) {
    const auto u = static_cast<std::size_t>(i);
    const auto order = rank_gallery(queries.row(u), gallery, self_of(self_index, u));
    for (std::size_t r = 0; r < k; ++r) {
      if (gallery_labels[order[r]] == query_labels[u]) hit[u] = 1;
    }
  }
  return static_cast<double>(std::accumulate(hit.begin(), hit.end(), std::size_t{0})) / static_cast<double>(q);
}

}  // namespace skb::model
