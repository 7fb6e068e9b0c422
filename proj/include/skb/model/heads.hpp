#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "skb/core/tape.hpp"
#include "skb/model/layers.hpp"

namespace skb::model {

inline constexpr double kDefaultTripletMargin = 0.2;

// Softmax classifier over the [CLS] row: "cls.{w,b}" [H x C].
template <typename T>
class ClassifierHead {
 public:
  ClassifierHead(ParameterStore<T>& store, std::size_t hidden, std::size_t num_classes, std::mt19937_64& rng)
      : proj_(store, "cls", hidden, num_classes, rng) {}

  Var<T> logits(Tape<T>& tape, Var<T> features) const { return proj_(tape, features); }
  std::size_t num_classes() const { return proj_.out(); }

 private:
  Linear<T> proj_;
};

// [RET] row -> 256-d embedding ("ret.proj"), plus the auxiliary classifier on
// that embedding ("ret.cls").
template <typename T>
class RetrievalHead {
 public:
  RetrievalHead(ParameterStore<T>& store, std::size_t hidden, std::size_t dim, std::size_t num_classes,
                std::mt19937_64& rng)
      : proj_(store, "ret.proj", hidden, dim, rng), cls_(store, "ret.cls", dim, num_classes, rng) {}

  Var<T> embed(Tape<T>& tape, Var<T> features) const { return proj_(tape, features); }
  Var<T> logits(Tape<T>& tape, Var<T> embedding) const { return cls_(tape, embedding); }
  std::size_t dim() const { return proj_.out(); }
  std::size_t num_classes() const { return cls_.out(); }

 private:
  Linear<T> proj_;
  Linear<T> cls_;
};

// mean over rows of max(0, |a-p|^2 - |a-n|^2 + margin)
template <typename T>
Var<T> triplet_loss(Var<T> anchor, Var<T> positive, Var<T> negative, T margin);

// scores [Q x C]. A query counts as a hit when fewer than k classes outrank its
// true label; a class outranks another with a higher score, or an equal score
// and a lower index.
double top_k_accuracy(const Tensor<double>& scores, std::span<const int> labels, std::size_t k);

// Ranks the gallery by Euclidean distance to each query (ties: lower gallery
// index). `self_index[q]`, when given and non-negative, names the gallery entry
// that is the query itself and is left out of its ranking. A query without any
// relevant gallery item scores AP 0.
double average_precision(std::span<const double> query, int query_label, const Tensor<double>& gallery,
                         std::span<const int> gallery_labels, std::ptrdiff_t self_index = -1);
double mean_average_precision(const Tensor<double>& queries, std::span<const int> query_labels,
                              const Tensor<double>& gallery, std::span<const int> gallery_labels,
                              std::span<const std::ptrdiff_t> self_index = {});

// Nearest-neighbour retrieval accuracy: fraction of queries with a same-label
// item among their k closest gallery entries (self excluded as above).
double retrieval_top_k(const Tensor<double>& queries, std::span<const int> query_labels, const Tensor<double>& gallery,
                       std::span<const int> gallery_labels, std::size_t k,
                       std::span<const std::ptrdiff_t> self_index = {});

}  // namespace skb::model
