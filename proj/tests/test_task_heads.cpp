#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "skb/data/synthetic.hpp"
#include "skb/model/heads.hpp"
#include "skb/model/sketch_bert.hpp"

using namespace skb;
using namespace skb::model;
using oracle::Mat;

namespace {

Tensor<double> tensor(const Mat& m) { return oracle::to_tensor<double>(m); }

std::vector<int> labels_for(std::size_t n, int classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> c(0, classes - 1);
  std::vector<int> out(n);
  for (auto& v : out) v = c(rng);
  return out;
}

// Random orthogonal matrix from Gram-Schmidt on a Gaussian matrix.
Mat random_rotation(std::size_t d, std::mt19937_64& rng) {
  Mat q = oracle::random_mat(d, d, rng);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += q[i][k] * q[j][k];
      for (std::size_t k = 0; k < d; ++k) q[i][k] -= dot * q[j][k];
    }
    double n = 0.0;
    for (double v : q[i]) n += v * v;
    for (double& v : q[i]) v /= std::sqrt(n);
  }
  return q;
}

ModelConfig tiny(bool cls, bool ret) {
  ModelConfig cfg;
  cfg.encoder = {2, 2, 16, 0.0};
  cfg.embedding = {8, 32, 8, {16}};
  cfg.num_classes = 4;
  cfg.classifier_head = cls;
  cfg.retrieval_head = ret;
  cfg.retrieval_dim = 6;
  return cfg;
}

std::vector<data::PaddedSketch> sketches(int classes, int per_class, std::vector<int>* labels = nullptr) {
  data::IngestOptions ing;
  ing.max_len = 32;
  const auto cache = data::synthesize_cache(classes, per_class, 5, ing);
  std::vector<data::PaddedSketch> out;
  for (const auto& s : cache.sketches) {
    out.push_back(data::truncate_pad(s, 32, 8));
    if (labels) labels->push_back(*s.label);
  }
  return out;
}

}  // namespace

TEST_CASE("triplet loss examples, oracle and translation invariance") {
  Tape<double> t;
  Mat a{{0, 0, 0}}, n{{1, 0, 0}};
  CHECK(triplet_loss(t.constant(tensor(a)), t.constant(tensor(a)), t.constant(tensor(n)), 0.2).value().item() == 0.0);
  Mat p{{0.3, 0.4, 0}};
  CHECK(triplet_loss(t.constant(tensor(a)), t.constant(tensor(p)), t.constant(tensor(a)), 0.2).value().item() ==
        doctest::Approx(0.25 + 0.2));

  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    auto ra = oracle::random_mat(3, 5, rng), rp = oracle::random_mat(3, 5, rng), rn = oracle::random_mat(3, 5, rng);
    const double got = triplet_loss(t.constant(tensor(ra)), t.constant(tensor(rp)), t.constant(tensor(rn)), 0.2).value().item();
    CHECK(oracle::rel_error(got, oracle::triplet(ra, rp, rn, 0.2), 1e-12) < 1e-14);
    const auto shift = oracle::random_mat(1, 5, rng)[0];
    for (auto* m : {&ra, &rp, &rn})
      for (auto& row : *m)
        for (std::size_t j = 0; j < 5; ++j) row[j] += 10 * shift[j];
    const double moved = triplet_loss(t.constant(tensor(ra)), t.constant(tensor(rp)), t.constant(tensor(rn)), 0.2).value().item();
    CHECK(std::abs(moved - got) < 1e-6);
  }
  CHECK(kDefaultTripletMargin == 0.2);
}

TEST_CASE("top-k accuracy") {
  Mat perfect{{5, 1, 0}, {0, 2, 1}, {0, 0, 3}};
  const std::vector<int> diag{0, 1, 2};
  for (std::size_t k = 1; k <= 3; ++k) CHECK(top_k_accuracy(tensor(perfect), diag, k) == 1.0);

  std::mt19937_64 rng(2);
  auto scores = oracle::random_mat(10, 6, rng);
  scores[3][1] = scores[3][4];  // a tie, broken towards the lower index
  const auto labels = labels_for(10, 6, rng);
  double prev = 0.0;
  for (std::size_t k = 1; k <= 6; ++k) {
    const double got = top_k_accuracy(tensor(scores), labels, k);
    CHECK(got == oracle::top_k(scores, labels, k));
    CHECK(got >= prev);
    prev = got;
  }
  CHECK(prev == 1.0);
  CHECK_THROWS_AS(top_k_accuracy(tensor(scores), labels, 0), ContractViolation);
  CHECK_THROWS_AS(top_k_accuracy(tensor(scores), labels, 7), ContractViolation);
}

TEST_CASE("average precision examples") {
  Mat gallery{{1}, {2}, {3}, {4}};
  CHECK(average_precision(std::vector<double>{0.0}, 1, tensor(gallery), std::vector<int>{0, 1, 0, 0}) == 0.5);
  CHECK(average_precision(std::vector<double>{0.0}, 1, tensor(gallery), std::vector<int>{1, 1, 0, 0}) == 1.0);
  CHECK(average_precision(std::vector<double>{0.0}, 7, tensor(gallery), std::vector<int>{1, 1, 0, 0}) == 0.0);
  Mat q{{0}, {10}};
  CHECK(mean_average_precision(tensor(q), std::vector<int>{1, 0}, tensor(gallery), std::vector<int>{1, 1, 0, 0}) ==
        doctest::Approx(0.5 * (1.0 + (1.0 / 1 + 2.0 / 2) / 2)));
}

TEST_CASE("mAP agrees with the brute-force oracle and is rotation invariant") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t dim = 4;
    auto queries = oracle::random_mat(5, dim, rng), gallery = oracle::random_mat(20, dim, rng);
    const auto ql = labels_for(5, 3, rng), gl = labels_for(20, 3, rng);
    double want = 0.0;
    for (std::size_t i = 0; i < 5; ++i) want += oracle::average_precision(queries[i], ql[i], gallery, gl);
    want /= 5;
    const double got = mean_average_precision(tensor(queries), ql, tensor(gallery), gl);
    CHECK(std::abs(got - want) < 1e-10);

    const auto rot = random_rotation(dim, rng);
    auto rq = oracle::matmul(queries, rot), rg = oracle::matmul(gallery, rot);
    CHECK(std::abs(mean_average_precision(tensor(rq), ql, tensor(rg), gl) - got) < 1e-6);
  }
}

TEST_CASE("self-excluded retrieval metrics") {
  std::mt19937_64 rng(4);
  auto pts = oracle::random_mat(30, 3, rng);
  const auto labels = labels_for(30, 4, rng);
  std::vector<std::ptrdiff_t> self(30);
  for (std::size_t i = 0; i < 30; ++i) self[i] = static_cast<std::ptrdiff_t>(i);
  double want = 0.0, hits = 0.0;
  for (std::size_t i = 0; i < 30; ++i) {
    want += oracle::average_precision(pts[i], labels[i], pts, labels, static_cast<long>(i));
    std::size_t best = i == 0 ? 1 : 0;
    for (std::size_t g = 0; g < 30; ++g)
      if (g != i && oracle::sq_dist(pts[i], pts[g]) < oracle::sq_dist(pts[i], pts[best])) best = g;
    hits += labels[best] == labels[i];
  }
  CHECK(std::abs(mean_average_precision(tensor(pts), labels, tensor(pts), labels, self) - want / 30) < 1e-10);
  CHECK(retrieval_top_k(tensor(pts), labels, tensor(pts), labels, 1, self) == hits / 30);
  CHECK(retrieval_top_k(tensor(pts), labels, tensor(pts), labels, 29, self) <= 1.0);
  const std::vector<std::ptrdiff_t> short_self(3, 0);
  CHECK_THROWS(mean_average_precision(tensor(pts), labels, tensor(pts), labels, short_self));
}

TEST_CASE("classifier head") {
  SketchBert<double> m(tiny(true, false), 1);
  std::vector<int> labels;
  auto sk = sketches(2, 2, &labels);
  sk.push_back(sk[0]);
  Tape<double> t;
  const auto logits = m.class_logits(t, make_batch<double>(sk)).value();
  CHECK(logits.shape() == Shape{5, 4});
  for (std::size_t j = 0; j < 4; ++j) CHECK(logits.at(0, j) == logits.at(4, j));

  Tensor<double> scores(logits.shape(), logits.vec());
  Tensor<double> shifted = scores;
  for (auto& v : shifted.vec()) v += 123.0;
  std::vector<int> argmax(5);
  for (std::size_t r = 0; r < 5; ++r) {
    auto row = scores.row(r);
    argmax[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  CHECK(top_k_accuracy(scores, argmax, 1) == 1.0);
  CHECK(top_k_accuracy(shifted, argmax, 1) == 1.0);
  CHECK_FALSE(m.has_retrieval());
  CHECK_THROWS_AS(m.retrieval(t, make_batch<double>(sk)), ConfigError);
}

TEST_CASE("retrieval objective is the sum of the triplet and cross-entropy oracles") {
  SketchBert<double> m(tiny(false, true), 2);
  std::vector<int> labels;
  const auto sk = sketches(3, 2, &labels);  // labels 0,1,2,0,1,2
  TripletBatch b;
  b.anchor = {sk[0], sk[1]};
  b.positive = {sk[3], sk[4]};
  b.negative = {sk[2], sk[0]};
  b.anchor_labels = {0, 1};
  b.negative_labels = {2, 0};
  Tape<double> t;
  const auto loss = retrieval_objective(t, m, b, 0.2);

  std::vector<data::PaddedSketch> all{sk[0], sk[1], sk[3], sk[4], sk[2], sk[0]};
  const auto out = m.retrieval(t, make_batch<double>(all));
  const auto emb = oracle::to_mat(out.embedding.value());
  const auto logits = oracle::to_mat(out.logits.value());
  const double trip = oracle::triplet({emb[0], emb[1]}, {emb[2], emb[3]}, {emb[4], emb[5]}, 0.2);
  const double ce = oracle::cross_entropy(logits, {0, 1, 0, 1, 2, 0}, std::vector<double>(6, 1.0));
  CHECK(oracle::rel_error(loss.triplet.value().item(), trip, 1e-12) < 1e-12);
  CHECK(oracle::rel_error(loss.classification.value().item(), ce, 1e-12) < 1e-12);
  CHECK(oracle::rel_error(loss.total.value().item(), trip + ce, 1e-12) < 1e-12);

  TripletBatch bad = b;
  bad.negative_labels = {0, 0};
  CHECK_THROWS_AS(retrieval_objective(t, m, bad, 0.2), ContractViolation);
}

TEST_CASE("retrieval loss terms vanish at the optimum") {
  Tape<double> t;
  Mat a{{0, 0}, {5, 5}}, p{{0.1, 0}, {5, 5.1}}, n{{5, 5}, {0, 0}};
  const auto trip = triplet_loss(t.constant(tensor(a)), t.constant(tensor(p)), t.constant(tensor(n)), 0.2);
  Mat logits{{40, 0, 0}, {0, 40, 0}, {40, 0, 0}, {0, 40, 0}, {0, 40, 0}, {40, 0, 0}};
  const auto ce = ops::cross_entropy(t.constant(tensor(logits)), std::vector<int>{0, 1, 0, 1, 1, 0});
  CHECK(trip.value().item() == 0.0);
  CHECK(ops::add(trip, ce).value().item() < 1e-15);
}
