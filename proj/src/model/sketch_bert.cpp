#include "skb/model/sketch_bert.hpp"

#include <algorithm>
#include <random>

#include "skb/core/ops.hpp"

namespace skb::model {

template <typename T>
SequenceBatch<T> make_batch(std::span<const data::PaddedSketch> sketches) {
  if (sketches.empty()) throw ContractViolation("make_batch: empty batch");
  SequenceBatch<T> b;
  b.batch = sketches.size();
  for (const auto& s : sketches) {
    if (s.length == 0) throw ContractViolation("make_batch: sketch without points");
    b.len = std::max(b.len, s.length);
  }
  const std::size_t rows = b.batch * b.len;
  b.points = Tensor<T>({rows, 5});
  b.positions.resize(rows);
  b.stroke_ids.resize(rows);
  b.valid.assign(rows, 0);
  for (std::size_t i = 0; i < b.batch; ++i) {
    const auto& s = sketches[i];
    if (s.points.size() < b.len && s.points.size() < s.length)
      throw DimensionError("make_batch: padded sketch shorter than its length");
    for (std::size_t t = 0; t < b.len; ++t) {
      const std::size_t r = i * b.len + t;
      b.positions[r] = t;
      if (t < s.length) {
        const auto v = s.points[t].as_array();
        for (std::size_t c = 0; c < 5; ++c) b.points.at(r, c) = static_cast<T>(v[c]);
        b.stroke_ids[r] = static_cast<std::size_t>(s.stroke_ids[t]);
        b.valid[r] = 1;
      } else {
        b.stroke_ids[r] = static_cast<std::size_t>(s.stroke_ids[s.length - 1]);
      }
    }
  }
  return b;
}

template SequenceBatch<float> make_batch(std::span<const data::PaddedSketch>);
template SequenceBatch<double> make_batch(std::span<const data::PaddedSketch>);

template <typename T>
SketchBert<T>::SketchBert(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t h = cfg_.encoder.hidden;
  embedding_ = std::make_unique<SketchEmbedding<T>>(store_, cfg_.embedding, h, cfg_.init_std, rng);
  encoder_ = std::make_unique<SharedEncoder<T>>(store_, cfg_.encoder, cfg_.layer_norm_eps, rng);
  if (cfg_.gestalt_head)
    gestalt_ = std::make_unique<ReconstructionNetwork<T>>(store_, cfg_.embedding, h, rng);
  if (cfg_.classifier_head)
    classifier_ = std::make_unique<ClassifierHead<T>>(store_, h, cfg_.num_classes, rng);
  if (cfg_.retrieval_head)
    retrieval_ = std::make_unique<RetrievalHead<T>>(store_, h, cfg_.retrieval_dim, cfg_.num_classes, rng);
}

template <typename T>
Var<T> SketchBert<T>::embed(Tape<T>& tape, const SequenceBatch<T>& b) const {
  const auto& e = *embedding_;
  return e.combine_and_refine(tape, e.embed_points(tape, b.points), e.embed_positions(tape, b.positions),
                              e.embed_strokes(tape, b.stroke_ids));
}

template <typename T>
Var<T> SketchBert<T>::encode(Tape<T>& tape, const SequenceBatch<T>& b) const {
  return encoder_->forward(tape, embed(tape, b), b.valid, b.batch);
}

template <typename T>
Var<T> SketchBert<T>::token_features(Tape<T>& tape, const SequenceBatch<T>& b, SpecialToken token) const {
  auto pre = embedding_->prepend_special(tape, token, embed(tape, b), b.valid, b.batch);
  auto out = encoder_->forward(tape, pre.seq, pre.mask, b.batch);
  std::vector<std::size_t> rows(b.batch);
  for (std::size_t i = 0; i < b.batch; ++i) rows[i] = i * (b.len + 1);
  return ops::gather_rows(out, rows);
}

template <typename T>
Var<T> SketchBert<T>::class_logits(Tape<T>& tape, const SequenceBatch<T>& b) const {
  if (!classifier_) throw ConfigError("model has no classification head");
  return classifier_->logits(tape, token_features(tape, b, SpecialToken::Cls));
}

template <typename T>
RetrievalOutput<T> SketchBert<T>::retrieval(Tape<T>& tape, const SequenceBatch<T>& b) const {
  if (!retrieval_) throw ConfigError("model has no retrieval head");
  auto emb = retrieval_->embed(tape, token_features(tape, b, SpecialToken::Ret));
  return {emb, retrieval_->logits(tape, emb)};
}

template <typename T>
std::pair<Var<T>, Var<T>> SketchBert<T>::reconstruct(Tape<T>& tape, const SequenceBatch<T>& b) const {
  if (!gestalt_) throw ConfigError("model has no reconstruction network");
  return gestalt_->reconstruct(tape, encode(tape, b));
}

template class SketchBert<float>;
template class SketchBert<double>;

void TripletBatch::validate() const {
  const std::size_t n = anchor.size();
  if (positive.size() != n || negative.size() != n || anchor_labels.size() != n || negative_labels.size() != n)
    throw ContractViolation("triplet batch members differ in size");
  if (n == 0) throw ContractViolation("empty triplet batch");
  for (std::size_t i = 0; i < n; ++i) {
    if (anchor_labels[i] == negative_labels[i])
      throw ContractViolation("triplet " + std::to_string(i) + ": negative shares the anchor's label");
  }
}

template <typename T>
RetrievalLoss<T> retrieval_objective(Tape<T>& tape, const SketchBert<T>& model, const TripletBatch& batch, T margin) {
  batch.validate();
  const std::size_t n = batch.anchor.size();
  std::vector<data::PaddedSketch> all;
  all.reserve(3 * n);
  all.insert(all.end(), batch.anchor.begin(), batch.anchor.end());
  all.insert(all.end(), batch.positive.begin(), batch.positive.end());
  all.insert(all.end(), batch.negative.begin(), batch.negative.end());
  std::vector<int> labels(batch.anchor_labels);
  labels.insert(labels.end(), batch.anchor_labels.begin(), batch.anchor_labels.end());
  labels.insert(labels.end(), batch.negative_labels.begin(), batch.negative_labels.end());

  const auto out = model.retrieval(tape, make_batch<T>(all));
  std::vector<std::size_t> idx(n);
  auto member = [&](std::size_t k) {
    for (std::size_t i = 0; i < n; ++i) idx[i] = k * n + i;
    return ops::gather_rows(out.embedding, idx);
  };
  auto a = member(0), p = member(1), neg = member(2);
  auto trip = triplet_loss(a, p, neg, margin);
  auto ce = ops::cross_entropy(out.logits, std::span<const int>(labels));
  return {ops::add(trip, ce), trip, ce};
}

template RetrievalLoss<float> retrieval_objective(Tape<float>&, const SketchBert<float>&, const TripletBatch&, float);
template RetrievalLoss<double> retrieval_objective(Tape<double>&, const SketchBert<double>&, const TripletBatch&,
                                                   double);

}  // namespace skb::model
