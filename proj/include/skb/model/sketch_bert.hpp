#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "skb/core/parameter.hpp"
#include "skb/core/tape.hpp"
#include "skb/data/sketch.hpp"
#include "skb/model/config.hpp"
#include "skb/model/embedding.hpp"
#include "skb/model/encoder.hpp"
#include "skb/model/gestalt.hpp"
#include "skb/model/heads.hpp"

namespace skb::model {

// A batch of padded sketches laid out as [batch*len] rows, len being the
// longest sketch in the batch.
template <typename T>
struct SequenceBatch {
  std::size_t batch = 0;
  std::size_t len = 0;
  Tensor<T> points;  // [batch*len x 5]
  std::vector<std::size_t> positions;
  std::vector<std::size_t> stroke_ids;
  std::vector<std::uint8_t> valid;
};

template <typename T>
SequenceBatch<T> make_batch(std::span<const data::PaddedSketch> sketches);

template <typename T>
struct RetrievalOutput {
  Var<T> embedding;  // [batch x retrieval_dim]
  Var<T> logits;     // [batch x C]
};

// Embedding + shared encoder + whichever heads the config asks for. All
// parameters live in one store; construction order (and so initialization)
// is embedding, encoder, gestalt, classifier, retrieval.
template <typename T>
class SketchBert {
 public:
  SketchBert(const ModelConfig& cfg, std::uint64_t seed);
  SketchBert(const SketchBert&) = delete;
  SketchBert& operator=(const SketchBert&) = delete;

  // Encoder output for the bare sequence, [batch*len x H].
  Var<T> encode(Tape<T>& tape, const SequenceBatch<T>& b) const;
  // Encoder output with `token` in front of each sketch; returns the token rows [batch x H].
  Var<T> token_features(Tape<T>& tape, const SequenceBatch<T>& b, SpecialToken token) const;

  Var<T> class_logits(Tape<T>& tape, const SequenceBatch<T>& b) const;
  RetrievalOutput<T> retrieval(Tape<T>& tape, const SequenceBatch<T>& b) const;
  std::pair<Var<T>, Var<T>> reconstruct(Tape<T>& tape, const SequenceBatch<T>& b) const;

  const ModelConfig& config() const noexcept { return cfg_; }
  ParameterStore<T>& store() noexcept { return store_; }
  const ParameterStore<T>& store() const noexcept { return store_; }
  const SketchEmbedding<T>& embedding() const noexcept { return *embedding_; }
  const SharedEncoder<T>& encoder() const noexcept { return *encoder_; }
  bool has_classifier() const noexcept { return classifier_ != nullptr; }
  bool has_retrieval() const noexcept { return retrieval_ != nullptr; }
  bool has_gestalt() const noexcept { return gestalt_ != nullptr; }

 private:
  Var<T> embed(Tape<T>& tape, const SequenceBatch<T>& b) const;

  ModelConfig cfg_;
  ParameterStore<T> store_;
  std::unique_ptr<SketchEmbedding<T>> embedding_;
  std::unique_ptr<SharedEncoder<T>> encoder_;
  std::unique_ptr<ReconstructionNetwork<T>> gestalt_;
  std::unique_ptr<ClassifierHead<T>> classifier_;
  std::unique_ptr<RetrievalHead<T>> retrieval_;
};

struct TripletBatch {
  std::vector<data::PaddedSketch> anchor, positive, negative;
  std::vector<int> anchor_labels, negative_labels;

  // label(anchor) == label(positive) != label(negative), equal member counts.
  void validate() const;
};

template <typename T>
struct RetrievalLoss {
  Var<T> total;
  Var<T> triplet;
  Var<T> classification;
};

// Triplet loss on the retrieval embeddings plus the auxiliary classifier's
// cross-entropy averaged over all 3B members.
template <typename T>
RetrievalLoss<T> retrieval_objective(Tape<T>& tape, const SketchBert<T>& model, const TripletBatch& batch, T margin);

}  // namespace skb::model
