#pragma once

#include <optional>
#include <random>
#include <span>
#include <vector>

#include "skb/core/tape.hpp"
#include "skb/model/config.hpp"
#include "skb/model/layers.hpp"

namespace skb::model {

enum class SpecialToken { Cls, Ret };

template <typename T>
struct Prepended {
  Var<T> seq;
  std::vector<std::uint8_t> mask;
};

// Three-level sketch embedding (point, position, stroke) and the refine network
// that lifts the summed d_E embedding to the encoder width.
//
// Parameters: emb.w_pt [d_E x 5], emb.w_ps [max_len x d_E], emb.w_str
// [stroke_cap x d_E], emb.cls / emb.ret [H], refine.{i}.{w,b}.
template <typename T>
class SketchEmbedding {
 public:
  SketchEmbedding(ParameterStore<T>& store, const EmbeddingConfig& cfg, std::size_t hidden, double init_std,
                  std::mt19937_64& rng);

  // points [n x 5] -> [n x d_E]; a bias-free linear map.
  Var<T> embed_points(Tape<T>& tape, const Tensor<T>& points) const;

  // Rows 0..n-1 of W_ps.
  Var<T> embed_positions(Tape<T>& tape, std::size_t n) const;
  Var<T> embed_positions(Tape<T>& tape, std::span<const std::size_t> positions) const;

  Var<T> embed_strokes(Tape<T>& tape, std::span<const std::size_t> stroke_ids) const;

  // (E_pt + E_ps + E_str) through the refine network -> [n x H]
  Var<T> combine_and_refine(Tape<T>& tape, Var<T> points, Var<T> positions, Var<T> strokes) const;

  // Puts the token's learned vector in front of each of `batch` equal-length
  // segments of `seq` and extends the attention mask with a leading 1. With no
  // body (`seq` empty) the result is the token alone.
  Prepended<T> prepend_special(Tape<T>& tape, SpecialToken token, std::optional<Var<T>> seq,
                               std::span<const std::uint8_t> mask, std::size_t batch) const;

  const EmbeddingConfig& config() const noexcept { return cfg_; }
  const Mlp<T>& refine() const noexcept { return refine_; }
  Parameter<T>& w_pt() const noexcept { return *w_pt_; }
  Parameter<T>& w_ps() const noexcept { return *w_ps_; }
  Parameter<T>& w_str() const noexcept { return *w_str_; }
  Parameter<T>& token(SpecialToken t) const noexcept { return t == SpecialToken::Cls ? *cls_ : *ret_; }

 private:
  EmbeddingConfig cfg_;
  Parameter<T>* w_pt_;
  Parameter<T>* w_ps_;
  Parameter<T>* w_str_;
  Parameter<T>* cls_;
  Parameter<T>* ret_;
  Mlp<T> refine_;
};

}  // namespace skb::model
