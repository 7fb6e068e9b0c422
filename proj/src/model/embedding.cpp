#include "skb/model/embedding.hpp"

#include <numeric>

namespace skb::model {
namespace {

std::vector<std::size_t> refine_widths(const EmbeddingConfig& cfg, std::size_t hidden) {
  std::vector<std::size_t> w{cfg.embed_dim};
  w.insert(w.end(), cfg.refine_hidden.begin(), cfg.refine_hidden.end());
  w.push_back(hidden);
  return w;
}

}  // namespace

template <typename T>
SketchEmbedding<T>::SketchEmbedding(ParameterStore<T>& store, const EmbeddingConfig& cfg, std::size_t hidden,
                                    double init_std, std::mt19937_64& rng)
    : cfg_(cfg),
      w_pt_(&store.add("emb.w_pt", Tensor<T>::randn({cfg.embed_dim, 5}, static_cast<T>(init_std), rng))),
      w_ps_(&store.add("emb.w_ps", Tensor<T>::randn({cfg.max_len, cfg.embed_dim}, static_cast<T>(init_std), rng))),
      w_str_(&store.add("emb.w_str", Tensor<T>::randn({cfg.stroke_cap, cfg.embed_dim}, static_cast<T>(init_std), rng))),
      cls_(&store.add("emb.cls", Tensor<T>::randn({hidden}, static_cast<T>(init_std), rng))),
      ret_(&store.add("emb.ret", Tensor<T>::randn({hidden}, static_cast<T>(init_std), rng))),
      refine_(store, "refine", refine_widths(cfg, hidden), rng) {}

template <typename T>
Var<T> SketchEmbedding<T>::embed_points(Tape<T>& tape, const Tensor<T>& points) const {
  if (points.rank() != 2 || points.dim(1) != 5)
    throw DimensionError("embed_points: expected [n x 5] points, got " + shape_str(points.shape()));
  return ops::matmul_nt(tape.constant(points), tape.param(*w_pt_));
}

template <typename T>
Var<T> SketchEmbedding<T>::embed_positions(Tape<T>& tape, std::size_t n) const {
  std::vector<std::size_t> pos(n);
  std::iota(pos.begin(), pos.end(), std::size_t{0});
  return embed_positions(tape, pos);
}

template <typename T>
Var<T> SketchEmbedding<T>::embed_positions(Tape<T>& tape, std::span<const std::size_t> positions) const {
  for (auto p : positions) {
    if (p >= cfg_.max_len)
      throw ContractViolation("position " + std::to_string(p) + " exceeds max_len " + std::to_string(cfg_.max_len));
  }
  return ops::gather_rows(tape.param(*w_ps_), positions);
}

template <typename T>
Var<T> SketchEmbedding<T>::embed_strokes(Tape<T>& tape, std::span<const std::size_t> stroke_ids) const {
  for (auto s : stroke_ids) {
    if (s >= cfg_.stroke_cap)
      throw ContractViolation("stroke id " + std::to_string(s) + " exceeds stroke cap " + std::to_string(cfg_.stroke_cap));
  }
  return ops::gather_rows(tape.param(*w_str_), stroke_ids);
}

template <typename T>
Var<T> SketchEmbedding<T>::combine_and_refine(Tape<T>& tape, Var<T> points, Var<T> positions, Var<T> strokes) const {
  return refine_(tape, ops::add(ops::add(points, positions), strokes));
}

template <typename T>
Prepended<T> SketchEmbedding<T>::prepend_special(Tape<T>& tape, SpecialToken token, std::optional<Var<T>> seq,
                                                 std::span<const std::uint8_t> mask, std::size_t batch) const {
  if (batch == 0) throw ContractViolation("prepend_special: empty batch");
  auto tok = tape.param(this->token(token));
  Prepended<T> out;
  if (!seq) {
    const std::vector<std::size_t> rows(batch, 0);
    out.seq = ops::gather_rows(tok, rows);
    out.mask.assign(batch, 1);
    return out;
  }
  const std::size_t len = mask.size() / batch;
  if (mask.size() != seq->value().rows())
    throw DimensionError("prepend_special: mask of " + std::to_string(mask.size()) + " entries for " +
                         shape_str(seq->shape()));
  out.seq = ops::prepend_rows(tok, *seq, batch);
  out.mask.reserve(batch * (len + 1));
  for (std::size_t b = 0; b < batch; ++b) {
    out.mask.push_back(1);
    out.mask.insert(out.mask.end(), mask.begin() + b * len, mask.begin() + (b + 1) * len);
  }
  return out;
}

template class SketchEmbedding<float>;
template class SketchEmbedding<double>;

}  // namespace skb::model
