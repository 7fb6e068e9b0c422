#include "skb/model/encoder.hpp"

namespace skb::model {

template <typename T>
SharedEncoder<T>::SharedEncoder(ParameterStore<T>& store, const EncoderConfig& cfg, double ln_eps,
                                std::mt19937_64& rng)
    : cfg_((cfg.validate(), cfg)),
      ln_eps_(static_cast<T>(ln_eps)),
      q_(store, "enc.attn.q", cfg.hidden, cfg.hidden, rng),
      k_(store, "enc.attn.k", cfg.hidden, cfg.hidden, rng),
      v_(store, "enc.attn.v", cfg.hidden, cfg.hidden, rng),
      o_(store, "enc.attn.o", cfg.hidden, cfg.hidden, rng),
      ff0_(store, "enc.ff.0", cfg.hidden, cfg.ff_width(), rng),
      ff1_(store, "enc.ff.1", cfg.ff_width(), cfg.hidden, rng),
      ln1_g_(&store.add("enc.ln1.g", Tensor<T>({cfg.hidden}, T{1}))),
      ln1_b_(&store.add("enc.ln1.b", Tensor<T>({cfg.hidden}))),
      ln2_g_(&store.add("enc.ln2.g", Tensor<T>({cfg.hidden}, T{1}))),
      ln2_b_(&store.add("enc.ln2.b", Tensor<T>({cfg.hidden}))) {}

template <typename T>
Var<T> SharedEncoder<T>::self_attention(Tape<T>& tape, Var<T> x, std::span<const std::uint8_t> valid,
                                        std::size_t batch) const {
  auto q = q_(tape, x);
  auto k = k_(tape, x);
  auto v = v_(tape, x);
  auto ctx = ops::attention(q, k, v, valid, batch, cfg_.num_heads, static_cast<T>(cfg_.dropout));
  return o_(tape, ctx);
}

template <typename T>
Var<T> SharedEncoder<T>::feed_forward(Tape<T>& tape, Var<T> x) const {
  return ff1_(tape, ops::gelu(ff0_(tape, x)));
}

template <typename T>
Var<T> SharedEncoder<T>::apply_layer(Tape<T>& tape, Var<T> x, std::span<const std::uint8_t> valid,
                                     std::size_t batch) const {
  const T p = static_cast<T>(cfg_.dropout);
  auto a = ops::dropout(self_attention(tape, x, valid, batch), p);
  x = ops::layer_norm(ops::add(x, a), tape.param(*ln1_g_), tape.param(*ln1_b_), ln_eps_);
  auto f = ops::dropout(feed_forward(tape, x), p);
  return ops::layer_norm(ops::add(x, f), tape.param(*ln2_g_), tape.param(*ln2_b_), ln_eps_);
}

template <typename T>
Var<T> SharedEncoder<T>::forward(Tape<T>& tape, Var<T> x, std::span<const std::uint8_t> valid,
                                 std::size_t batch) const {
  for (std::size_t l = 0; l < cfg_.num_layers; ++l) x = apply_layer(tape, x, valid, batch);
  return x;
}

template <typename T>
std::vector<Parameter<T>*> SharedEncoder<T>::parameters() const {
  return {q_.w,  q_.b,  k_.w,  k_.b,  v_.w,  v_.b,  o_.w,   o_.b,   ff0_.w,
          ff0_.b, ff1_.w, ff1_.b, ln1_g_, ln1_b_, ln2_g_, ln2_b_};
}

template class SharedEncoder<float>;
template class SharedEncoder<double>;

}  // namespace skb::model
