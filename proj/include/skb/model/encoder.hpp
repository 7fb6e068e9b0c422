#pragma once

#include <random>
#include <span>
#include <vector>

#include "skb/core/tape.hpp"
#include "skb/model/config.hpp"
#include "skb/model/layers.hpp"

namespace skb::model {

// ALBERT-style encoder: one post-norm transformer layer whose parameters are
// reused for all L applications.
//
// Parameters: enc.attn.{q,k,v,o}.{w,b}, enc.ff.{0,1}.{w,b}, enc.ln{1,2}.{g,b}.
template <typename T>
class SharedEncoder {
 public:
  SharedEncoder(ParameterStore<T>& store, const EncoderConfig& cfg, double ln_eps,
                std::mt19937_64& rng);

  // x [batch*len x H]; `valid` marks real (non-padded) positions.
  Var<T> self_attention(Tape<T>& tape, Var<T> x, std::span<const std::uint8_t> valid, std::size_t batch) const;
  Var<T> feed_forward(Tape<T>& tape, Var<T> x) const;

  // x <- LN1(x + attn(x)); x <- LN2(x + ff(x))
  Var<T> apply_layer(Tape<T>& tape, Var<T> x, std::span<const std::uint8_t> valid, std::size_t batch) const;

  // apply_layer repeated num_layers times with the same parameters.
  Var<T> forward(Tape<T>& tape, Var<T> x, std::span<const std::uint8_t> valid, std::size_t batch) const;

  const EncoderConfig& config() const noexcept { return cfg_; }
  std::vector<Parameter<T>*> parameters() const;

 private:
  EncoderConfig cfg_;
  T ln_eps_;
  Linear<T> q_, k_, v_, o_;
  Linear<T> ff0_, ff1_;
  Parameter<T>* ln1_g_;
  Parameter<T>* ln1_b_;
  Parameter<T>* ln2_g_;
  Parameter<T>* ln2_b_;
};

}  // namespace skb::model
