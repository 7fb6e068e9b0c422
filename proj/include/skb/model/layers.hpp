#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "skb/core/ops.hpp"
#include "skb/core/parameter.hpp"

namespace skb::model {

// Fully-connected layer registered as "<prefix>.w" [in x out] and "<prefix>.b" [out].
// Weights start as N(0, 1/in), biases at zero.
template <typename T>
struct Linear {
  Linear(ParameterStore<T>& store, const std::string& prefix, std::size_t in, std::size_t out, std::mt19937_64& rng)
      : w(&store.add(prefix + ".w", Tensor<T>::randn({in, out}, static_cast<T>(1.0 / std::sqrt(double(in))), rng))),
        b(&store.add(prefix + ".b", Tensor<T>({out}))) {}

  Var<T> operator()(Tape<T>& tape, Var<T> x) const { return ops::linear(x, tape.param(*w), tape.param(*b)); }

  std::size_t in() const { return w->value.dim(0); }
  std::size_t out() const { return w->value.dim(1); }

  Parameter<T>* w;
  Parameter<T>* b;
};

// Stack of Linear layers with GELU between consecutive layers (none after the last).
// Layer i is registered under "<prefix>.<i>".
template <typename T>
struct Mlp {
  Mlp(ParameterStore<T>& store, const std::string& prefix, const std::vector<std::size_t>& widths,
      std::mt19937_64& rng) {
    for (std::size_t i = 0; i + 1 < widths.size(); ++i)
      layers.emplace_back(store, prefix + "." + std::to_string(i), widths[i], widths[i + 1], rng);
  }

  Var<T> operator()(Tape<T>& tape, Var<T> x) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = layers[i](tape, x);
      if (i + 1 < layers.size()) x = ops::gelu(x);
    }
    return x;
  }

  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w{layers.front().in()};
    for (const auto& l : layers) w.push_back(l.out());
    return w;
  }

  std::vector<Linear<T>> layers;
};

}  // namespace skb::model
