#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "skb/core/parameter.hpp"

namespace skb {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  AdamState(const Shape& shape, AdamConfig cfg) : first_moment(shape), second_moment(shape), config(cfg) {}

  Tensor<T> first_moment;
  Tensor<T> second_moment;
  std::uint64_t step_count = 0;
  AdamConfig config;
};

// One bias-corrected Adam update of `param` from its accumulated gradient.
template <typename T>
void adam_step(Parameter<T>& param, AdamState<T>& state) {
  if (state.first_moment.shape() != param.value.shape()) {
    throw DimensionError("adam_step: state " + shape_str(state.first_moment.shape()) + " vs parameter " +
                         shape_str(param.value.shape()));
  }
  const auto& c = state.config;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  const T b1 = static_cast<T>(c.beta1);
  const T b2 = static_cast<T>(c.beta2);
  auto value = param.value.data();
  auto grad = param.grad.data();
  auto m = state.first_moment.data();
  auto v = state.second_moment.data();
  for (std::size_t i = 0; i < value.size(); ++i) {
    const T g = grad[i];
    m[i] = b1 * m[i] + (T{1} - b1) * g;
    v[i] = b2 * v[i] + (T{1} - b2) * g * g;
    const double m_hat = static_cast<double>(m[i]) / correction1;
    const double v_hat = static_cast<double>(v[i]) / correction2;
    value[i] -= static_cast<T>(c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon));
  }
}

// Adam over every parameter of a store. States are keyed by parameter name.
template <typename T>
class Adam {
 public:
  Adam(ParameterStore<T>& store, AdamConfig config) : store_(store), config_(config) {}

  void step() {
    for (auto& p : store_) {
      auto it = states_.find(p.name);
      if (it == states_.end()) it = states_.emplace(p.name, AdamState<T>(p.value.shape(), config_)).first;
      adam_step(p, it->second);
    }
    ++steps_;
  }

  std::uint64_t steps() const noexcept { return steps_; }
  void set_steps(std::uint64_t s) noexcept { steps_ = s; }
  const AdamConfig& config() const noexcept { return config_; }
  std::map<std::string, AdamState<T>>& states() noexcept { return states_; }
  const std::map<std::string, AdamState<T>>& states() const noexcept { return states_; }

 private:
  ParameterStore<T>& store_;
  AdamConfig config_;
  std::map<std::string, AdamState<T>> states_;
  std::uint64_t steps_ = 0;
};

}  // namespace skb
