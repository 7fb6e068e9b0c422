#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <unordered_map>
#include <vector>

#include "skb/core/parameter.hpp"
#include "skb/core/tensor.hpp"

namespace skb {

template <typename T>
class Tape;

// Handle to a value recorded on a Tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(*this); }
  const Shape& shape() const { return value().shape(); }
};

// Records a forward computation so that backward() can propagate gradients in
// reverse creation order. A tape is used by one thread at a time.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&)>;

  explicit Tape(bool training = false, std::uint64_t seed = 0) : training_(training), rng_(seed) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return push(std::move(value), false, nullptr, {}); }

  // Leaf bound to a parameter; repeated calls return the same node so that a
  // parameter used several times accumulates a single gradient.
  Var<T> param(Parameter<T>& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
    auto v = push(p.value, true, &p, {});
    param_nodes_.emplace(&p, v.id);
    return v;
  }

  // Used by operations: record an output whose gradient feeds its inputs.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || nodes_[in.id].needs_grad;
    return push(std::move(value), needs, nullptr, needs ? std::move(fn) : BackwardFn{});
  }

  const Tensor<T>& value(Var<T> v) const { return nodes_[v.id].value; }

  bool needs_grad(Var<T> v) const { return nodes_[v.id].needs_grad; }

  // Gradient buffer of a node, allocated as zeros on first access.
  Tensor<T>& grad(Var<T> v) {
    auto& node = nodes_[v.id];
    if (node.grad.empty()) node.grad = Tensor<T>(node.value.shape());
    return node.grad;
  }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape backwards, then adds leaf
  // gradients into the bound parameters. Calling twice accumulates twice.
  void backward(Var<T> loss) {
    if (value(loss).size() != 1) {
      throw ContractViolation("backward() requires a scalar loss, got shape " + shape_str(value(loss).shape()));
    }
    for (auto& node : nodes_) node.grad = Tensor<T>();
    grad(loss)[0] = T{1};
    for (std::size_t id = loss.id + 1; id-- > 0;) {
      auto& node = nodes_[id];
      if (node.grad.empty()) continue;
      if (node.backward) node.backward(*this);
    }
    for (auto& node : nodes_) {
      if (node.param == nullptr || node.grad.empty()) continue;
      auto dst = node.param->grad.data();
      auto src = node.grad.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }

  bool training() const noexcept { return training_; }
  std::mt19937_64& rng() noexcept { return rng_; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool needs_grad = false;
    Parameter<T>* param = nullptr;
    BackwardFn backward;
  };

  Var<T> push(Tensor<T> value, bool needs, Parameter<T>* p, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), Tensor<T>(), needs, p, std::move(fn)});
    return {this, nodes_.size() - 1};
  }

  bool training_;
  std::mt19937_64 rng_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::size_t> param_nodes_;
};

}  // namespace skb
