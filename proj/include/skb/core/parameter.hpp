#pragma once

#include <deque>
#include <string>
#include <unordered_map>

#include "skb/core/tensor.hpp"

namespace skb {

// A trainable tensor together with its accumulated gradient.
template <typename T>
struct Parameter {
  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(T{0}); }

  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

// Owns parameters under unique names, in registration order. Addresses stay
// stable for the lifetime of the store.
template <typename T>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Parameter<T>& add(const std::string& name, Tensor<T> value) {
    if (index_.contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    params_.emplace_back(name, std::move(value));
    index_.emplace(name, params_.size() - 1);
    return params_.back();
  }

  Parameter<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }
  const Parameter<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }

  Parameter<T>& get(const std::string& name) {
    if (auto* p = find(name)) return *p;
    throw ConfigError("unknown parameter '" + name + "'");
  }

  void zero_grads() {
    for (auto& p : params_) p.zero_grad();
  }

  // Total number of scalar weights.
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  std::size_t size() const noexcept { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace skb
