#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "skb/error.hpp"

namespace skb {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

// Dense row-major array. T is float for training and double for gradient checks.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    check_extents();
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (data_.size() != shape_size(shape_)) {
      throw DimensionError("tensor data of length " + std::to_string(data_.size()) +
                           " does not fill shape " + shape_str(shape_));
    }
  }

  static Tensor randn(Shape shape, T stddev, std::mt19937_64& rng) {
    Tensor out(std::move(shape));
    std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
    for (auto& v : out.data_) v = static_cast<T>(dist(rng));
    return out;
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // Matrix view helpers: leading axes fold into rows.
  std::size_t cols() const { return shape_.empty() ? 1 : shape_.back(); }
  std::size_t rows() const { return shape_.empty() ? 1 : data_.size() / shape_.back(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& vec() noexcept { return data_; }
  const std::vector<T>& vec() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }
  T& at(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }

  std::span<T> row(std::size_t r) { return std::span<T>(data_).subspan(r * cols(), cols()); }
  std::span<const T> row(std::size_t r) const { return std::span<const T>(data_).subspan(r * cols(), cols()); }

  T item() const {
    if (data_.size() != 1) throw ContractViolation("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Tensor& other) const = default;

 private:
  void check_extents() const {
    for (auto e : shape_) {
      if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape_));
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

}  // namespace skb
