#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "dpf/errors.hpp"

namespace dpf::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape);

/// Dense row-major array. Training runs on float; the double instantiation
/// exists so gradient checks can resolve finite differences cleanly.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
    for (auto d : shape_) require(d >= 1, "Tensor: dimensions must be positive, got " + shape_str(shape_));
  }

  BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    for (auto d : shape_) require(d >= 1, "Tensor: dimensions must be positive, got " + shape_str(shape_));
    require(data_.size() == shape_numel(shape_), "Tensor: data length does not match shape " + shape_str(shape_));
  }

  static BasicTensor scalar(T v) { return BasicTensor(Shape{1}, std::vector<T>{v}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& vec() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  T& at(std::size_t ch, std::size_t r, std::size_t c) { return data_[(ch * shape_[1] + r) * shape_[2] + c]; }
  const T& at(std::size_t ch, std::size_t r, std::size_t c) const {
    return data_[(ch * shape_[1] + r) * shape_[2] + c];
  }

  void fill(T v) noexcept { std::fill(data_.begin(), data_.end(), v); }

  BasicTensor reshaped(Shape shape) const {
    require(shape_numel(shape) == numel(), "Tensor::reshaped: element count mismatch");
    return BasicTensor(std::move(shape), data_);
  }

  template <class U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  bool all_finite() const noexcept;

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

/// Named trainable tensor with its accumulated gradient.
template <class T>
struct BasicParameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;

  BasicParameter(std::string n, BasicTensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() noexcept { grad.fill(T(0)); }
};

using Parameter = BasicParameter<float>;

/// Ordered parameter collection with unique names. References handed out by
/// get() stay valid until the next add().
template <class T>
class BasicParamSet {
 public:
  BasicParameter<T>& add(std::string name, BasicTensor<T> value);

  BasicParameter<T>& get(std::string_view name);
  const BasicParameter<T>& get(std::string_view name) const;
  bool contains(std::string_view name) const noexcept;

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const noexcept;

  auto begin() noexcept { return params_.begin(); }
  auto end() noexcept { return params_.end(); }
  auto begin() const noexcept { return params_.begin(); }
  auto end() const noexcept { return params_.end(); }

  void zero_grad() noexcept {
    for (auto& p : params_) p.zero_grad();
  }

  template <class U>
  BasicParamSet<U> cast() const {
    BasicParamSet<U> out;
    for (const auto& p : params_) out.add(p.name, p.value.template cast<U>());
    return out;
  }

 private:
  std::vector<BasicParameter<T>> params_;
};

using ParamSet = BasicParamSet<float>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;
extern template class BasicParamSet<float>;
extern template class BasicParamSet<double>;

}  // namespace dpf::nn
