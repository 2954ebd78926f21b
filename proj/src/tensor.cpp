#include "dpf/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace dpf::nn {

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <class T>
bool BasicTensor<T>::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <class T>
BasicParameter<T>& BasicParamSet<T>::add(std::string name, BasicTensor<T> value) {
  require(!contains(name), "ParamSet: duplicate parameter name '" + name + "'");
  params_.emplace_back(std::move(name), std::move(value));
  return params_.back();
}

template <class T>
BasicParameter<T>& BasicParamSet<T>::get(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw ContractError("ParamSet: no parameter named '" + std::string(name) + "'");
}

template <class T>
const BasicParameter<T>& BasicParamSet<T>::get(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw ContractError("ParamSet: no parameter named '" + std::string(name) + "'");
}

template <class T>
bool BasicParamSet<T>::contains(std::string_view name) const noexcept {
  return std::any_of(params_.begin(), params_.end(), [&](const auto& p) { return p.name == name; });
}

template <class T>
std::size_t BasicParamSet<T>::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template class BasicParamSet<float>;
template class BasicParamSet<double>;

}  // namespace dpf::nn
