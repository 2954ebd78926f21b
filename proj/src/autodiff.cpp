#include "dpf/autodiff.hpp"

#include <string>

namespace dpf::nn {

template <class T>
Var<T> Tape<T>::constant(BasicTensor<T> value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return {this, nodes_.size() - 1};
}

template <class T>
Var<T> Tape<T>::parameter(BasicParameter<T>& p) {
  if (!grad_enabled_) return constant(p.value);
  nodes_.push_back(Node{p.value, {}, {}, &p, true});
  return {this, nodes_.size() - 1};
}

template <class T>
Var<T> Tape<T>::record(BasicTensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
  bool needs = false;
  for (auto v : inputs) {
    require(v.tape == this, "Tape::record: input belongs to a different tape");
    needs = needs || nodes_.at(v.id).requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : BackwardFn{}, nullptr, needs});
  return {this, nodes_.size() - 1};
}

template <class T>
Var<T> Tape<T>::record(BasicTensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn fn) {
  bool needs = false;
  for (auto v : inputs) {
    require(v.tape == this, "Tape::record: input belongs to a different tape");
    needs = needs || nodes_.at(v.id).requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : BackwardFn{}, nullptr, needs});
  return {this, nodes_.size() - 1};
}

template <class T>
BasicTensor<T>* Tape<T>::grad_slot(Var<T> v) {
  Node& n = nodes_.at(v.id);
  if (!n.requires_grad) return nullptr;
  if (n.grad.numel() != n.value.numel()) n.grad = BasicTensor<T>(n.value.shape());
  return &n.grad;
}

template <class T>
BasicTensor<T> Tape<T>::grad(Var<T> v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad.numel() != n.value.numel()) return BasicTensor<T>(n.value.shape());
  return n.grad;
}

template <class T>
void Tape<T>::backward(Var<T> loss) {
  require(loss.tape == this, "backward: loss belongs to a different tape");
  Node& root = nodes_.at(loss.id);
  if (root.value.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_str(root.value.shape()));
  }
  for (auto& n : nodes_) n.grad = BasicTensor<T>();
  if (!root.requires_grad) return;
  root.grad = BasicTensor<T>(root.value.shape(), T(1));

  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.numel() == 0) continue;
    if (n.backward) {
      // The closure may grow other nodes' grads but never this node's.
      const BasicTensor<T> g = std::move(n.grad);
      n.backward(*this, g);
      nodes_[i].grad = g;
    } else if (n.param != nullptr) {
      auto out = n.param->grad.data();
      auto in = n.grad.data();
      for (std::size_t k = 0; k < out.size(); ++k) out[k] += in[k];
    }
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace dpf::nn
