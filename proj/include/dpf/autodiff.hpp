#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "dpf/tensor.hpp"

namespace dpf::nn {

template <class T>
class Tape;

/// Handle to a value recorded on a Tape.
template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const BasicTensor<T>& value() const { return tape->value(*this); }
  const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse
/// sweep visits every node after all of its consumers.
template <class T>
class Tape {
 public:
  /// Receives the gradient of the node's output; pushes into inputs via grad_slot().
  using BackwardFn = std::function<void(Tape&, const BasicTensor<T>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(BasicTensor<T> value);

  /// Leaf bound to a parameter; backward() adds into p.grad.
  Var<T> parameter(BasicParameter<T>& p);

  /// Appends an op result. The closure is dropped when no input needs a gradient.
  Var<T> record(BasicTensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn);
  Var<T> record(BasicTensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn fn);

  const BasicTensor<T>& value(Var<T> v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var<T> v) const { return nodes_.at(v.id).requires_grad; }

  /// Gradient buffer for an input, or nullptr when it needs none.
  BasicTensor<T>* grad_slot(Var<T> v);

  /// Gradient of the most recent backward() w.r.t. v (zeros if unreached).
  BasicTensor<T> grad(Var<T> v) const;

  /// Seeds d(loss)/d(loss) = 1. Loss must hold exactly one element.
  void backward(Var<T> loss);

  /// Kink bookkeeping for gradient checks: ops with piecewise branches mix
  /// their active branch pattern into a running hash when tracking is on.
  void set_branch_tracking(bool on) noexcept { track_branches_ = on; }
  bool branch_tracking() const noexcept { return track_branches_; }
  void note_branch(std::uint64_t v) noexcept {
    branch_hash_ = (branch_hash_ ^ v) * 0x100000001b3ULL;
  }
  std::uint64_t branch_signature() const noexcept { return branch_hash_; }

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Inference mode: parameter() records plain constants, so nothing is kept for backward.
  void set_grad_enabled(bool on) noexcept { grad_enabled_ = on; }

 private:
  struct Node {
    BasicTensor<T> value;
    BasicTensor<T> grad;  // lazily sized
    BackwardFn backward;
    BasicParameter<T>* param = nullptr;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;  // stable addresses: value() references survive later records
  bool track_branches_ = false;
  bool grad_enabled_ = true;
  std::uint64_t branch_hash_ = 0xcbf29ce484222325ULL;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace dpf::nn
