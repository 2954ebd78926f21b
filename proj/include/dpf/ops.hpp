#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dpf/autodiff.hpp"

namespace dpf::nn {

// Differentiable tensor ops recorded on a Tape. Elementwise ops require equal
// shapes; image-like tensors are channel-major [C, H, W].

template <class T> Var<T> add(Var<T> a, Var<T> b);
template <class T> Var<T> mul(Var<T> a, Var<T> b);
template <class T> Var<T> scale(Var<T> a, T s);
template <class T> Var<T> sum(Var<T> a);
template <class T> Var<T> relu(Var<T> x);

/// lo + (hi - lo) * sigmoid(x)
template <class T> Var<T> sigmoid_range(Var<T> x, T lo, T hi);

/// x[N, K] * w[K, M] + b[M]
template <class T> Var<T> linear(Var<T> x, Var<T> w, Var<T> b);

/// x[C, H, W], w[Co, C, k, k], b[Co]; zero padding.
template <class T> Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, int stride, int pad);

/// Fixed sparse read pattern over the H*W plane of a [C, H, W] map. Row r of
/// the output is sum_t weight[r*taps + t] * map[:, index[r*taps + t]].
struct TapTable {
  std::size_t rows = 0;
  std::size_t taps = 0;
  std::vector<std::uint32_t> index;
  std::vector<double> weight;

  void push(std::uint32_t idx, double w) {
    index.push_back(idx);
    weight.push_back(w);
  }
};

/// map[C, H, W] -> [rows, C]
template <class T> Var<T> sample_taps(Var<T> map, const TapTable& taps);

/// Column-wise concatenation of [N, *] blocks.
template <class T> Var<T> concat_cols(const std::vector<Var<T>>& parts);

template <class T> Var<T> softmax_rows(Var<T> x);

/// x[Q*group, 1 + c]: column 0 holds a weight logit, columns 1.. a value.
/// Softmax over each group's logits, then the weighted sum of values -> [Q, c].
template <class T> Var<T> softmax_interpolate(Var<T> x, std::size_t group);

/// The softmax weights softmax_interpolate applies, [Q, group].
template <class T> BasicTensor<T> group_softmax_weights(const BasicTensor<T>& x, std::size_t group);

/// Mean over rows of -log softmax(logits[r])[labels[r]].
template <class T> Var<T> cross_entropy(Var<T> logits, std::span<const int> labels);

}  // namespace dpf::nn
