#include "dpf/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace dpf::nn {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

template <class T>
MapMat<T> as_mat(BasicTensor<T>& t, std::size_t rows, std::size_t cols) {
  return MapMat<T>(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <class T>
ConstMapMat<T> as_mat(const BasicTensor<T>& t, std::size_t rows, std::size_t cols) {
  return ConstMapMat<T>(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ContractError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

void require_rank(const Shape& s, std::size_t rank, const char* op, const char* what) {
  if (s.size() != rank) {
    throw ContractError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                        shape_str(s));
  }
}

template <class T>
void add_into(BasicTensor<T>* dst, const BasicTensor<T>& src) {
  if (dst == nullptr) return;
  auto d = dst->data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

struct ConvGeom {
  std::size_t c, h, w, co, k, ho, wo;
  int stride, pad;
};

template <class T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
  const std::size_t plane = g.ho * g.wo;
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        T* row = cols + ((ci * g.k + ky) * g.k + kx) * plane;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ky);
          T* out = row + oy * g.wo;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(out, out + g.wo, T(0));
            continue;
          }
          const T* in = x + (ci * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kx);
            out[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? T(0) : in[ix];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* cols, const ConvGeom& g, T* x) {
  const std::size_t plane = g.ho * g.wo;
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const T* row = cols + ((ci * g.k + ky) * g.k + kx) * plane;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ky);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          T* out = x + (ci * g.h + static_cast<std::size_t>(iy)) * g.w;
          const T* in = row + oy * g.wo;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kx);
            if (ix >= 0 && ix < static_cast<long>(g.w)) out[ix] += in[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape(a.shape(), b.shape(), "add");
  BasicTensor<T> out = a.value();
  add_into(&out, b.value());
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& tape, const BasicTensor<T>& g) {
    add_into(tape.grad_slot(a), g);
    add_into(tape.grad_slot(b), g);
  });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  BasicTensor<T> out = a.value();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& tape, const BasicTensor<T>& g) {
    if (auto* ga = tape.grad_slot(a)) {
      const auto& bv = tape.value(b);
      for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * bv[i];
    }
    if (auto* gb = tape.grad_slot(b)) {
      const auto& av = tape.value(a);
      for (std::size_t i = 0; i < g.numel(); ++i) (*gb)[i] += g[i] * av[i];
    }
  });
}

template <class T>
Var<T> scale(Var<T> a, T s) {
  BasicTensor<T> out = a.value();
  for (auto& v : out.data()) v *= s;
  return a.tape->record(std::move(out), {a}, [a, s](Tape<T>& tape, const BasicTensor<T>& g) {
    if (auto* ga = tape.grad_slot(a))
      for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += s * g[i];
  });
}

template <class T>
Var<T> sum(Var<T> a) {
  T acc = T(0);
  for (T v : a.value().data()) acc += v;
  return a.tape->record(BasicTensor<T>::scalar(acc), {a}, [a](Tape<T>& tape, const BasicTensor<T>& g) {
    if (auto* ga = tape.grad_slot(a))
      for (auto& v : ga->data()) v += g[0];
  });
}

template <class T>
Var<T> relu(Var<T> x) {
  BasicTensor<T> out = x.value();
  Tape<T>& tape = *x.tape;
  const bool track = tape.branch_tracking();
  std::uint64_t mask_hash = 0;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    if (out[i] > T(0)) {
      if (track) mask_hash = (mask_hash ^ (i + 1)) * 0x9E3779B97F4A7C15ULL;
    } else {
      out[i] = T(0);
    }
  }
  if (track) tape.note_branch(mask_hash);
  return tape.record(std::move(out), {x}, [x](Tape<T>& tape, const BasicTensor<T>& g) {
    if (auto* gx = tape.grad_slot(x)) {
      const auto& xv = tape.value(x);
      for (std::size_t i = 0; i < g.numel(); ++i)
        if (xv[i] > T(0)) (*gx)[i] += g[i];
    }
  });
}

template <class T>
Var<T> sigmoid_range(Var<T> x, T lo, T hi) {
  const auto xv = x.value().data();
  BasicTensor<T> sig(x.shape());
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    sig[i] = T(1) / (T(1) + std::exp(-xv[i]));
    out[i] = lo + (hi - lo) * sig[i];
  }
  auto s = std::make_shared<BasicTensor<T>>(std::move(sig));
  return x.tape->record(std::move(out), {x}, [x, s, lo, hi](Tape<T>& tape, const BasicTensor<T>& g) {
    if (auto* gx = tape.grad_slot(x)) {
      for (std::size_t i = 0; i < g.numel(); ++i) {
        const T si = (*s)[i];
        (*gx)[i] += g[i] * (hi - lo) * si * (T(1) - si);
      }
    }
  });
}

template <class T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
  require_rank(x.shape(), 2, "linear", "input");
  require_rank(w.shape(), 2, "linear", "weight");
  require_rank(b.shape(), 1, "linear", "bias");
  const std::size_t n = x.shape()[0], k = x.shape()[1], m = w.shape()[1];
  if (w.shape()[0] != k || b.shape()[0] != m) {
    throw ContractError("linear: incompatible shapes input " + shape_str(x.shape()) + ", weight " +
                        shape_str(w.shape()) + ", bias " + shape_str(b.shape()));
  }
  BasicTensor<T> out(Shape{n, m});
  auto om = as_mat(out, n, m);
  om.noalias() = as_mat(x.value(), n, k) * as_mat(w.value(), k, m);
  const auto bv = b.value().data();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out.at(r, c) += bv[c];

  return x.tape->record(std::move(out), {x, w, b}, [x, w, b, n, k, m](Tape<T>& tape, const BasicTensor<T>& g) {
    const auto gm = as_mat(g, n, m);
    if (auto* gx = tape.grad_slot(x)) as_mat(*gx, n, k).noalias() += gm * as_mat(tape.value(w), k, m).transpose();
    if (auto* gw = tape.grad_slot(w)) as_mat(*gw, k, m).noalias() += as_mat(tape.value(x), n, k).transpose() * gm;
    if (auto* gb = tape.grad_slot(b))
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) (*gb)[c] += g.at(r, c);
  });
}

template <class T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, int stride, int pad) {
  require_rank(x.shape(), 3, "conv2d", "input");
  require_rank(w.shape(), 4, "conv2d", "weight");
  require_rank(b.shape(), 1, "conv2d", "bias");
  require(stride >= 1 && pad >= 0, "conv2d: stride must be >= 1 and pad >= 0");
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (ws[1] != xs[0] || ws[2] != ws[3] || b.shape()[0] != ws[0]) {
    throw ContractError("conv2d: channel mismatch input " + shape_str(xs) + ", weight " + shape_str(ws) +
                        ", bias " + shape_str(b.shape()));
  }
  ConvGeom geo{xs[0], xs[1], xs[2], ws[0], ws[2], 0, 0, stride, pad};
  const long span_h = static_cast<long>(geo.h) + 2L * pad - static_cast<long>(geo.k);
  const long span_w = static_cast<long>(geo.w) + 2L * pad - static_cast<long>(geo.k);
  require(span_h >= 0 && span_w >= 0, "conv2d: kernel larger than padded input");
  geo.ho = static_cast<std::size_t>(span_h / stride + 1);
  geo.wo = static_cast<std::size_t>(span_w / stride + 1);

  const std::size_t patch = geo.c * geo.k * geo.k;
  const std::size_t plane = geo.ho * geo.wo;
  auto cols = std::make_shared<BasicTensor<T>>(Shape{patch, plane});
  im2col(x.value().data().data(), geo, cols->data().data());

  BasicTensor<T> out(Shape{geo.co, geo.ho, geo.wo});
  auto om = as_mat(out, geo.co, plane);
  om.noalias() = as_mat(w.value(), geo.co, patch) * as_mat(*cols, patch, plane);
  const auto bv = b.value().data();
  for (std::size_t c = 0; c < geo.co; ++c) om.row(static_cast<Eigen::Index>(c)).array() += bv[c];

  return x.tape->record(std::move(out), {x, w, b},
                        [x, w, b, geo, cols, patch, plane](Tape<T>& tape, const BasicTensor<T>& g) {
                          const auto gm = as_mat(g, geo.co, plane);
                          if (auto* gw = tape.grad_slot(w))
                            as_mat(*gw, geo.co, patch).noalias() += gm * as_mat(*cols, patch, plane).transpose();
                          if (auto* gb = tape.grad_slot(b))
                            for (std::size_t c = 0; c < geo.co; ++c) (*gb)[c] += gm.row(static_cast<Eigen::Index>(c)).sum();
                          if (auto* gx = tape.grad_slot(x)) {
                            BasicTensor<T> gcols(Shape{patch, plane});
                            as_mat(gcols, patch, plane).noalias() =
                                as_mat(tape.value(w), geo.co, patch).transpose() * gm;
                            col2im_add(gcols.data().data(), geo, gx->data().data());
                          }
                        });
}

template <class T>
Var<T> sample_taps(Var<T> map, const TapTable& taps) {
  require_rank(map.shape(), 3, "sample_taps", "map");
  require(taps.index.size() == taps.rows * taps.taps && taps.weight.size() == taps.index.size(),
          "sample_taps: tap table is inconsistent");
  require(taps.rows >= 1 && taps.taps >= 1, "sample_taps: empty tap table");
  const std::size_t ch = map.shape()[0];
  const std::size_t plane = map.shape()[1] * map.shape()[2];
  for (auto idx : taps.index) require(idx < plane, "sample_taps: tap index outside the map");

  const auto mv = map.value().data();
  BasicTensor<T> out(Shape{taps.rows, ch});
  for (std::size_t r = 0; r < taps.rows; ++r) {
    for (std::size_t t = 0; t < taps.taps; ++t) {
      const std::size_t idx = taps.index[r * taps.taps + t];
      const T wt = static_cast<T>(taps.weight[r * taps.taps + t]);
      for (std::size_t c = 0; c < ch; ++c) out.at(r, c) += wt * mv[c * plane + idx];
    }
  }
  auto table = std::make_shared<TapTable>(taps);
  return map.tape->record(std::move(out), {map}, [map, table, ch, plane](Tape<T>& tape, const BasicTensor<T>& g) {
    if (auto* gm = tape.grad_slot(map)) {
      for (std::size_t r = 0; r < table->rows; ++r) {
        for (std::size_t t = 0; t < table->taps; ++t) {
          const std::size_t idx = table->index[r * table->taps + t];
          const T wt = static_cast<T>(table->weight[r * table->taps + t]);
          for (std::size_t c = 0; c < ch; ++c) (*gm)[c * plane + idx] += wt * g.at(r, c);
        }
      }
    }
  });
}

template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t n = parts.front().shape().at(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(p.shape(), 2, "concat_cols", "block");
    require(p.shape()[0] == n, "concat_cols: row count mismatch");
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
  }
  BasicTensor<T> out(Shape{n, total});
  std::size_t off = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& v = parts[i].value();
    for (std::size_t r = 0; r < n; ++r)
      std::copy_n(&v.at(r, 0), widths[i], &out.at(r, off));
    off += widths[i];
  }
  return parts.front().tape->record(std::move(out), parts,
                                    [parts, widths, n, total](Tape<T>& tape, const BasicTensor<T>& g) {
                                      std::size_t off = 0;
                                      for (std::size_t i = 0; i < parts.size(); ++i) {
                                        if (auto* gp = tape.grad_slot(parts[i])) {
                                          for (std::size_t r = 0; r < n; ++r)
                                            for (std::size_t c = 0; c < widths[i]; ++c)
                                              gp->at(r, c) += g[r * total + off + c];
                                        }
                                        off += widths[i];
                                      }
                                    });
}

template <class T>
Var<T> softmax_rows(Var<T> x) {
  require_rank(x.shape(), 2, "softmax_rows", "input");
  const std::size_t n = x.shape()[0], c = x.shape()[1];
  BasicTensor<T> out = x.value();
  for (std::size_t r = 0; r < n; ++r) {
    T* row = &out.at(r, 0);
    const T mx = *std::max_element(row, row + c);
    T z = T(0);
    for (std::size_t j = 0; j < c; ++j) z += (row[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) row[j] /= z;
  }
  auto y = std::make_shared<BasicTensor<T>>(out);
  return x.tape->record(std::move(out), {x}, [x, y, n, c](Tape<T>& tape, const BasicTensor<T>& g) {
    if (auto* gx = tape.grad_slot(x)) {
      for (std::size_t r = 0; r < n; ++r) {
        T dot = T(0);
        for (std::size_t j = 0; j < c; ++j) dot += g.at(r, j) * y->at(r, j);
        for (std::size_t j = 0; j < c; ++j) gx->at(r, j) += y->at(r, j) * (g.at(r, j) - dot);
      }
    }
  });
}

template <class T>
BasicTensor<T> group_softmax_weights(const BasicTensor<T>& x, std::size_t group) {
  require(x.rank() == 2 && group >= 1 && x.dim(0) % group == 0,
          "group_softmax_weights: rows must be a multiple of the group size");
  const std::size_t q = x.dim(0) / group;
  BasicTensor<T> w(Shape{q, group});
  for (std::size_t i = 0; i < q; ++i) {
    T mx = x.at(i * group, 0);
    for (std::size_t j = 1; j < group; ++j) mx = std::max(mx, x.at(i * group + j, 0));
    T z = T(0);
    for (std::size_t j = 0; j < group; ++j) z += (w.at(i, j) = std::exp(x.at(i * group + j, 0) - mx));
    for (std::size_t j = 0; j < group; ++j) w.at(i, j) /= z;
  }
  return w;
}

template <class T>
Var<T> softmax_interpolate(Var<T> x, std::size_t group) {
  require_rank(x.shape(), 2, "softmax_interpolate", "input");
  require(x.shape()[1] >= 2, "softmax_interpolate: need a weight column and at least one value column");
  const std::size_t c = x.shape()[1] - 1;
  auto w = std::make_shared<BasicTensor<T>>(group_softmax_weights(x.value(), group));
  const std::size_t q = w->dim(0);
  const auto& xv = x.value();
  BasicTensor<T> out(Shape{q, c});
  for (std::size_t i = 0; i < q; ++i)
    for (std::size_t j = 0; j < group; ++j) {
      const T wij = w->at(i, j);
      const T* v = &xv.at(i * group + j, 1);
      for (std::size_t k = 0; k < c; ++k) out.at(i, k) += wij * v[k];
    }
  return x.tape->record(std::move(out), {x}, [x, w, q, c, group](Tape<T>& tape, const BasicTensor<T>& g) {
    auto* gx = tape.grad_slot(x);
    if (gx == nullptr) return;
    const auto& xv = tape.value(x);
    std::vector<T> dw(group);
    for (std::size_t i = 0; i < q; ++i) {
      T mean = T(0);
      for (std::size_t j = 0; j < group; ++j) {
        const T* v = &xv.at(i * group + j, 1);
        T d = T(0);
        for (std::size_t k = 0; k < c; ++k) {
          d += g.at(i, k) * v[k];
          gx->at(i * group + j, 1 + k) += w->at(i, j) * g.at(i, k);
        }
        dw[j] = d;
        mean += w->at(i, j) * d;
      }
      for (std::size_t j = 0; j < group; ++j) gx->at(i * group + j, 0) += w->at(i, j) * (dw[j] - mean);
    }
  });
}

template <class T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> labels) {
  require_rank(logits.shape(), 2, "cross_entropy", "logits");
  const std::size_t n = logits.shape()[0], c = logits.shape()[1];
  require(labels.size() == n, "cross_entropy: one label per logit row required");
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= c) {
      throw ContractError("cross_entropy: label " + std::to_string(l) + " outside [0, " + std::to_string(c) + ")");
    }
  }
  const auto& lv = logits.value();
  auto prob = std::make_shared<BasicTensor<T>>(Shape{n, c});
  T total = T(0);
  for (std::size_t r = 0; r < n; ++r) {
    const T* row = &lv.at(r, 0);
    const T mx = *std::max_element(row, row + c);
    T z = T(0);
    for (std::size_t j = 0; j < c; ++j) z += (prob->at(r, j) = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) prob->at(r, j) /= z;
    total += std::log(z) + mx - row[labels[r]];
  }
  const T inv_n = T(1) / static_cast<T>(n);
  std::vector<int> lab(labels.begin(), labels.end());
  return logits.tape->record(BasicTensor<T>::scalar(total * inv_n), {logits},
                             [logits, prob, lab, n, c, inv_n](Tape<T>& tape, const BasicTensor<T>& g) {
                               if (auto* gl = tape.grad_slot(logits)) {
                                 const T s = g[0] * inv_n;
                                 for (std::size_t r = 0; r < n; ++r)
                                   for (std::size_t j = 0; j < c; ++j) {
                                     const T onehot = static_cast<std::size_t>(lab[r]) == j ? T(1) : T(0);
                                     gl->at(r, j) += s * (prob->at(r, j) - onehot);
                                   }
                               }
                             });
}

#define DPF_INSTANTIATE_OPS(T)                                                       \
  template Var<T> add(Var<T>, Var<T>);                                               \
  template Var<T> mul(Var<T>, Var<T>);                                               \
  template Var<T> scale(Var<T>, T);                                                  \
  template Var<T> sum(Var<T>);                                                       \
  template Var<T> relu(Var<T>);                                                      \
  template Var<T> sigmoid_range(Var<T>, T, T);                                       \
  template Var<T> linear(Var<T>, Var<T>, Var<T>);                                    \
  template Var<T> conv2d(Var<T>, Var<T>, Var<T>, int, int);                          \
  template Var<T> sample_taps(Var<T>, const TapTable&);                              \
  template Var<T> concat_cols(const std::vector<Var<T>>&);                           \
  template Var<T> softmax_rows(Var<T>);                                              \
  template Var<T> softmax_interpolate(Var<T>, std::size_t);                          \
  template BasicTensor<T> group_softmax_weights(const BasicTensor<T>&, std::size_t); \
  template Var<T> cross_entropy(Var<T>, std::span<const int>);

DPF_INSTANTIATE_OPS(float)
DPF_INSTANTIATE_OPS(double)

}  // namespace dpf::nn
