// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "reduet/core.hpp"
#include "reduet/fsq.hpp"

namespace rd {

using MaskM = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Reverse-mode tape over dense matrices. Values are computed eagerly as
// nodes are created; backward() replays registered closures in reverse
// creation order. A node participates in the backward sweep only if at
// least one of its inputs wants gradients, so frozen sub-networks pass
// gradients through without accumulating any.
template <typename S>
class Graph {
 public:
  using M = Mat<S>;

  struct Node {
    M value;
    M grad;  // empty until touched by backward
    bool needs_grad = false;
    std::function<void(Graph&)> backward;
  };

  int size() const { return static_cast<int>(nodes_.size()); }
  const M& val(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const M& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

  int leaf(M value, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return size() - 1;
  }
  int constant(M value) { return leaf(std::move(value), false); }

  template <typename E>
  void accum(int id, const Eigen::MatrixBase<E>& delta) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0)
      n.grad = delta;
    else
      n.grad += delta;
  }

  void backward(int loss) {
    require(val(loss).rows() == 1 && val(loss).cols() == 1, "backward: loss must be 1x1");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    nodes_[static_cast<std::size_t>(loss)].grad = M::Ones(1, 1);
    for (int i = loss; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.needs_grad && n.grad.size() != 0 && n.backward) n.backward(*this);
    }
  }

  // ---- elementwise and linear ----

  int add(int a, int b) {
    require(same_shape(a, b), "add: shape mismatch");
    return make(val(a) + val(b), {a, b}, [a, b](Graph& g) {
      const M& gr = g.grad_ref();
      g.accum(a, gr);
      g.accum(b, gr);
    });
  }

  int sub(int a, int b) {
    require(same_shape(a, b), "sub: shape mismatch");
    return make(val(a) - val(b), {a, b}, [a, b](Graph& g) {
      const M& gr = g.grad_ref();
      g.accum(a, gr);
      g.accum(b, -gr);
    });
  }

  int mul(int a, int b) {
    require(same_shape(a, b), "mul: shape mismatch");
    return make(val(a).cwiseProduct(val(b)), {a, b}, [a, b](Graph& g) {
      const M& gr = g.grad_ref();
      g.accum(a, gr.cwiseProduct(g.val(b)));
      g.accum(b, gr.cwiseProduct(g.val(a)));
    });
  }

  int scale(int a, S alpha) {
    return make(val(a) * alpha, {a}, [a, alpha](Graph& g) {
      g.accum(a, g.grad_ref() * alpha);
    });
  }

  int mul_const(int a, M weights) {
    require(weights.rows() == val(a).rows() && weights.cols() == val(a).cols(),
            "mul_const: shape mismatch");
    auto w = std::make_shared<M>(std::move(weights));
    return make(val(a).cwiseProduct(*w), {a}, [a, w](Graph& g) {
      g.accum(a, g.grad_ref().cwiseProduct(*w));
    });
  }

  int add_const(int a, M offset) {
    require(offset.rows() == val(a).rows() && offset.cols() == val(a).cols(),
            "add_const: shape mismatch");
    return make(val(a) + offset, {a}, [a](Graph& g) { g.accum(a, g.grad_ref()); });
  }

  int shift(int a, S c) {
    return make((val(a).array() + c).matrix(), {a},
                [a](Graph& g) { g.accum(a, g.grad_ref()); });
  }

  int matmul(int a, int b) {
    require(val(a).cols() == val(b).rows(), "matmul: inner dim mismatch");
    return make(val(a) * val(b), {a, b}, [a, b](Graph& g) {
      const M& gr = g.grad_ref();
      g.accum(a, gr * g.val(b).transpose());
      g.accum(b, g.val(a).transpose() * gr);
    });
  }

  // a * b^T
  int matmul_nt(int a, int b) {
    require(val(a).cols() == val(b).cols(), "matmul_nt: inner dim mismatch");
    return make(val(a) * val(b).transpose(), {a, b}, [a, b](Graph& g) {
      const M& gr = g.grad_ref();
      g.accum(a, gr * g.val(b));
      g.accum(b, gr.transpose() * g.val(a));
    });
  }

  // broadcast a 1 x m row across every row of a
  int add_row(int a, int row) {
    require(val(row).rows() == 1 && val(row).cols() == val(a).cols(), "add_row: need 1 x cols");
    return make(val(a).rowwise() + RowVec<S>(val(row).row(0)), {a, row}, [a, row](Graph& g) {
      const M& gr = g.grad_ref();
      g.accum(a, gr);
      g.accum(row, gr.colwise().sum());
    });
  }

  int repeat_rows(int a, Index n) {
    require(val(a).rows() == 1, "repeat_rows: input must be a single row");
    return make(val(a).replicate(n, 1), {a}, [a](Graph& g) {
      g.accum(a, g.grad_ref().colwise().sum());
    });
  }

  int tanh_(int a) {
    M v = val(a).array().tanh();
    auto vv = std::make_shared<M>(std::move(v));
    return make(*vv, {a}, [a, vv](Graph& g) {
      g.accum(a, g.grad_ref().cwiseProduct(
                     (M::Ones(vv->rows(), vv->cols()) - vv->cwiseProduct(*vv))));
    });
  }

  int gelu(int a) {
    const M& x = val(a);
    M v(x.rows(), x.cols());
    for (Index i = 0; i < x.size(); ++i) {
      const double xd = static_cast<double>(x(i));
      v(i) = static_cast<S>(0.5 * xd * (1.0 + std::erf(xd * 0.7071067811865476)));
    }
    return make(std::move(v), {a}, [a](Graph& g) {
      const M& xx = g.val(a);
      const M& gr = g.grad_ref();
      M d(xx.rows(), xx.cols());
      for (Index i = 0; i < xx.size(); ++i) {
        const double xd = static_cast<double>(xx(i));
        const double cdf = 0.5 * (1.0 + std::erf(xd * 0.7071067811865476));
        const double pdf = 0.3989422804014327 * std::exp(-0.5 * xd * xd);
        d(i) = static_cast<S>(cdf + xd * pdf);
      }
      g.accum(a, gr.cwiseProduct(d));
    });
  }

  int abs_(int a) {
    return make(val(a).cwiseAbs(), {a}, [a](Graph& g) {
      const M& x = g.val(a);
      M sign(x.rows(), x.cols());
      for (Index i = 0; i < x.size(); ++i)
        sign(i) = x(i) > S(0) ? S(1) : (x(i) < S(0) ? S(-1) : S(0));
      g.accum(a, g.grad_ref().cwiseProduct(sign));
    });
  }

  // sqrt(x^2 + eps^2) - eps: tracks |x| within eps, is exactly zero at
  // zero, and stays smooth for finite-difference validation
  int smooth_abs(int a, S eps) {
    const M& x = val(a);
    M v = ((x.array().square() + eps * eps).sqrt() - eps).matrix();
    return make(std::move(v), {a}, [a, eps](Graph& g) {
      const M& x2 = g.val(a);
      M d = (x2.array() / (x2.array().square() + eps * eps).sqrt()).matrix();
      g.accum(a, g.grad_ref().cwiseProduct(d));
    });
  }

  // rowwise L2 norm with a smoothing floor; output is T x 1
  int rownorm(int a, S eps) {
    const M& x = val(a);
    M v(x.rows(), 1);
    for (Index i = 0; i < x.rows(); ++i)
      v(i, 0) = std::sqrt(x.row(i).squaredNorm() + eps);
    auto vv = std::make_shared<M>(std::move(v));
    return make(*vv, {a}, [a, vv](Graph& g) {
      const M& x2 = g.val(a);
      const M& gr = g.grad_ref();
      M d(x2.rows(), x2.cols());
      for (Index i = 0; i < x2.rows(); ++i)
        d.row(i) = (gr(i, 0) / (*vv)(i, 0)) * x2.row(i);
      g.accum(a, d);
    });
  }

  // rows scaled to unit length with the same smooth floor as
  // unit_rows_mat
  int unit_rows(int a, S eps) {
    const M& x = val(a);
    M v = unit_rows_mat(x, eps);
    ColVec<S> s(x.rows());
    for (Index i = 0; i < x.rows(); ++i)
      s(i) = std::sqrt(x.row(i).squaredNorm() + eps * eps);
    auto vv = std::make_shared<M>(std::move(v));
    auto ss = std::make_shared<ColVec<S>>(std::move(s));
    return make(*vv, {a}, [a, vv, ss](Graph& g) {
      const M& gr = g.grad_ref();
      M d(gr.rows(), gr.cols());
      for (Index i = 0; i < gr.rows(); ++i) {
        const auto u = vv->row(i);
        d.row(i) = (gr.row(i) - u * u.dot(gr.row(i))) / (*ss)(i);
      }
      g.accum(a, d);
    });
  }

  int stopgrad(int a) { return constant(val(a)); }

  // ---- normalization, attention, loss reductions ----

  int layernorm(int x, int gain, int bias, S eps) {
    const M& xv = val(x);
    const Index m = xv.cols();
    require(val(gain).rows() == 1 && val(gain).cols() == m, "layernorm: gain must be 1 x cols");
    require(val(bias).rows() == 1 && val(bias).cols() == m, "layernorm: bias must be 1 x cols");
    ColVec<S> mu = xv.rowwise().mean();
    M centered = xv.colwise() - mu;
    ColVec<S> var = centered.cwiseProduct(centered).rowwise().mean();
    ColVec<S> inv = (var.array() + eps).rsqrt().matrix();
    auto xh = std::make_shared<M>((centered.array().colwise() * inv.array()).matrix());
    auto iv = std::make_shared<ColVec<S>>(std::move(inv));
    RowVec<S> gain_row = val(gain).row(0);
    RowVec<S> bias_row = val(bias).row(0);
    M v = ((xh->array().rowwise() * gain_row.array()).rowwise() + bias_row.array()).matrix();
    return make(std::move(v), {x, gain, bias}, [x, gain, bias, xh, iv, m](Graph& g) {
      const M& gr = g.grad_ref();
      g.accum(gain, (gr.cwiseProduct(*xh)).colwise().sum());
      g.accum(bias, gr.colwise().sum());
      RowVec<S> gv = g.val(gain).row(0);
      M dxhat = (gr.array().rowwise() * gv.array()).matrix();
      ColVec<S> row_a = dxhat.rowwise().sum() / static_cast<S>(m);
      ColVec<S> row_ah = dxhat.cwiseProduct(*xh).rowwise().sum() / static_cast<S>(m);
      M dx = dxhat;
      dx.noalias() -= row_a * RowVec<S>::Ones(m);
      dx -= (xh->array().colwise() * row_ah.array()).matrix();
      dx = (dx.array().colwise() * iv->array()).matrix();
      g.accum(x, dx);
    });
  }

  // Rowwise softmax over the entries flagged true; excluded entries get
  // probability exactly zero and a fully excluded row comes out all
  // zeros.
  int softmax_masked(int a, std::shared_ptr<const MaskM> mask) {
    const M& x = val(a);
    require(mask && mask->rows() == x.rows() && mask->cols() == x.cols(),
            "softmax_masked: mask shape mismatch");
    M p(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
      S mx = std::numeric_limits<S>::lowest();
      bool any = false;
      for (Index j = 0; j < x.cols(); ++j)
        if ((*mask)(i, j)) {
          any = true;
          if (x(i, j) > mx) mx = x(i, j);
        }
      if (!any) {
        p.row(i).setZero();
        continue;
      }
      S sum = 0;
      for (Index j = 0; j < x.cols(); ++j) {
        const S e = (*mask)(i, j) ? std::exp(x(i, j) - mx) : S(0);
        p(i, j) = e;
        sum += e;
      }
      p.row(i) /= sum;
    }
    auto pp = std::make_shared<M>(std::move(p));
    return make(*pp, {a}, [a, pp](Graph& g) {
      const M& gr = g.grad_ref();
      ColVec<S> dot = gr.cwiseProduct(*pp).rowwise().sum();
      M d = pp->cwiseProduct(gr.colwise() - dot);
      g.accum(a, d);
    });
  }

  int mean_all(int a) {
    const Index r = val(a).rows(), c = val(a).cols();
    M v(1, 1);
    v(0, 0) = val(a).mean();
    return make(std::move(v), {a}, [a, r, c](Graph& g) {
      g.accum(a, M::Constant(r, c, g.grad_ref()(0, 0) / static_cast<S>(r * c)));
    });
  }

  int sum_all(int a) {
    const Index r = val(a).rows(), c = val(a).cols();
    M v(1, 1);
    v(0, 0) = val(a).sum();
    return make(std::move(v), {a}, [a, r, c](Graph& g) {
      g.accum(a, M::Constant(r, c, g.grad_ref()(0, 0)));
    });
  }

  // ---- shape ops ----

  int slice_cols(int a, Index start, Index len) {
    require(start >= 0 && start + len <= val(a).cols(), "slice_cols: out of range");
    const Index r = val(a).rows(), c = val(a).cols();
    return make(val(a).middleCols(start, len), {a}, [a, start, len, r, c](Graph& g) {
      M d = M::Zero(r, c);
      d.middleCols(start, len) = g.grad_ref();
      g.accum(a, d);
    });
  }

  int concat_cols(const std::vector<int>& parts) {
    require(!parts.empty(), "concat_cols: empty");
    Index cols = 0;
    const Index rows = val(parts[0]).rows();
    for (int p : parts) {
      require(val(p).rows() == rows, "concat_cols: row mismatch");
      cols += val(p).cols();
    }
    M v(rows, cols);
    Index at = 0;
    for (int p : parts) {
      v.middleCols(at, val(p).cols()) = val(p);
      at += val(p).cols();
    }
    auto ps = std::make_shared<std::vector<int>>(parts);
    return make(std::move(v), parts, [ps](Graph& g) {
      const M& gr = g.grad_ref();
      Index at2 = 0;
      for (int p : *ps) {
        const Index w = g.val(p).cols();
        g.accum(p, gr.middleCols(at2, w));
        at2 += w;
      }
    });
  }

  // first difference along time: out row t = in row t+1 - in row t
  int tdiff(int a) {
    const Index r = val(a).rows(), c = val(a).cols();
    require(r >= 2, "tdiff: need at least two rows");
    return make(M(val(a).bottomRows(r - 1) - val(a).topRows(r - 1)), {a}, [a, r, c](Graph& g) {
      const M& gr = g.grad_ref();
      M d = M::Zero(r, c);
      d.topRows(r - 1) -= gr;
      d.bottomRows(r - 1) += gr;
      g.accum(a, d);
    });
  }

  // nearest-neighbor upsample by 2 along time
  int upsample2(int a) {
    const M& x = val(a);
    M v(2 * x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
      v.row(2 * i) = x.row(i);
      v.row(2 * i + 1) = x.row(i);
    }
    const Index r = x.rows();
    return make(std::move(v), {a}, [a, r](Graph& g) {
      const M& gr = g.grad_ref();
      M d(r, gr.cols());
      for (Index i = 0; i < r; ++i) d.row(i) = gr.row(2 * i) + gr.row(2 * i + 1);
      g.accum(a, d);
    });
  }

  // 1-d convolution along time. x is T x Cin; w is (k*Cin) x Cout with
  // rows ordered tap-major; b is 1 x Cout. Zero padding.
  int conv1d(int x, int w, int b, int kernel, int stride, int pad) {
    const M& xv = val(x);
    const Index t_in = xv.rows(), cin = xv.cols();
    require(val(w).rows() == static_cast<Index>(kernel) * cin, "conv1d: weight rows mismatch");
    const Index cout = val(w).cols();
    require(val(b).rows() == 1 && val(b).cols() == cout, "conv1d: bias shape mismatch");
    const Index t_out = (t_in + 2 * pad - kernel) / stride + 1;
    require(t_out >= 1, "conv1d: output length must be positive");

    M patches = M::Zero(t_out, static_cast<Index>(kernel) * cin);
    for (Index o = 0; o < t_out; ++o) {
      const Index start = o * stride - pad;
      for (int tap = 0; tap < kernel; ++tap) {
        const Index r = start + tap;
        if (r >= 0 && r < t_in) patches.block(o, static_cast<Index>(tap) * cin, 1, cin) = xv.row(r);
      }
    }
    auto pt = std::make_shared<M>(std::move(patches));
    M v = (*pt * val(w)).rowwise() + RowVec<S>(val(b).row(0));
    return make(std::move(v), {x, w, b},
                [x, w, b, pt, kernel, stride, pad, t_in, cin, t_out](Graph& g) {
                  const M& gr = g.grad_ref();
                  g.accum(w, pt->transpose() * gr);
                  g.accum(b, gr.colwise().sum());
                  if (!g.needs_grad(x)) return;
                  M dpatch = gr * g.val(w).transpose();
                  M dx = M::Zero(t_in, cin);
                  for (Index o = 0; o < t_out; ++o) {
                    const Index start = o * stride - pad;
                    for (int tap = 0; tap < kernel; ++tap) {
                      const Index r = start + tap;
                      if (r >= 0 && r < t_in)
                        dx.row(r) += dpatch.block(o, static_cast<Index>(tap) * cin, 1, cin);
                    }
                  }
                  g.accum(x, dx);
                });
  }

  // ---- quantization ----

  // h_j * tanh(gain * z_j) with the level pattern tiled across columns
  int fsq_bound_op(int a, const FsqSpec& spec, S gain) {
    M v = fsq_bound(val(a), spec, gain);
    auto vv = std::make_shared<M>(v);
    auto levels = std::make_shared<std::vector<int>>(fsq_levels_for_cols(spec, v.cols()));
    return make(std::move(v), {a}, [a, vv, levels, gain](Graph& g) {
      const M& gr = g.grad_ref();
      M d(vv->rows(), vv->cols());
      for (Index j = 0; j < vv->cols(); ++j) {
        const S h = static_cast<S>(fsq_half_width((*levels)[static_cast<std::size_t>(j)]));
        d.col(j) = (gain * (h - vv->col(j).array().square() / h)).matrix();
      }
      g.accum(a, gr.cwiseProduct(d));
    });
  }

  // Snap to the quantizer grid with a straight-through backward pass.
  // With quantize=false the forward pass is the identity (divided by the
  // half width so outputs stay in value space), which makes the whole
  // network an ordinary smooth function for gradient checking.
  int snap_ste(int a, const FsqSpec& spec, bool quantize) {
    const auto levels = fsq_levels_for_cols(spec, val(a).cols());
    M v(val(a).rows(), val(a).cols());
    if (quantize) {
      v = fsq_quantize_values(val(a), spec);
    } else {
      for (Index j = 0; j < v.cols(); ++j)
        v.col(j) = val(a).col(j) / static_cast<S>(fsq_half_width(levels[static_cast<std::size_t>(j)]));
    }
    auto lv = std::make_shared<std::vector<int>>(levels);
    return make(std::move(v), {a}, [a, lv](Graph& g) {
      const M& gr = g.grad_ref();
      M d(gr.rows(), gr.cols());
      for (Index j = 0; j < gr.cols(); ++j)
        d.col(j) = gr.col(j) / static_cast<S>(fsq_half_width((*lv)[static_cast<std::size_t>(j)]));
      g.accum(a, d);
    });
  }

 private:
  bool same_shape(int a, int b) const {
    return val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols();
  }

  int make(M value, const std::vector<int>& inputs, std::function<void(Graph&)> bwd) {
    Node n;
    n.value = std::move(value);
    for (int i : inputs)
      if (nodes_[static_cast<std::size_t>(i)].needs_grad) n.needs_grad = true;
    if (n.needs_grad) {
      const int self = size();
      n.backward = [self, fn = std::move(bwd)](Graph& g) {
        g.current_ = self;
        fn(g);
      };
    }
    nodes_.push_back(std::move(n));
    return size() - 1;
  }

  // gradient of the node whose backward closure is currently running
  const M& grad_ref() const { return nodes_[static_cast<std::size_t>(current_)].grad; }

  std::vector<Node> nodes_;
  int current_ = -1;
};

// Named trainable tensors with deterministic creation order; the order
// fixes both initialization draws and on-disk layout.
template <typename S>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Mat<S> value;
    Mat<S> grad;
  };

  int add_uniform(const std::string& name, Index rows, Index cols, double scale, Rng& rng) {
    Mat<S> v(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) v(i, j) = static_cast<S>(rng.uniform(-scale, scale));
    return add(name, std::move(v));
  }
  int add_constant(const std::string& name, Index rows, Index cols, double fill) {
    return add(name, Mat<S>::Constant(rows, cols, static_cast<S>(fill)));
  }
  int add(const std::string& name, Mat<S> value) {
    require(index_.find(name) == index_.end(), "param already exists: " + name);
    index_[name] = static_cast<int>(entries_.size());
    entries_.push_back(Entry{name, std::move(value), Mat<S>()});
    return static_cast<int>(entries_.size()) - 1;
  }

  int count() const { return static_cast<int>(entries_.size()); }
  Entry& entry(int i) { return entries_[static_cast<std::size_t>(i)]; }
  const Entry& entry(int i) const { return entries_[static_cast<std::size_t>(i)]; }
  int index_of(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), "unknown param: " + name);
    return it->second;
  }
  Mat<S>& value(const std::string& name) { return entries_[static_cast<std::size_t>(index_of(name))].value; }
  const Mat<S>& value(const std::string& name) const {
    return entries_[static_cast<std::size_t>(index_of(name))].value;
  }

  void zero_grads() {
    for (auto& e : entries_) e.grad.resize(0, 0);
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
    return n;
  }

  template <typename T>
  ParamStore<T> cast() const {
    ParamStore<T> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<T>());
    return out;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, int> index_;
};

// One bind per forward build: every store entry becomes a graph leaf.
template <typename S>
struct BoundParams {
  Graph<S>* graph = nullptr;
  const ParamStore<S>* store = nullptr;
  std::vector<int> ids;

  int id(const std::string& name) const { return ids[static_cast<std::size_t>(store->index_of(name))]; }
};

template <typename S>
BoundParams<S> bind_params(Graph<S>& g, const ParamStore<S>& store, bool trainable) {
  BoundParams<S> b;
  b.graph = &g;
  b.store = &store;
  b.ids.reserve(static_cast<std::size_t>(store.count()));
  for (int i = 0; i < store.count(); ++i) b.ids.push_back(g.leaf(store.entry(i).value, trainable));
  return b;
}

// Pull gradients off the tape into the store (accumulating).
template <typename S>
void collect_grads(const Graph<S>& g, const BoundParams<S>& bound, ParamStore<S>& store) {
  for (int i = 0; i < store.count(); ++i) {
    const Mat<S>& gr = g.grad(bound.ids[static_cast<std::size_t>(i)]);
    if (gr.size() == 0) continue;
    auto& e = store.entry(i);
    if (e.grad.size() == 0)
      e.grad = gr;
    else
      e.grad += gr;
  }
}

}  // namespace rd
