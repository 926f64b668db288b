// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <memory>
#include <string>

#include "reduet/graph.hpp"

namespace rd {

// Layer helpers come in pairs: declare_* registers parameters on the
// store (fixing creation order, hence init draws and serialization),
// and the builder of the same name emits graph ops from bound params.

template <typename S>
void declare_dense(ParamStore<S>& store, const std::string& name, Index in, Index out, Rng& rng) {
  store.add_uniform(name + ".w", in, out, std::sqrt(1.0 / static_cast<double>(in)), rng);
  store.add_constant(name + ".b", 1, out, 0.0);
}

template <typename S>
int dense(Graph<S>& g, const BoundParams<S>& p, const std::string& name, int x) {
  return g.add_row(g.matmul(x, p.id(name + ".w")), p.id(name + ".b"));
}

template <typename S>
void declare_conv(ParamStore<S>& store, const std::string& name, Index cin, Index cout, int kernel,
                  Rng& rng) {
  store.add_uniform(name + ".w", static_cast<Index>(kernel) * cin, cout,
                    std::sqrt(1.0 / static_cast<double>(kernel * cin)), rng);
  store.add_constant(name + ".b", 1, cout, 0.0);
}

template <typename S>
int conv(Graph<S>& g, const BoundParams<S>& p, const std::string& name, int x, int kernel,
         int stride, int pad) {
  return g.conv1d(x, p.id(name + ".w"), p.id(name + ".b"), kernel, stride, pad);
}

template <typename S>
void declare_layernorm(ParamStore<S>& store, const std::string& name, Index dim) {
  store.add_constant(name + ".gain", 1, dim, 1.0);
  store.add_constant(name + ".bias", 1, dim, 0.0);
}

template <typename S>
int layernorm(Graph<S>& g, const BoundParams<S>& p, const std::string& name, int x,
              S eps = S(1e-5)) {
  return g.layernorm(x, p.id(name + ".gain"), p.id(name + ".bias"), eps);
}

// ---- feature-wise modulation ----

// out = gamma .* x + beta, all row-aligned matrices
template <typename S>
int film_modulate(Graph<S>& g, int x, int gamma, int beta) {
  return g.add(g.mul(x, gamma), beta);
}

template <typename S>
void declare_film(ParamStore<S>& store, const std::string& name, Index cond_dim, Index feat_dim,
                  Rng& rng) {
  declare_dense(store, name + ".gb", cond_dim, 2 * feat_dim, rng);
}

// gamma/beta are produced from cond by one dense map; gamma is offset by 1
// so a zero map leaves the features untouched
template <typename S>
int film(Graph<S>& g, const BoundParams<S>& p, const std::string& name, int x, int cond) {
  const Index feat = g.val(x).cols();
  const int gb = dense(g, p, name + ".gb", cond);
  const int gamma = g.shift(g.slice_cols(gb, 0, feat), S(1));
  const int beta = g.slice_cols(gb, feat, feat);
  return film_modulate(g, x, gamma, beta);
}

// ---- attention ----

// keep (i, j) iff both sit in the same period-sized block and j <= i
inline std::shared_ptr<MaskM> block_causal_mask(Index n, Index period) {
  require(period >= 1 && n % period == 0, "block_causal_mask: n must be a multiple of period");
  auto m = std::make_shared<MaskM>(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) (*m)(i, j) = (i / period == j / period) && j <= i;
  return m;
}

// keep (i, j) iff row block i/row_period equals column block j/col_period;
// pairs query blocks with memory blocks without any ordering constraint
inline std::shared_ptr<MaskM> block_diag_mask(Index rows, Index cols, Index row_period,
                                              Index col_period) {
  auto m = std::make_shared<MaskM>(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) (*m)(i, j) = (i / row_period) == (j / col_period);
  return m;
}

template <typename S>
void declare_self_attention(ParamStore<S>& store, const std::string& name, Index width, Rng& rng) {
  declare_dense(store, name + ".q", width, width, rng);
  declare_dense(store, name + ".k", width, width, rng);
  declare_dense(store, name + ".v", width, width, rng);
  declare_dense(store, name + ".o", width, width, rng);
}

template <typename S>
int self_attention(Graph<S>& g, const BoundParams<S>& p, const std::string& name, int x, int heads,
                   std::shared_ptr<const MaskM> mask) {
  const Index width = g.val(x).cols();
  require(width % heads == 0, "self_attention: width not divisible by heads");
  const Index dh = width / heads;
  const int q = dense(g, p, name + ".q", x);
  const int k = dense(g, p, name + ".k", x);
  const int v = dense(g, p, name + ".v", x);
  std::vector<int> outs;
  for (int h = 0; h < heads; ++h) {
    const int qh = g.slice_cols(q, h * dh, dh);
    const int kh = g.slice_cols(k, h * dh, dh);
    const int vh = g.slice_cols(v, h * dh, dh);
    const int scores = g.scale(g.matmul_nt(qh, kh), S(1.0 / std::sqrt(static_cast<double>(dh))));
    const int probs = g.softmax_masked(scores, mask);
    outs.push_back(g.matmul(probs, vh));
  }
  return dense(g, p, name + ".o", g.concat_cols(outs));
}

template <typename S>
void declare_cross_attention(ParamStore<S>& store, const std::string& name, Index q_in,
                             Index kv_in, Index attn_dim, Index out, Rng& rng) {
  declare_dense(store, name + ".q", q_in, attn_dim, rng);
  declare_dense(store, name + ".k", kv_in, attn_dim, rng);
  declare_dense(store, name + ".v", kv_in, attn_dim, rng);
  declare_dense(store, name + ".o", attn_dim, out, rng);
}

template <typename S>
int cross_attention(Graph<S>& g, const BoundParams<S>& p, const std::string& name, int xq, int xkv,
                    std::shared_ptr<const MaskM> mask) {
  const Index dh = g.val(p.id(name + ".q.w")).cols();
  const int q = dense(g, p, name + ".q", xq);
  const int k = dense(g, p, name + ".k", xkv);
  const int v = dense(g, p, name + ".v", xkv);
  const int scores = g.scale(g.matmul_nt(q, k), S(1.0 / std::sqrt(static_cast<double>(dh))));
  const int probs = g.softmax_masked(scores, mask);
  return dense(g, p, name + ".o", g.matmul(probs, v));
}

}  // namespace rd
