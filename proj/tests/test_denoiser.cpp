// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "reduet/denoiser.hpp"
#include "reduet/gradcheck.hpp"

using namespace rd;

namespace {

Mat<double> randm(Rng& rng, Index r, Index c, double scale = 1.0) {
  Mat<double> m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  return m;
}

DenoiserConfig tiny_config() {
  DenoiserConfig cfg;
  cfg.depth = 1;
  cfg.width = 16;
  cfg.heads = 2;
  cfg.stages = 2;
  cfg.token_dim = 6;
  cfg.music_dim = 3;
  cfg.music_stack = 4;
  cfg.d_music = 4;
  cfg.d_lead = 4;
  cfg.h_lead = 4;
  cfg.d_cross = 4;
  cfg.d_temb = 4;
  cfg.mlp_ratio = 2;
  cfg.lead_in_dims = 5;
  return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("denoiser");

TEST_CASE("phase encoding hits the block anchors and repeats per block") {
  const Index T = 8;
  Mat<double> pe = phase_pe_matrix<double>(3 * T, T);
  CHECK(pe(0, 0) == 0.0);
  CHECK(pe(0, 1) == 1.0);
  CHECK(pe(T, 0) == pe(0, 0));
  CHECK(pe(T, 1) == pe(0, 1));
  CHECK(pe(T / 2, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(pe(T / 2, 1)) < 1e-15);
  for (Index i = 0; i + T < pe.rows(); ++i) {
    CHECK(pe(i, 0) == pe(i + T, 0));
    CHECK(pe(i, 1) == pe(i + T, 1));
  }
  // odd block length as well
  Mat<double> po = phase_pe_matrix<double>(10, 5);
  for (Index i = 0; i < 5; ++i) {
    CHECK(po(i, 0) == po(i + 5, 0));
    CHECK(po(i, 1) == po(i + 5, 1));
  }
}

TEST_CASE("periodic causal mask enumerates exactly the in-block causal pairs") {
  auto m = block_causal_mask(4, 2);
  const std::vector<std::pair<Index, Index>> kept = {{0, 0}, {1, 0}, {1, 1},
                                                     {2, 2}, {3, 2}, {3, 3}};
  Index count = 0;
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 4; ++j) {
      const bool expect =
          std::find(kept.begin(), kept.end(), std::make_pair(i, j)) != kept.end();
      CHECK((*m)(i, j) == expect);
      if ((*m)(i, j)) ++count;
    }
  CHECK(count == 6);

  // every diagonal entry stays unmasked, first cross-block pair is masked
  auto big = block_causal_mask(12, 3);
  for (Index i = 0; i < 12; ++i) CHECK((*big)(i, i));
  CHECK_FALSE((*big)(3, 2));

  // density: c blocks of length T keep c * T * (T + 1) / 2 pairs
  for (const auto& [K, T] : std::vector<std::pair<Index, Index>>{
           {8, 2}, {12, 3}, {6, 6}, {6, 1}, {60, 60}}) {
    auto mm = block_causal_mask(K, T);
    Index c = 0;
    for (Index i = 0; i < K; ++i)
      for (Index j = 0; j < K; ++j)
        if ((*mm)(i, j)) ++c;
    CHECK(c == (K / T) * T * (T + 1) / 2);
  }

  CHECK_THROWS_AS(block_causal_mask(5, 2), InvalidArgument);
}

TEST_CASE("timestep embedding is a fixed finite row of paired waves") {
  Mat<double> e0 = timestep_embedding<double>(0, 8);
  CHECK(e0.rows() == 1);
  CHECK(e0.cols() == 8);
  for (int k = 0; k < 4; ++k) {
    CHECK(e0(0, k) == 0.0);
    CHECK(e0(0, 4 + k) == 1.0);
  }
  Mat<double> e1 = timestep_embedding<double>(37, 8);
  CHECK(all_finite(e1));
  for (int k = 0; k < 8; ++k) CHECK(std::abs(e1(0, k)) <= 1.0);
  CHECK_THROWS_AS(timestep_embedding<double>(1, 7), InvalidArgument);
}

TEST_CASE("row stacking folds consecutive frames into wider rows") {
  Mat<double> raw(4, 2);
  raw << 1, 2, 3, 4, 5, 6, 7, 8;
  Mat<double> s = stack_rows(raw, 2);
  CHECK(s.rows() == 2);
  CHECK(s.cols() == 4);
  CHECK(s(0, 0) == 1.0);
  CHECK(s(0, 1) == 2.0);
  CHECK(s(0, 2) == 3.0);
  CHECK(s(0, 3) == 4.0);
  CHECK(s(1, 0) == 5.0);
  CHECK(s(1, 3) == 8.0);
  CHECK_THROWS_AS(stack_rows(raw, 3), InvalidArgument);
}

TEST_CASE("leader encoder downsamples four to one and is deterministic") {
  DenoiserConfig cfg = tiny_config();
  cfg.lead_in_dims = 63;
  Rng init(41);
  ParamStore<double> store;
  declare_denoiser(store, cfg, init);
  Rng data(42);
  Mat<double> locals = randm(data, 240, 63, 0.5);
  auto run = [&] {
    Graph<double> g;
    auto p = bind_params(g, store, false);
    return Mat<double>(g.val(encode_leader_graph(g, p, cfg, g.constant(locals))));
  };
  Mat<double> a = run();
  CHECK(a.rows() == 60);
  CHECK(a.cols() == cfg.d_lead);
  CHECK(all_finite(a));
  Mat<double> b = run();
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);

  Graph<double> g;
  auto p = bind_params(g, store, false);
  CHECK_THROWS_AS(encode_leader_graph(g, p, cfg, g.constant(randm(data, 10, 63))),
                  InvalidArgument);
}

TEST_CASE("denoise is a pure function of its inputs") {
  DenoiserConfig cfg = tiny_config();
  BlcSpec blc{2, 4};
  Rng init(43);
  ParamStore<double> store;
  declare_denoiser(store, cfg, init);
  Rng data(44);
  const Mat<double> x = randm(data, 4, cfg.x_dim());
  const Mat<double> music = randm(data, 4, cfg.music_cols());
  const Mat<double> lead = randm(data, 4, cfg.d_lead);
  auto run = [&] {
    Graph<double> g;
    auto p = bind_params(g, store, false);
    return Mat<double>(g.val(denoise_graph(g, p, cfg, blc, g.constant(x), 7, g.constant(music),
                                           g.constant(lead), {true, true})));
  };
  Mat<double> a = run();
  Mat<double> b = run();
  CHECK(a.rows() == 4);
  CHECK(a.cols() == cfg.x_dim());
  CHECK(all_finite(a));
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("perturbing one block leaves the other block's output bit-identical") {
  DenoiserConfig cfg = tiny_config();
  const Index T = 3;
  BlcSpec blc{T, 2 * T};
  Rng init(45);
  ParamStore<double> store;
  declare_denoiser(store, cfg, init);
  Rng data(46);
  Mat<double> x = randm(data, 2 * T, cfg.x_dim());
  Mat<double> music = randm(data, 2 * T, cfg.music_cols());
  Mat<double> lead = randm(data, 2 * T, cfg.d_lead);
  auto run = [&](const Mat<double>& xs, const Mat<double>& ms, const Mat<double>& ls) {
    Graph<double> g;
    auto p = bind_params(g, store, false);
    return Mat<double>(g.val(denoise_graph(g, p, cfg, blc, g.constant(xs), 11, g.constant(ms),
                                           g.constant(ls), {true, true})));
  };
  Mat<double> base = run(x, music, lead);

  Mat<double> x2 = x, m2 = music, l2 = lead;
  x2.bottomRows(T).array() += 3.0;
  m2.bottomRows(T).array() -= 2.0;
  l2.bottomRows(T).array() *= -1.5;
  Mat<double> out = run(x2, m2, l2);
  CHECK((out.topRows(T) - base.topRows(T)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((out.bottomRows(T) - base.bottomRows(T)).cwiseAbs().maxCoeff() > 0.0);

  // and symmetrically for the first block
  Mat<double> x3 = x;
  x3.topRows(T).array() += 1.0;
  Mat<double> out3 = run(x3, music, lead);
  CHECK((out3.bottomRows(T) - base.bottomRows(T)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("with every stage dropped the output ignores music and leader content") {
  DenoiserConfig cfg = tiny_config();
  BlcSpec blc{2, 4};
  Rng init(47);
  ParamStore<double> store;
  declare_denoiser(store, cfg, init);
  Rng data(48);
  const Mat<double> x = randm(data, 4, cfg.x_dim());
  auto run = [&](const Mat<double>& ms, const Mat<double>& ls,
                 const std::vector<bool>& mask) {
    Graph<double> g;
    auto p = bind_params(g, store, false);
    return Mat<double>(g.val(denoise_graph(g, p, cfg, blc, g.constant(x), 3, g.constant(ms),
                                           g.constant(ls), mask)));
  };
  Mat<double> m1 = randm(data, 4, cfg.music_cols());
  Mat<double> l1 = randm(data, 4, cfg.d_lead);
  Mat<double> m2 = randm(data, 4, cfg.music_cols());
  Mat<double> l2 = randm(data, 4, cfg.d_lead);
  Mat<double> a = run(m1, l1, {false, false});
  Mat<double> b = run(m2, l2, {false, false});
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  // with conditioning on, content matters
  Mat<double> c = run(m1, l1, {true, true});
  Mat<double> d = run(m2, l2, {true, true});
  CHECK((c - d).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("shape and config violations are rejected") {
  DenoiserConfig cfg = tiny_config();
  BlcSpec blc{2, 4};
  Rng init(49);
  ParamStore<double> store;
  declare_denoiser(store, cfg, init);
  Graph<double> g;
  auto p = bind_params(g, store, false);
  Rng data(50);
  const int x = g.constant(randm(data, 4, cfg.x_dim()));
  const int music = g.constant(randm(data, 4, cfg.music_cols()));
  const int lead = g.constant(randm(data, 4, cfg.d_lead));
  const int bad_x = g.constant(randm(data, 4, cfg.x_dim() + 1));
  const int bad_music = g.constant(randm(data, 3, cfg.music_cols()));
  CHECK_THROWS_AS(denoise_graph(g, p, cfg, blc, bad_x, 1, music, lead, {true, true}),
                  InvalidArgument);
  CHECK_THROWS_AS(denoise_graph(g, p, cfg, blc, x, 1, bad_music, lead, {true, true}),
                  InvalidArgument);
  CHECK_THROWS_AS(denoise_graph(g, p, cfg, blc, x, 1, music, lead, {true}), InvalidArgument);
  CHECK_THROWS_AS(denoise_graph(g, p, cfg, BlcSpec{3, 4}, x, 1, music, lead, {true, true}),
                  InvalidArgument);
  DenoiserConfig bad = cfg;
  bad.width = 15;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("denoiser gradients match finite differences") {
  DenoiserConfig cfg = tiny_config();
  BlcSpec blc{2, 4};
  Rng init(51);
  ParamStore<double> store;
  declare_denoiser(store, cfg, init);
  // give the null rows nonzero values so their gradient paths are live
  store.entry(store.index_of("null_music.s1")).value.setConstant(0.3);
  store.entry(store.index_of("null_lead.s1")).value.setConstant(-0.2);

  Rng data(52);
  const Mat<double> x = randm(data, 4, cfg.x_dim(), 0.5);
  const Mat<double> music_raw = randm(data, 16, cfg.music_dim, 0.5);
  const Mat<double> lead_raw = randm(data, 16, cfg.lead_in_dims, 0.5);
  const Mat<double> target = randm(data, 4, cfg.x_dim(), 0.5);
  const Mat<double> music = stack_rows(music_raw, cfg.music_stack);

  auto build = [&](Graph<double>& g, const BoundParams<double>& p) {
    const int lead = encode_leader_graph(g, p, cfg, g.constant(lead_raw));
    const int out = denoise_graph(g, p, cfg, blc, g.constant(x), 9, g.constant(music), lead,
                                  {true, false});
    const int err = g.sub(out, g.constant(target));
    return g.mean_all(g.mul(err, err));
  };
  Rng pick(53);
  auto rep = gradcheck(store, build, 2, pick);
  CHECK(rep.checked >= 2 * store.count());
  CHECK_MESSAGE(rep.max_rel_err < 1e-4, "worst: ", rep.worst_param);
}

TEST_SUITE_END();
