// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "reduet/codec.hpp"
#include "reduet/gradcheck.hpp"
#include "reduet/hfsq.hpp"
#include "reduet/synth.hpp"

using namespace rd;

namespace {

template <typename S>
Mat<S> randm(Rng& rng, Index r, Index c, double scale = 1.0) {
  Mat<S> m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = static_cast<S>(scale * rng.normal());
  return m;
}

}  // namespace

TEST_SUITE_BEGIN("codec");

TEST_CASE_TEMPLATE("residual chain replays bit-exactly from codes", S, float, double) {
  HfsqConfig cfg;
  Rng rng(301);
  for (int trial = 0; trial < 8; ++trial) {
    Mat<S> v = randm<S>(rng, 60, 32, 1.2);
    HierLatent<S> q = hfsq_quantize(v, cfg);
    REQUIRE(q.codes.size() == 2);
    REQUIRE(q.values.size() == 2);

    Mat<S> res = v;
    for (int r = 0; r < cfg.stages; ++r) {
      Mat<S> vals = fsq_dequantize<S>(q.codes[static_cast<std::size_t>(r)], cfg.base);
      CHECK((vals - q.values[static_cast<std::size_t>(r)]).cwiseAbs().maxCoeff() == S(0));
      res = res - static_cast<S>(cfg.stage_scales[static_cast<std::size_t>(r)]) * vals;
    }
    CHECK((res - q.final_residual).cwiseAbs().maxCoeff() == S(0));

    Mat<S> agg = hfsq_decode_codes<S>(q.codes, cfg);
    CHECK((agg - q.aggregate).cwiseAbs().maxCoeff() == S(0));
    // aggregate plus residual approximates the input
    CHECK((q.aggregate + q.final_residual - v).cwiseAbs().maxCoeff() < S(1e-5));
  }
}

TEST_CASE("stage values live on their grids and codes are in range") {
  HfsqConfig cfg;
  Rng rng(302);
  Mat<double> v = randm<double>(rng, 40, 8, 2.0);
  auto q = hfsq_quantize(v, cfg);
  for (int r = 0; r < cfg.stages; ++r) {
    const auto& codes = q.codes[static_cast<std::size_t>(r)];
    const auto& vals = q.values[static_cast<std::size_t>(r)];
    CHECK((fsq_snap_values(vals, cfg.base) - vals).cwiseAbs().maxCoeff() == 0.0);
    for (Index i = 0; i < codes.rows(); ++i)
      for (Index j = 0; j < codes.cols(); ++j) {
        const int l = cfg.base.levels[static_cast<std::size_t>(j % 4)];
        CHECK(codes(i, j) >= 0);
        CHECK(codes(i, j) < l);
      }
    CHECK(vals.cwiseAbs().maxCoeff() <= 1.0);
  }
}

TEST_CASE("single-stage config degrades to plain quantization") {
  HfsqConfig cfg;
  cfg.stages = 1;
  Rng rng(303);
  Mat<double> v = randm<double>(rng, 12, 8);
  auto q = hfsq_quantize(v, cfg);
  CHECK(q.codes.size() == 1);
  CHECK((q.aggregate - q.values[0]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("masking identity configuration is exact") {
  HfsqConfig cfg;
  Rng rng(304);
  Mat<double> v = randm<double>(rng, 20, 8);
  auto q = hfsq_quantize(v, cfg);
  Rng mask_rng(1);
  auto m = progressive_mask(q, cfg, mask_rng, 0.0, 0.0, 0.0);
  for (int r = 0; r < cfg.stages; ++r)
    CHECK((m.values[static_cast<std::size_t>(r)] - q.values[static_cast<std::size_t>(r)])
              .cwiseAbs()
              .maxCoeff() == 0.0);
  CHECK((m.aggregate - q.aggregate).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forced residual drop zeroes stage 2 and keeps stage 1") {
  HfsqConfig cfg;
  Rng rng(305);
  Mat<double> v = randm<double>(rng, 20, 8);
  auto q = hfsq_quantize(v, cfg);
  Rng mask_rng(2);
  auto m = progressive_mask(q, cfg, mask_rng, 1.0, 0.0, 0.0);
  CHECK(m.values[1].cwiseAbs().maxCoeff() == 0.0);
  CHECK((m.values[0] - q.values[0]).cwiseAbs().maxCoeff() == 0.0);
  CHECK(q.values[1].cwiseAbs().maxCoeff() > 0.0);  // input had nonzero stage 2
}

TEST_CASE("residual drop rate matches the configured probability") {
  HfsqConfig cfg;
  Rng rng(306);
  Mat<double> v = randm<double>(rng, 1, 4, 1.5);
  auto q = hfsq_quantize(v, cfg);
  REQUIRE(q.values[1].cwiseAbs().maxCoeff() > 0.0);
  Rng mask_rng(40);
  int dropped = 0;
  const int trials = 100000;
  for (int i = 0; i < trials; ++i) {
    auto m = progressive_mask(q, cfg, mask_rng, 0.3, 0.05, 0.0);
    if (m.values[1].cwiseAbs().maxCoeff() == 0.0) ++dropped;
  }
  const double rate = static_cast<double>(dropped) / trials;
  CHECK(rate > 0.29);
  CHECK(rate < 0.31);
}

TEST_CASE("sub-dim masking zeroes roughly half the cap on average") {
  HfsqConfig cfg;
  Rng rng(307);
  Mat<double> v = randm<double>(rng, 50, 8, 1.5);
  auto q = hfsq_quantize(v, cfg);
  Rng mask_rng(41);
  double zero_frac = 0.0;
  const int trials = 400;
  for (int i = 0; i < trials; ++i) {
    auto m = progressive_mask(q, cfg, mask_rng, 0.0, 0.0, 0.2);
    int zeros = 0, nonzero_before = 0;
    for (Index k = 0; k < q.values[0].size(); ++k)
      if (q.values[0](k) != 0.0) {
        ++nonzero_before;
        if (m.values[0](k) == 0.0) ++zeros;
      }
    zero_frac += static_cast<double>(zeros) / nonzero_before;
  }
  zero_frac /= trials;
  // rho is uniform on [0, 0.2], so the long-run zero rate is near 0.1
  CHECK(zero_frac > 0.07);
  CHECK(zero_frac < 0.13);
}

TEST_CASE("graph quantizer matches the pure quantizer bit-for-bit") {
  CodecConfig cfg;
  cfg.hidden = 16;
  cfg.latent_upper = 16;
  cfg.latent_lower = 16;
  cfg.latent_rel = 8;
  Rng init(310);
  ParamStore<float> store;
  declare_codec(store, cfg, init);

  DuetParams dp;
  dp.seed = 7;
  dp.frames = 64;
  Duet duet = make_duet(dp);
  auto streams = decompose(duet.reactor, root_track(duet.leader));
  Mat<float> window = streams.upper.cast<float>();

  Graph<float> g;
  auto p = bind_params(g, store, false);
  const int v = codec_encode(g, p, "up", g.constant(window));
  CHECK(g.val(v).rows() == 16);
  CHECK(g.val(v).cols() == 16);
  auto qn = hfsq_quantize_graph(g, v, cfg.hfsq, true);
  auto qp = hfsq_quantize(Mat<float>(g.val(v)), cfg.hfsq);
  for (int r = 0; r < cfg.hfsq.stages; ++r)
    CHECK((g.val(qn.values[static_cast<std::size_t>(r)]) - qp.values[static_cast<std::size_t>(r)])
              .cwiseAbs()
              .maxCoeff() == 0.0f);
  CHECK((g.val(qn.aggregate) - qp.aggregate).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("decoder round trip has the right shapes at window scale") {
  CodecConfig cfg;
  cfg.hidden = 12;
  cfg.latent_upper = 8;
  cfg.latent_lower = 8;
  cfg.latent_rel = 8;
  Rng init(311);
  ParamStore<float> store;
  declare_codec(store, cfg, init);
  Rng data(312);
  Mat<float> x = randm<float>(data, 240, kUpperDims, 0.3);
  Mat<float> z = codec_encode_infer(store, "up", x);
  CHECK(z.rows() == 60);
  CHECK(z.cols() == 8);
  auto q = hfsq_quantize(z, cfg.hfsq);
  Mat<float> y = codec_decode_infer(store, "up", q.aggregate);
  CHECK(y.rows() == 240);
  CHECK(y.cols() == kUpperDims);
  CHECK(all_finite(y));
}

TEST_CASE("codec loss passes the gradient check with rounding bypassed") {
  CodecConfig cfg;
  cfg.hidden = 8;
  cfg.latent_upper = 8;
  cfg.latent_lower = 8;
  cfg.latent_rel = 8;
  cfg.quantize = false;
  Rng init(313);
  ParamStore<double> store;
  declare_codec(store, cfg, init);

  DuetParams dp;
  dp.seed = 9;
  dp.frames = 8;
  Duet duet = make_duet(dp);
  auto streams = decompose(duet.reactor, root_track(duet.leader));

  auto build = [&](Graph<double>& g, const BoundParams<double>& p) {
    Rng mask_rng(77);  // same draws every rebuild
    return codec_window_loss(g, p, cfg, streams, mask_rng);
  };
  Rng pick(314);
  auto rep = gradcheck(store, build, 3, pick);
  CHECK(rep.checked > 100);
  CHECK_MESSAGE(rep.max_rel_err < 1e-4, "worst: ", rep.worst_param);
}

TEST_CASE("codec loss with rounding flows gradients to encoder and decoder") {
  CodecConfig cfg;
  cfg.hidden = 8;
  cfg.latent_upper = 8;
  cfg.latent_lower = 8;
  cfg.latent_rel = 8;
  Rng init(315);
  ParamStore<float> store;
  declare_codec(store, cfg, init);

  DuetParams dp;
  dp.seed = 10;
  dp.frames = 16;
  Duet duet = make_duet(dp);
  auto sd = decompose(duet.reactor, root_track(duet.leader));
  BodyStreams<float> streams{sd.upper.cast<float>(), sd.lower.cast<float>(),
                             sd.rel_root.cast<float>()};

  Graph<float> g;
  auto p = bind_params(g, store, true);
  Rng mask_rng(78);
  const int loss = codec_window_loss(g, p, cfg, streams, mask_rng);
  CHECK(std::isfinite(g.val(loss)(0, 0)));
  g.backward(loss);
  store.zero_grads();
  collect_grads(g, p, store);
  double enc_gnorm = 0.0, dec_gnorm = 0.0;
  for (int i = 0; i < store.count(); ++i) {
    const auto& e = store.entry(i);
    if (e.grad.size() == 0) continue;
    const double n = e.grad.template cast<double>().norm();
    if (e.name.find(".enc") != std::string::npos) enc_gnorm += n;
    if (e.name.find(".dec") != std::string::npos) dec_gnorm += n;
  }
  CHECK(enc_gnorm > 0.0);
  CHECK(dec_gnorm > 0.0);
}

TEST_SUITE_END();
