// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <vector>

#include "reduet/diffusion.hpp"
#include "reduet/gradcheck.hpp"
#include "reduet/sampler.hpp"

using namespace rd;

namespace {

Mat<double> randm(Rng& rng, Index r, Index c, double scale = 1.0) {
  Mat<double> m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  return m;
}

CodecConfig tiny_codec() {
  CodecConfig c;
  c.hidden = 8;
  c.latent_upper = 8;
  c.latent_lower = 8;
  c.latent_rel = 4;
  return c;
}

DenoiserConfig tiny_denoiser() {
  DenoiserConfig d;
  d.depth = 1;
  d.width = 16;
  d.heads = 2;
  d.stages = 2;
  d.token_dim = 20;
  d.music_dim = 3;
  d.music_stack = 4;
  d.d_music = 4;
  d.d_lead = 4;
  d.h_lead = 4;
  d.d_cross = 4;
  d.d_temb = 4;
  d.mlp_ratio = 2;
  d.lead_in_dims = 63;
  return d;
}

DiffusionItem<double> make_item(Rng& rng, const DenoiserConfig& dn) {
  const Index lat = 4, frames = 16;
  DiffusionItem<double> item;
  item.x0 = Mat<double>(lat, dn.x_dim());
  for (Index i = 0; i < item.x0.size(); ++i) item.x0(i) = rng.uniform(-0.9, 0.9);
  item.music_lat = randm(rng, lat, dn.music_cols());
  item.lead_locals = randm(rng, frames, dn.lead_in_dims, 0.3);
  item.gt.upper = randm(rng, frames, kUpperDims, 0.3);
  item.gt.lower = randm(rng, frames, kLowerDims, 0.3);
  item.gt.rel_root = randm(rng, frames, 3, 0.3);
  item.gt.rel_root.col(0).array() += 1.0;
  item.ref_root = randm(rng, frames, 3, 0.1);
  return item;
}

}  // namespace

TEST_SUITE_BEGIN("diffusion");

TEST_CASE("noise schedules are monotone with pinned endpoints") {
  for (auto kind : {ScheduleKind::Linear, ScheduleKind::Cosine}) {
    const NoiseSchedule s = make_schedule(1000, kind);
    s.validate();
    CHECK(s.alpha_bar[0] == 1.0);
    CHECK(1.0 - s.alpha_bar[1] < 1e-3);
    for (int t = 1; t <= 1000; ++t) {
      CHECK(s.beta[static_cast<std::size_t>(t)] > 0.0);
      CHECK(s.beta[static_cast<std::size_t>(t)] < 1.0);
      CHECK(s.alpha_bar[static_cast<std::size_t>(t)] <
            s.alpha_bar[static_cast<std::size_t>(t - 1)]);
    }
  }
  const NoiseSchedule lin = make_schedule(1000, ScheduleKind::Linear);
  CHECK(lin.beta[1] == 1e-4);
  CHECK(lin.beta[1000] == 2e-2);
  // most signal destroyed by the end
  const NoiseSchedule cos = make_schedule(1000, ScheduleKind::Cosine);
  CHECK(cos.alpha_bar[1000] < 1e-3);
  CHECK_THROWS_AS(make_schedule(1, ScheduleKind::Cosine), InvalidArgument);
}

TEST_CASE("strided schedule reindexes the base curve") {
  const NoiseSchedule base = make_schedule(1000, ScheduleKind::Cosine);
  const NoiseSchedule s = strided_schedule(base, 100);
  s.validate();
  CHECK(s.steps == 100);
  for (int i = 1; i <= 100; ++i) {
    const auto u = static_cast<std::size_t>(i);
    CHECK(s.t_cond[u] == 10 * i);
    CHECK(s.alpha_bar[u] == base.alpha_bar[static_cast<std::size_t>(10 * i)]);
    // betas are consistent with the alpha_bar ratios by construction
    CHECK(1.0 - s.beta[u] == doctest::Approx(s.alpha_bar[u] / s.alpha_bar[u - 1]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(strided_schedule(base, 1001), InvalidArgument);
  CHECK_THROWS_AS(strided_schedule(base, 1), InvalidArgument);
}

TEST_CASE("forward corruption interpolates between signal and noise") {
  const NoiseSchedule s = make_schedule(100, ScheduleKind::Cosine);
  Rng rng(60);
  const Mat<double> x0 = randm(rng, 5, 4);
  const Mat<double> noise = randm(rng, 5, 4);
  // t = 0 is the identity
  CHECK((q_sample(x0, 0, noise, s) - x0).cwiseAbs().maxCoeff() == 0.0);
  // zero noise scales the signal exactly
  const Mat<double> zn = Mat<double>::Zero(5, 4);
  for (int t : {1, 17, 100}) {
    const double a = s.alpha_bar[static_cast<std::size_t>(t)];
    CHECK(q_sample(x0, t, zn, s).isApprox(Mat<double>(std::sqrt(a) * x0), 1e-14));
    CHECK(a + (1.0 - a) == doctest::Approx(1.0).epsilon(1e-14));
  }
  CHECK_THROWS_AS(q_sample(x0, 101, noise, s), InvalidArgument);
}

TEST_CASE("posterior step is exact at the end and respects the mean identity") {
  const NoiseSchedule s = make_schedule(50, ScheduleKind::Cosine);
  Rng rng(61);
  const Mat<double> x0 = randm(rng, 4, 3);
  const Mat<double> junk = randm(rng, 4, 3);

  // final step ignores noise entirely
  const Mat<double> xt1 = randm(rng, 4, 3);
  const Mat<double> a = posterior_step(xt1, x0, 1, s, junk);
  const Mat<double> b = posterior_step(xt1, x0, 1, s, Mat<double>(Mat<double>::Zero(4, 3)));
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);

  // feeding the noiseless forward point and the true signal recovers the
  // previous noiseless forward point
  for (int t : {2, 13, 50}) {
    const double ab_t = s.alpha_bar[static_cast<std::size_t>(t)];
    const double ab_p = s.alpha_bar[static_cast<std::size_t>(t - 1)];
    const Mat<double> xt = std::sqrt(ab_t) * x0;
    const Mat<double> mean = posterior_step(xt, x0, t, s, Mat<double>(Mat<double>::Zero(4, 3)));
    CHECK((mean - std::sqrt(ab_p) * x0).cwiseAbs().maxCoeff() < 1e-12);
  }

  // flat-schedule limit: a vanishing beta makes the step the identity
  NoiseSchedule flat;
  flat.steps = 2;
  flat.beta = {0.0, 1e-8, 1e-8};
  flat.alpha_bar = {1.0, 1.0 - 1e-8, (1.0 - 1e-8) * (1.0 - 1e-8)};
  flat.t_cond = {0, 1, 2};
  flat.validate();
  const Mat<double> xt = randm(rng, 4, 3);
  const Mat<double> stepped = posterior_step(xt, xt, 2, flat, Mat<double>(Mat<double>::Zero(4, 3)));
  CHECK((stepped - xt).cwiseAbs().maxCoeff() < 1e-6);

  CHECK_THROWS_AS(posterior_step(xt, x0, 0, flat, junk), InvalidArgument);
}

TEST_CASE("layer guidance combines per-stage predictions") {
  GuidanceSpec gd;
  gd.s = {1.2};
  Mat<double> cond(1, 1), uncond(1, 1);
  cond << 2.0;
  uncond << 1.0;
  const Mat<double> one = ldcfg_combine(cond, uncond, gd, 1);
  CHECK(one(0, 0) == doctest::Approx(3.2).epsilon(1e-15));

  Rng rng(62);
  const Mat<double> c = randm(rng, 6, 8);
  const Mat<double> u = randm(rng, 6, 8);
  GuidanceSpec two;
  two.s = {0.5, 2.0};
  const Mat<double> out = ldcfg_combine(c, u, two, 4);
  for (Index i = 0; i < 6; ++i)
    for (Index j = 0; j < 8; ++j) {
      const double sr = j < 4 ? 0.5 : 2.0;
      CHECK(out(i, j) == doctest::Approx((1.0 + sr) * c(i, j) - sr * u(i, j)).epsilon(1e-14));
    }

  // zero strengths are the exact identity on the conditioned prediction
  GuidanceSpec zero;
  zero.s = {0.0, 0.0};
  CHECK(zero.all_zero());
  CHECK((ldcfg_combine(c, u, zero, 4) - c).cwiseAbs().maxCoeff() == 0.0);
  // equal predictions cancel for any strength
  CHECK((ldcfg_combine(c, c, two, 4) - c).cwiseAbs().maxCoeff() < 1e-14);

  GuidanceSpec three;
  three.s = {1.0, 1.0, 1.0};
  CHECK_THROWS_AS(ldcfg_combine(c, u, three, 4), InvalidArgument);
}

TEST_CASE("condition dropout keeps the advertised rate") {
  Rng rng(63);
  const int n = 100000;
  int dropped[2] = {0, 0};
  for (int i = 0; i < n; ++i) {
    const auto keep = draw_cond_mask(rng, 2, 0.2);
    for (int r = 0; r < 2; ++r)
      if (!keep[static_cast<std::size_t>(r)]) ++dropped[r];
  }
  for (int r = 0; r < 2; ++r) {
    const double freq = static_cast<double>(dropped[r]) / n;
    CHECK(freq > 0.19);
    CHECK(freq < 0.21);
  }
  Rng rng2(64);
  const auto keep = draw_cond_mask(rng2, 3, 0.0);
  CHECK((keep == std::vector<bool>{true, true, true}));
}

TEST_CASE("contact weights flag frames that are both low and slow") {
  Mat<double> foot(5, 3);
  // rows: start planted, lift, drop back fast, settle
  foot.row(0) << 0.0, kGroundY + 0.01, 0.0;   // low, static
  foot.row(1) << 0.0, kGroundY + 0.02, 0.0;   // low, slow
  foot.row(2) << 0.0, kGroundY + 0.30, 0.0;   // high
  foot.row(3) << 0.0, kGroundY + 0.01, 0.0;   // low again but arrived fast
  foot.row(4) << 0.0, kGroundY + 0.015, 0.0;  // low, slow
  const Mat<double> w = contact_weights(foot);
  CHECK(w.rows() == 4);
  CHECK(w(0, 0) == 1.0);  // frame 1 low and slow
  CHECK(w(1, 0) == 0.0);  // frame 2 high
  CHECK(w(2, 0) == 0.0);  // frame 3 low but fast
  CHECK(w(3, 0) == 1.0);  // frame 4 low and slow
}

TEST_CASE("contact speed loss is zero without contacts and tiny when planted") {
  Graph<double> g;
  Rng rng(65);
  const Mat<double> moving = randm(rng, 6, 3);
  const int pos = g.constant(moving);
  const Mat<double> none = Mat<double>::Zero(5, 1);
  CHECK(g.val(contact_speed_loss(g, {pos}, {none}))(0, 0) == 0.0);

  // a perfectly static foot scores only the smoothing floor
  const int still = g.constant(Mat<double>(Mat<double>::Constant(6, 3, 0.4)));
  const Mat<double> all = Mat<double>::Ones(5, 1);
  CHECK(g.val(contact_speed_loss(g, {still}, {all}))(0, 0) < 1e-5);

  // a sliding foot on contact frames scores its speed
  Mat<double> slide(3, 3);
  slide.row(0) << 0.0, 0.0, 0.0;
  slide.row(1) << 0.3, 0.0, 0.0;
  slide.row(2) << 0.6, 0.0, 0.0;
  const int sl = g.constant(slide);
  const Mat<double> both = Mat<double>::Ones(2, 1);
  CHECK(g.val(contact_speed_loss(g, {sl}, {both}))(0, 0) == doctest::Approx(0.3).epsilon(1e-6));
}

TEST_CASE("direction loss vanishes for matching directions and ignores scale") {
  Graph<double> g;
  Rng rng(66);
  Mat<double> rel = randm(rng, 8, 3);
  rel.col(0).array() += 1.5;  // keep horizontal magnitude well away from zero
  const int pred = g.constant(rel);
  CHECK(g.val(horizontal_direction_loss(g, pred, rel))(0, 0) == 0.0);

  const Mat<double> scaled = 3.0 * rel;
  const int pred2 = g.constant(scaled);
  CHECK(g.val(horizontal_direction_loss(g, pred2, rel))(0, 0) < 1e-5);

  Mat<double> flipped = rel;
  flipped.col(0) *= -1.0;
  const int pred3 = g.constant(flipped);
  CHECK(g.val(horizontal_direction_loss(g, pred3, rel))(0, 0) > 0.5);
}

TEST_CASE("an ideal prediction zeroes the matching loss components") {
  const CodecConfig cd = tiny_codec();
  const DenoiserConfig dn = tiny_denoiser();
  Rng init(67);
  ParamStore<double> cd_store;
  declare_codec(cd_store, cd, init);
  Rng rng(68);
  DiffusionItem<double> item = make_item(rng, dn);

  // make the ground truth exactly the frozen decode of x0
  {
    Graph<double> g;
    const BoundParams<double> p = bind_params(g, cd_store, false);
    const auto decoded =
        decode_prediction_graph(g, p, cd, g.constant(item.x0), dn.token_dim);
    item.gt.upper = g.val(decoded[0]);
    item.gt.lower = g.val(decoded[1]);
    item.gt.rel_root = g.val(decoded[2]);
  }

  Graph<double> g;
  const BoundParams<double> p = bind_params(g, cd_store, false);
  const int pred = g.constant(item.x0);
  const int simple = stage_weighted_mse(g, pred, item.x0, {1.0, 1.0}, dn.token_dim);
  CHECK(g.val(simple)(0, 0) == 0.0);

  const auto decoded = decode_prediction_graph(g, p, cd, pred, dn.token_dim);
  const Mat<double>* gt_mats[3] = {&item.gt.upper, &item.gt.lower, &item.gt.rel_root};
  for (int k = 0; k < 3; ++k) {
    const int kin = kinematic_loss_graph(g, decoded[static_cast<std::size_t>(k)],
                                         g.constant(*gt_mats[k]), 1.0, 0.5, 0.25);
    CHECK(g.val(kin)(0, 0) == 0.0);
  }
  const int ro = horizontal_direction_loss(g, decoded[2], item.gt.rel_root);
  CHECK(g.val(ro)(0, 0) == 0.0);

  // contacts are taken from the (identical) ground truth, so the foot
  // term is bounded by the contact speed threshold
  const int pred_root = g.add(decoded[2], g.constant(item.ref_root));
  const Mat<double> gt_root = item.gt.rel_root + item.ref_root;
  std::vector<int> feet;
  std::vector<Mat<double>> weights;
  for (int joint : kFootJoints) {
    const int col = lower_stream_col(joint);
    feet.push_back(g.add(g.slice_cols(decoded[1], col, 3), pred_root));
    weights.push_back(contact_weights(Mat<double>(item.gt.lower.middleCols(col, 3) + gt_root)));
  }
  const int fc = contact_speed_loss(g, feet, weights);
  CHECK(g.val(fc)(0, 0) <= kContactSpeed + 1e-9);
}

TEST_CASE("a zero stage weight silences that stage's target error") {
  Rng rng(69);
  const Index token = 5;
  const Mat<double> target = randm(rng, 6, 2 * token);
  Mat<double> pred_a = randm(rng, 6, 2 * token);
  Mat<double> pred_b = pred_a;
  pred_b.rightCols(token).array() += 2.0;  // only stage 2 differs

  auto eval = [&](const Mat<double>& pr, const std::vector<double>& lam) {
    Graph<double> g;
    return g.val(stage_weighted_mse(g, g.constant(pr), target, lam, token))(0, 0);
  };
  CHECK(eval(pred_a, {1.0, 0.0}) == eval(pred_b, {1.0, 0.0}));
  CHECK(eval(pred_a, {1.0, 1.0}) != eval(pred_b, {1.0, 1.0}));
}

TEST_CASE("the codec stays frozen inside the diffusion loss") {
  const CodecConfig cd = tiny_codec();
  const DenoiserConfig dn = tiny_denoiser();
  Rng init(70);
  ParamStore<double> cd_store, dn_store;
  declare_codec(cd_store, cd, init);
  declare_denoiser(dn_store, dn, init);
  Rng rng(71);
  const DiffusionItem<double> item = make_item(rng, dn);
  const NoiseSchedule sched = make_schedule(20, ScheduleKind::Cosine);
  const Mat<double> noise = randm(rng, 4, dn.x_dim());
  DiffusionLossWeights w;

  Graph<double> g;
  const BoundParams<double> dn_p = bind_params(g, dn_store, true);
  const BoundParams<double> cd_p = bind_params(g, cd_store, false);
  const auto nodes = diffusion_window_loss(g, dn_p, dn, cd_p, cd, BlcSpec{4, 4}, sched, w, item,
                                           7, noise, {true, true});
  g.backward(nodes.total);

  for (std::size_t i = 0; i < cd_p.ids.size(); ++i)
    CHECK(g.grad(cd_p.ids[i]).size() == 0);
  double dn_grad_norm = 0.0;
  for (std::size_t i = 0; i < dn_p.ids.size(); ++i) {
    const Mat<double>& gr = g.grad(dn_p.ids[i]);
    if (gr.size() != 0) dn_grad_norm += gr.squaredNorm();
  }
  CHECK(dn_grad_norm > 0.0);
}

TEST_CASE("non-finite losses abort") {
  const CodecConfig cd = tiny_codec();
  const DenoiserConfig dn = tiny_denoiser();
  Rng init(72);
  ParamStore<double> cd_store, dn_store;
  declare_codec(cd_store, cd, init);
  declare_denoiser(dn_store, dn, init);
  dn_store.entry(0).value(0, 0) = std::numeric_limits<double>::quiet_NaN();
  Rng rng(73);
  const DiffusionItem<double> item = make_item(rng, dn);
  const NoiseSchedule sched = make_schedule(20, ScheduleKind::Cosine);
  const Mat<double> noise = randm(rng, 4, dn.x_dim());

  Graph<double> g;
  const BoundParams<double> dn_p = bind_params(g, dn_store, false);
  const BoundParams<double> cd_p = bind_params(g, cd_store, false);
  CHECK_THROWS_AS(diffusion_window_loss(g, dn_p, dn, cd_p, cd, BlcSpec{4, 4}, sched,
                                        DiffusionLossWeights{}, item, 7, noise, {true, true}),
                  NumericFailure);
}

TEST_CASE("diffusion loss gradients match finite differences") {
  const CodecConfig cd = tiny_codec();
  const DenoiserConfig dn = tiny_denoiser();
  Rng init(74);
  ParamStore<double> cd_store, dn_store;
  declare_codec(cd_store, cd, init);
  declare_denoiser(dn_store, dn, init);
  Rng rng(75);
  const DiffusionItem<double> item = make_item(rng, dn);
  const NoiseSchedule sched = make_schedule(20, ScheduleKind::Cosine);
  const Mat<double> noise = randm(rng, 4, dn.x_dim());
  DiffusionLossWeights w;

  auto build = [&](Graph<double>& g, const BoundParams<double>& dn_p) {
    const BoundParams<double> cd_p = bind_params(g, cd_store, false);
    return diffusion_window_loss(g, dn_p, dn, cd_p, cd, BlcSpec{4, 4}, sched, w, item, 11, noise,
                                 {true, false})
        .total;
  };
  Rng pick(76);
  auto rep = gradcheck(dn_store, build, 1, pick);
  CHECK(rep.checked >= dn_store.count());
  CHECK_MESSAGE(rep.max_rel_err < 1e-4, "worst: ", rep.worst_param);
}

TEST_CASE("sampling is deterministic and lands on the value grids") {
  const CodecConfig cd = tiny_codec();
  const DenoiserConfig dn = tiny_denoiser();
  Rng init(77);
  ParamStore<float> cd_store, dn_store;
  declare_codec(cd_store, cd, init);
  declare_denoiser(dn_store, dn, init);
  const NoiseSchedule sched = make_schedule(6, ScheduleKind::Cosine);
  const BlcSpec blc{4, 8};
  Rng rng(78);
  const Mat<float> music = randm(rng, 32, dn.music_dim).cast<float>();
  Mat<float> leader(32, kPoseDims);
  {
    const Mat<double> l = randm(rng, 32, kPoseDims, 0.2);
    leader = l.cast<float>();
  }
  SampleOptions opt;
  opt.seed = 5;

  const auto a = sample_reactor(dn_store, dn, cd_store, cd, sched, blc, music, leader, opt);
  const auto b = sample_reactor(dn_store, dn, cd_store, cd, sched, blc, music, leader, opt);
  CHECK(a.reactor.rows() == 32);
  CHECK(a.reactor.cols() == kPoseDims);
  CHECK(all_finite(a.reactor));
  CHECK((a.reactor - b.reactor).cwiseAbs().maxCoeff() == 0.0f);
  CHECK((a.latents - b.latents).cwiseAbs().maxCoeff() == 0.0f);

  // every stage slice of every stream sits on its quantizer grid
  const auto streams = cd.streams();
  Index off = 0;
  for (const auto& st : streams) {
    for (int r = 0; r < cd.hfsq.stages; ++r) {
      const Mat<float> sl = a.latents.middleCols(static_cast<Index>(r) * dn.token_dim + off,
                                                 st.latent_dim);
      CHECK((fsq_snap_values(sl, cd.hfsq.base) - sl).cwiseAbs().maxCoeff() == 0.0f);
    }
    off += st.latent_dim;
  }

  // a different seed moves the output
  SampleOptions opt2 = opt;
  opt2.seed = 6;
  const auto c2 = sample_reactor(dn_store, dn, cd_store, cd, sched, blc, music, leader, opt2);
  CHECK((a.reactor - c2.reactor).cwiseAbs().maxCoeff() > 0.0f);
}

TEST_CASE("parallel and sequential block sampling agree") {
  const CodecConfig cd = tiny_codec();
  const DenoiserConfig dn = tiny_denoiser();
  Rng init(79);
  ParamStore<float> cd_store, dn_store;
  declare_codec(cd_store, cd, init);
  declare_denoiser(dn_store, dn, init);
  const NoiseSchedule sched = make_schedule(5, ScheduleKind::Cosine);
  const BlcSpec blc{4, 12};
  Rng rng(80);
  const Mat<float> music = randm(rng, 48, dn.music_dim).cast<float>();
  const Mat<float> leader = randm(rng, 48, kPoseDims, 0.2).cast<float>();

  SampleOptions seq;
  seq.seed = 9;
  SampleOptions par = seq;
  par.blocks_parallel = true;
  par.threads = 3;

  const auto a = sample_reactor(dn_store, dn, cd_store, cd, sched, blc, music, leader, seq);
  const auto b = sample_reactor(dn_store, dn, cd_store, cd, sched, blc, music, leader, par);
  CHECK((a.reactor - b.reactor).cwiseAbs().maxCoeff() <= 1e-6f);
  CHECK((a.reactor - b.reactor).cwiseAbs().maxCoeff() == 0.0f);
  CHECK((a.latents - b.latents).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("zero guidance equals skipping the unconditional pass") {
  const CodecConfig cd = tiny_codec();
  const DenoiserConfig dn = tiny_denoiser();
  Rng init(81);
  ParamStore<float> cd_store, dn_store;
  declare_codec(cd_store, cd, init);
  declare_denoiser(dn_store, dn, init);
  const NoiseSchedule sched = make_schedule(4, ScheduleKind::Cosine);
  const BlcSpec blc{4, 4};
  Rng rng(82);
  const Mat<float> music = randm(rng, 16, dn.music_dim).cast<float>();
  const Mat<float> leader = randm(rng, 16, kPoseDims, 0.2).cast<float>();

  SampleOptions skip;
  skip.seed = 3;
  skip.guidance.s = {0.0, 0.0};
  // a strength too small to survive the float cast forces the
  // unconditional pass to run while combining with an effective zero
  SampleOptions full = skip;
  full.guidance.s = {0.0, 1e-300};
  CHECK_FALSE(full.guidance.all_zero());

  const auto a = sample_reactor(dn_store, dn, cd_store, cd, sched, blc, music, leader, skip);
  const auto b = sample_reactor(dn_store, dn, cd_store, cd, sched, blc, music, leader, full);
  CHECK((a.reactor - b.reactor).cwiseAbs().maxCoeff() == 0.0f);

  // dropping every condition under zero guidance is the unconditional
  // model, which strength -1 recovers through the combine
  SampleOptions drop = skip;
  drop.drop_music = true;
  drop.drop_leader = true;
  SampleOptions neg = skip;
  neg.guidance.s = {-1.0, -1.0};
  const auto c = sample_reactor(dn_store, dn, cd_store, cd, sched, blc, music, leader, drop);
  const auto d = sample_reactor(dn_store, dn, cd_store, cd, sched, blc, music, leader, neg);
  CHECK(all_finite(c.reactor));
  CHECK((c.reactor - d.reactor).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("the sampler rejects mismatched inputs") {
  const CodecConfig cd = tiny_codec();
  const DenoiserConfig dn = tiny_denoiser();
  Rng init(83);
  ParamStore<float> cd_store, dn_store;
  declare_codec(cd_store, cd, init);
  declare_denoiser(dn_store, dn, init);
  const NoiseSchedule sched = make_schedule(4, ScheduleKind::Cosine);
  Rng rng(84);
  const Mat<float> music = randm(rng, 16, dn.music_dim).cast<float>();
  const Mat<float> leader = randm(rng, 16, kPoseDims, 0.2).cast<float>();
  SampleOptions opt;

  CHECK_THROWS_AS(sample_reactor(dn_store, dn, cd_store, cd, sched, BlcSpec{4, 6}, music, leader,
                                 opt),
                  InvalidArgument);
  CHECK_THROWS_AS(sample_reactor(dn_store, dn, cd_store, cd, sched, BlcSpec{4, 4},
                                 Mat<float>(music.topRows(8)), leader, opt),
                  InvalidArgument);
  SampleOptions bad = opt;
  bad.guidance.s = {1.0};
  CHECK_THROWS_AS(sample_reactor(dn_store, dn, cd_store, cd, sched, BlcSpec{4, 4}, music, leader,
                                 bad),
                  InvalidArgument);
}

TEST_SUITE_END();
