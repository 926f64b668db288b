// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "reduet/codec.hpp"
#include "reduet/denoiser.hpp"

namespace rd {

enum class ScheduleKind { Linear, Cosine };

inline ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "linear") return ScheduleKind::Linear;
  if (s == "cosine") return ScheduleKind::Cosine;
  throw InvalidArgument("unknown schedule kind: " + s);
}

// Arrays run over steps t = 1..steps; index 0 is the clean endpoint with
// alpha_bar = 1 and an unused beta. t_cond maps a step to the id the
// network is conditioned on; it equals the index for base schedules and
// the originating step for strided sub-schedules.
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha_bar;
  std::vector<int> t_cond;

  void validate() const {
    require(steps >= 1, "schedule: needs at least one step");
    const auto n = static_cast<std::size_t>(steps) + 1;
    require(beta.size() == n && alpha_bar.size() == n && t_cond.size() == n,
            "schedule: array sizes");
    require(alpha_bar[0] == 1.0, "schedule: alpha_bar must start at 1");
    for (int t = 1; t <= steps; ++t) {
      const auto u = static_cast<std::size_t>(t);
      require(beta[u] > 0.0 && beta[u] < 1.0, "schedule: beta out of (0,1)");
      require(alpha_bar[u] > 0.0 && alpha_bar[u] < alpha_bar[u - 1],
              "schedule: alpha_bar must decrease strictly");
    }
  }
};

inline NoiseSchedule make_schedule(int steps, ScheduleKind kind) {
  require(steps >= 2, "make_schedule: steps must be >= 2");
  NoiseSchedule s;
  s.steps = steps;
  const auto n = static_cast<std::size_t>(steps) + 1;
  s.beta.assign(n, 0.0);
  s.alpha_bar.assign(n, 1.0);
  s.t_cond.resize(n);
  for (int t = 0; t <= steps; ++t) s.t_cond[static_cast<std::size_t>(t)] = t;
  if (kind == ScheduleKind::Linear) {
    const double b0 = 1e-4, b1 = 2e-2;
    for (int t = 1; t <= steps; ++t) {
      const auto u = static_cast<std::size_t>(t);
      s.beta[u] = b0 + (b1 - b0) * static_cast<double>(t - 1) / static_cast<double>(steps - 1);
      s.alpha_bar[u] = s.alpha_bar[u - 1] * (1.0 - s.beta[u]);
    }
  } else {
    const double pi = std::acos(-1.0);
    auto f = [&](double u) {
      const double c = std::cos((u + 0.008) / 1.008 * pi / 2.0);
      return c * c;
    };
    // raw ratios, with the tail step capped so every beta stays < 1
    double prev = 1.0;
    for (int t = 1; t <= steps; ++t) {
      const auto u = static_cast<std::size_t>(t);
      const double cur = f(static_cast<double>(t) / steps) / f(0.0);
      s.beta[u] = std::min(1.0 - cur / prev, 0.999);
      s.alpha_bar[u] = s.alpha_bar[u - 1] * (1.0 - s.beta[u]);
      prev = cur;
    }
  }
  s.validate();
  return s;
}

// Evenly strided sub-schedule reusing the base alpha_bar curve, so a
// model trained on the base schedule can sample in fewer steps.
inline NoiseSchedule strided_schedule(const NoiseSchedule& base, int n) {
  base.validate();
  require(n >= 2 && n <= base.steps, "strided_schedule: need 2 <= n <= base steps");
  NoiseSchedule s;
  s.steps = n;
  const auto m = static_cast<std::size_t>(n) + 1;
  s.beta.assign(m, 0.0);
  s.alpha_bar.assign(m, 1.0);
  s.t_cond.assign(m, 0);
  for (int i = 1; i <= n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    const int tau = static_cast<int>((static_cast<std::int64_t>(i) * base.steps) / n);
    s.t_cond[u] = tau;
    s.alpha_bar[u] = base.alpha_bar[static_cast<std::size_t>(tau)];
    s.beta[u] = 1.0 - s.alpha_bar[u] / s.alpha_bar[u - 1];
  }
  s.validate();
  return s;
}

template <typename S>
Mat<S> q_sample(const Mat<S>& x0, int t, const Mat<S>& noise, const NoiseSchedule& sched) {
  require(t >= 0 && t <= sched.steps, "q_sample: step out of range");
  require(noise.rows() == x0.rows() && noise.cols() == x0.cols(), "q_sample: shape mismatch");
  const double a = sched.alpha_bar[static_cast<std::size_t>(t)];
  return static_cast<S>(std::sqrt(a)) * x0 + static_cast<S>(std::sqrt(1.0 - a)) * noise;
}

// One reverse step from the predicted clean signal: posterior mean plus
// scaled noise, except the final step which is deterministic.
template <typename S>
Mat<S> posterior_step(const Mat<S>& x_t, const Mat<S>& x0_hat, int t, const NoiseSchedule& sched,
                      const Mat<S>& noise) {
  require(t >= 1 && t <= sched.steps, "posterior_step: step out of range");
  require(x0_hat.rows() == x_t.rows() && x0_hat.cols() == x_t.cols(),
          "posterior_step: shape mismatch");
  const auto u = static_cast<std::size_t>(t);
  const double ab_t = sched.alpha_bar[u];
  const double ab_p = sched.alpha_bar[u - 1];
  const double b = sched.beta[u];
  const double a = 1.0 - b;
  const double c0 = std::sqrt(ab_p) * b / (1.0 - ab_t);
  const double ct = std::sqrt(a) * (1.0 - ab_p) / (1.0 - ab_t);
  Mat<S> mean = static_cast<S>(c0) * x0_hat + static_cast<S>(ct) * x_t;
  if (t == 1) return mean;
  require(noise.rows() == x_t.rows() && noise.cols() == x_t.cols(),
          "posterior_step: noise shape mismatch");
  const double var = b * (1.0 - ab_p) / (1.0 - ab_t);
  return mean + static_cast<S>(std::sqrt(var)) * noise;
}

// Per-stage guidance strengths applied to stage-major predictions.
struct GuidanceSpec {
  std::vector<double> s{1.2, 1.2};

  bool all_zero() const {
    for (double v : s)
      if (v != 0.0) return false;
    return true;
  }

  void validate() const {
    require(!s.empty(), "guidance: empty");
    for (double v : s) require(std::isfinite(v), "guidance: non-finite strength");
  }
};

// Per stage r: (1 + s_r) * cond - s_r * uncond over that stage's slice.
template <typename S>
Mat<S> ldcfg_combine(const Mat<S>& cond, const Mat<S>& uncond, const GuidanceSpec& gd,
                     Index token_dim) {
  gd.validate();
  require(cond.rows() == uncond.rows() && cond.cols() == uncond.cols(),
          "ldcfg_combine: shape mismatch");
  require(cond.cols() == token_dim * static_cast<Index>(gd.s.size()),
          "ldcfg_combine: stage count mismatch");
  Mat<S> out(cond.rows(), cond.cols());
  for (std::size_t r = 0; r < gd.s.size(); ++r) {
    const Index off = static_cast<Index>(r) * token_dim;
    const S sr = static_cast<S>(gd.s[r]);
    out.middleCols(off, token_dim) = (S(1) + sr) * cond.middleCols(off, token_dim) -
                                     sr * uncond.middleCols(off, token_dim);
  }
  return out;
}

// One keep coin per stage in stage order; false means the stage's music
// and leader inputs are replaced by null embeddings.
inline std::vector<bool> draw_cond_mask(Rng& rng, int stages, double p) {
  require(stages >= 1, "draw_cond_mask: stages");
  require(p >= 0.0 && p <= 1.0, "draw_cond_mask: p out of [0,1]");
  std::vector<bool> keep(static_cast<std::size_t>(stages));
  for (int r = 0; r < stages; ++r) keep[static_cast<std::size_t>(r)] = !(rng.uniform() < p);
  return keep;
}

struct DiffusionLossWeights {
  std::vector<double> lambda_stage{1.0, 1.0};
  double lambda_kin = 1.0;
  double lambda_fc = 0.5;
  double lambda_ro = 0.5;

  void validate() const {
    require(!lambda_stage.empty(), "loss weights: empty stage weights");
    for (double v : lambda_stage) require(v >= 0.0, "loss weights: negative stage weight");
    require(lambda_kin >= 0.0 && lambda_fc >= 0.0 && lambda_ro >= 0.0,
            "loss weights: negative weight");
  }
};

// Contact detection thresholds: a foot lower than kContactHeight above
// the ground and moving slower than kContactSpeed counts as planted.
inline constexpr double kContactHeight = 0.05;
inline constexpr double kContactSpeed = 0.05;

// 0/1 weights aligned with velocity rows (row i spans frames i..i+1,
// judged at the later frame), from world-space foot positions.
template <typename S>
Mat<S> contact_weights(const Mat<S>& foot_world) {
  require(foot_world.cols() == 3 && foot_world.rows() >= 2, "contact_weights: need T x 3");
  Mat<S> w(foot_world.rows() - 1, 1);
  for (Index i = 0; i + 1 < foot_world.rows(); ++i) {
    const double h = static_cast<double>(foot_world(i + 1, 1)) - kGroundY;
    const double sp = (foot_world.row(i + 1) - foot_world.row(i)).norm();
    w(i, 0) = (h < kContactHeight && sp < kContactSpeed) ? S(1) : S(0);
  }
  return w;
}

// Mean predicted foot speed pooled over every (foot, contact frame)
// pair; zero when nothing is in contact.
template <typename S>
int contact_speed_loss(Graph<S>& g, const std::vector<int>& foot_pos,
                       const std::vector<Mat<S>>& weights) {
  require(!foot_pos.empty() && foot_pos.size() == weights.size(), "contact_speed_loss: inputs");
  double count = 0.0;
  for (const auto& w : weights) count += static_cast<double>(w.sum());
  int total = -1;
  for (std::size_t f = 0; f < foot_pos.size(); ++f) {
    const int speed = g.rownorm(g.tdiff(foot_pos[f]), S(1e-12));
    require(g.val(speed).rows() == weights[f].rows(), "contact_speed_loss: weight rows");
    const int term = g.sum_all(g.mul_const(speed, weights[f]));
    total = f == 0 ? term : g.add(total, term);
  }
  return g.scale(total, static_cast<S>(1.0 / std::max(count, 1.0)));
}

// Mean L1 gap between unit-normalized horizontal (x, z) offset
// directions of the predicted and reference root tracks.
template <typename S>
int horizontal_direction_loss(Graph<S>& g, int pred_rel, const Mat<S>& gt_rel) {
  require(g.val(pred_rel).cols() == 3 && gt_rel.cols() == 3, "direction loss: need T x 3");
  require(g.val(pred_rel).rows() == gt_rel.rows(), "direction loss: row mismatch");
  const S eps = static_cast<S>(kSmoothAbsEps);
  const int ph = g.concat_cols({g.slice_cols(pred_rel, 0, 1), g.slice_cols(pred_rel, 2, 1)});
  const int pu = g.unit_rows(ph, eps);
  Mat<S> gh(gt_rel.rows(), 2);
  gh.col(0) = gt_rel.col(0);
  gh.col(1) = gt_rel.col(2);
  const Mat<S> gu = unit_rows_mat(gh, eps);
  return g.mean_all(g.smooth_abs(g.sub(pu, g.constant(gu)), eps));
}

// Sum over stages of lambda^r times the mean squared error of that
// stage's slice.
template <typename S>
int stage_weighted_mse(Graph<S>& g, int pred, const Mat<S>& target,
                       const std::vector<double>& lambda_stage, Index token_dim) {
  require(g.val(pred).rows() == target.rows() && g.val(pred).cols() == target.cols(),
          "stage_weighted_mse: shape mismatch");
  require(target.cols() == token_dim * static_cast<Index>(lambda_stage.size()),
          "stage_weighted_mse: stage count mismatch");
  int total = -1;
  for (std::size_t r = 0; r < lambda_stage.size(); ++r) {
    const Index off = static_cast<Index>(r) * token_dim;
    const int err = g.sub(g.slice_cols(pred, off, token_dim),
                          g.constant(Mat<S>(target.middleCols(off, token_dim))));
    const int term = g.scale(g.mean_all(g.mul(err, err)), static_cast<S>(lambda_stage[r]));
    total = r == 0 ? term : g.add(total, term);
  }
  return total;
}

// Aggregate each stream's stage slices of a stage-major prediction and
// run them through the codec decoders; returns one node per stream in
// streams() order.
template <typename S>
std::vector<int> decode_prediction_graph(Graph<S>& g, const BoundParams<S>& cd_p,
                                         const CodecConfig& cd_cfg, int pred, Index token_dim) {
  const auto streams = cd_cfg.streams();
  std::vector<int> decoded;
  Index off = 0;
  for (std::size_t k = 0; k < streams.size(); ++k) {
    int agg = -1;
    for (int r = 0; r < cd_cfg.hfsq.stages; ++r) {
      const int sl =
          g.slice_cols(pred, static_cast<Index>(r) * token_dim + off, streams[k].latent_dim);
      const int sc =
          g.scale(sl, static_cast<S>(cd_cfg.hfsq.stage_scales[static_cast<std::size_t>(r)]));
      agg = r == 0 ? sc : g.add(agg, sc);
    }
    decoded.push_back(codec_decode(g, cd_p, streams[k].prefix, agg));
    off += streams[k].latent_dim;
  }
  return decoded;
}

// One denoiser training window with everything the loss needs, rates
// fixed by the codec's 4x downsampling.
template <typename S>
struct DiffusionItem {
  Mat<S> x0;           // K x stages*token_dim clean stage values
  Mat<S> music_lat;    // K x stacked music cols
  Mat<S> lead_locals;  // 4K x lead_in_dims leader pose around its root
  BodyStreams<S> gt;   // reactor ground truth at raw rate
  Mat<S> ref_root;     // 4K x 3 leader root track
};

struct DiffLossNodes {
  int total = -1;
  int simple = -1;
  int kin = -1;
  int fc = -1;
  int ro = -1;
};

// Corrupt, predict, and score one window. Codec parameters are expected
// bound frozen: gradients flow through the decoder into the prediction
// but never accumulate on codec weights.
template <typename S>
DiffLossNodes diffusion_window_loss(Graph<S>& g, const BoundParams<S>& dn_p,
                                    const DenoiserConfig& dn_cfg, const BoundParams<S>& cd_p,
                                    const CodecConfig& cd_cfg, const BlcSpec& blc,
                                    const NoiseSchedule& sched, const DiffusionLossWeights& w,
                                    const DiffusionItem<S>& item, int t, const Mat<S>& noise,
                                    const std::vector<bool>& cond_mask) {
  w.validate();
  require(static_cast<int>(w.lambda_stage.size()) == dn_cfg.stages,
          "diffusion loss: stage weight count");
  require(t >= 1 && t <= sched.steps, "diffusion loss: step out of range");
  require(item.x0.rows() == blc.total_len && item.x0.cols() == dn_cfg.x_dim(),
          "diffusion loss: x0 shape");
  require(cd_cfg.hfsq.stages == dn_cfg.stages && cd_cfg.total_latent() == dn_cfg.token_dim,
          "diffusion loss: codec and denoiser layouts disagree");

  DiffLossNodes out;
  const Mat<S> x_t = q_sample(item.x0, t, noise, sched);
  const int lead_lat = encode_leader_graph(g, dn_p, dn_cfg, g.constant(item.lead_locals));
  const int pred = denoise_graph(g, dn_p, dn_cfg, blc, g.constant(x_t), t,
                                 g.constant(item.music_lat), lead_lat, cond_mask);

  out.simple = stage_weighted_mse(g, pred, item.x0, w.lambda_stage, dn_cfg.token_dim);

  // frozen decode of the prediction, stream by stream
  const Mat<S>* gt_mats[3] = {&item.gt.upper, &item.gt.lower, &item.gt.rel_root};
  const std::vector<int> decoded =
      decode_prediction_graph(g, cd_p, cd_cfg, pred, dn_cfg.token_dim);
  for (std::size_t k = 0; k < decoded.size(); ++k) {
    const int kin_k = kinematic_loss_graph(g, decoded[k], g.constant(*gt_mats[k]),
                                           cd_cfg.lambda_pos, cd_cfg.lambda_vel, cd_cfg.lambda_acc);
    out.kin = k == 0 ? kin_k : g.add(out.kin, kin_k);
  }

  // foot contact: predicted world feet against ground-truth contacts
  const int pred_root = g.add(decoded[2], g.constant(item.ref_root));
  const Mat<S> gt_root = item.gt.rel_root + item.ref_root;
  std::vector<int> feet;
  std::vector<Mat<S>> fweights;
  for (int joint : kFootJoints) {
    const int col = lower_stream_col(joint);
    feet.push_back(g.add(g.slice_cols(decoded[1], col, 3), pred_root));
    const Mat<S> gt_foot = item.gt.lower.middleCols(col, 3) + gt_root;
    fweights.push_back(contact_weights(gt_foot));
  }
  out.fc = contact_speed_loss(g, feet, fweights);
  out.ro = horizontal_direction_loss(g, decoded[2], item.gt.rel_root);

  out.total = g.add(out.simple, g.scale(out.kin, static_cast<S>(w.lambda_kin)));
  out.total = g.add(out.total, g.scale(out.fc, static_cast<S>(w.lambda_fc)));
  out.total = g.add(out.total, g.scale(out.ro, static_cast<S>(w.lambda_ro)));
  if (!all_finite(g.val(out.total))) throw NumericFailure("diffusion loss is not finite");
  return out;
}

}  // namespace rd
