// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "reduet/hfsq.hpp"
#include "reduet/layers.hpp"
#include "reduet/skeleton.hpp"

namespace rd {

// Three independent stream codecs (upper body, lower body, root offset)
// sharing one architecture: temporal convolutions downsample 4x to the
// latent rate, the hierarchical quantizer snaps latents to grid values,
// and a mirrored conv stack decodes back to the frame rate.
struct CodecConfig {
  HfsqConfig hfsq;
  int hidden = 96;
  int latent_upper = 128;
  int latent_lower = 128;
  int latent_rel = 32;
  double beta = 0.25;       // commitment weight in the latent loss
  double lambda_kin = 1.0;  // weight of the kinematic reconstruction term
  double lambda_lat = 1.0;  // weight of the latent loss
  double lambda_pos = 1.0;
  double lambda_vel = 0.5;
  double lambda_acc = 0.25;
  double p_res = 0.3;       // residual-drop probability
  double sigma_base = 0.05; // stage-1 noise scale under residual drop
  double rho_max = 0.2;     // sub-dim masking rate cap
  bool quantize = true;     // false bypasses rounding for gradient checks

  struct Stream {
    const char* prefix;
    int in_dims;
    int latent_dim;
  };
  std::vector<Stream> streams() const {
    return {{"up", kUpperDims, latent_upper},
            {"low", kLowerDims, latent_lower},
            {"rel", 3, latent_rel}};
  }
  int total_latent() const { return latent_upper + latent_lower + latent_rel; }

  void validate() const {
    hfsq.validate();
    for (const auto& s : streams())
      require(s.latent_dim % hfsq.base.dims() == 0,
              std::string("codec: latent width of ") + s.prefix +
                  " must be a multiple of the level pattern length");
  }
};

template <typename S>
void declare_codec(ParamStore<S>& store, const CodecConfig& cfg, Rng& rng) {
  cfg.validate();
  for (const auto& s : cfg.streams()) {
    const std::string p = s.prefix;
    declare_conv(store, p + ".enc0", s.in_dims, cfg.hidden, 4, rng);
    declare_conv(store, p + ".enc1", cfg.hidden, cfg.hidden, 4, rng);
    declare_conv(store, p + ".enc2", cfg.hidden, s.latent_dim, 1, rng);
    declare_conv(store, p + ".dec0", s.latent_dim, cfg.hidden, 1, rng);
    declare_conv(store, p + ".dec1", cfg.hidden, cfg.hidden, 3, rng);
    declare_conv(store, p + ".dec2", cfg.hidden, cfg.hidden, 3, rng);
    declare_conv(store, p + ".dec3", cfg.hidden, s.in_dims, 1, rng);
  }
}

// frames x in -> frames/4 x latent
template <typename S>
int codec_encode(Graph<S>& g, const BoundParams<S>& p, const std::string& prefix, int x) {
  int h = g.gelu(conv(g, p, prefix + ".enc0", x, 4, 2, 1));
  h = g.gelu(conv(g, p, prefix + ".enc1", h, 4, 2, 1));
  return conv(g, p, prefix + ".enc2", h, 1, 1, 0);
}

// frames/4 x latent -> frames x in
template <typename S>
int codec_decode(Graph<S>& g, const BoundParams<S>& p, const std::string& prefix, int z) {
  int h = g.gelu(conv(g, p, prefix + ".dec0", z, 1, 1, 0));
  h = g.gelu(conv(g, p, prefix + ".dec1", g.upsample2(h), 3, 1, 1));
  h = g.gelu(conv(g, p, prefix + ".dec2", g.upsample2(h), 3, 1, 1));
  return conv(g, p, prefix + ".dec3", h, 1, 1, 0);
}

struct HierGraphNodes {
  std::vector<int> values;  // per-stage grid values
  int aggregate = -1;       // left fold of s_r * values[r]
};

template <typename S>
HierGraphNodes hfsq_quantize_graph(Graph<S>& g, int v, const HfsqConfig& cfg, bool quantize) {
  HierGraphNodes out;
  int e = v;
  for (int r = 0; r < cfg.stages; ++r) {
    const S s = static_cast<S>(cfg.stage_scales[static_cast<std::size_t>(r)]);
    const int b = g.fsq_bound_op(e, cfg.base, static_cast<S>(cfg.gain(r)));
    const int val = g.snap_ste(b, cfg.base, quantize);
    e = g.sub(e, g.scale(val, s));
    out.values.push_back(val);
  }
  out.aggregate = g.scale(out.values[0], static_cast<S>(cfg.stage_scales[0]));
  for (int r = 1; r < cfg.stages; ++r)
    out.aggregate = g.add(out.aggregate,
                          g.scale(out.values[static_cast<std::size_t>(r)],
                                  static_cast<S>(cfg.stage_scales[static_cast<std::size_t>(r)])));
  return out;
}

// Pre-drawn corruption for one latent tensor. Draw order is fixed and
// every draw is consumed regardless of the coin results, so streams
// stay aligned across configurations.
template <typename S>
struct ProgressiveDraw {
  bool drop_high = false;
  Mat<S> noise;                // sigma-scaled stage-1 noise
  std::vector<Mat<S>> keep;    // per stage, 1 keeps, 0 zeroes
};

template <typename S>
ProgressiveDraw<S> draw_progressive(Rng& rng, Index rows, Index cols, int stages, double p_res,
                                    double sigma_base, double rho_max) {
  ProgressiveDraw<S> d;
  d.drop_high = rng.uniform() < p_res;
  d.noise.resize(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) d.noise(i, j) = static_cast<S>(sigma_base * rng.normal());
  const double rho = rng.uniform(0.0, rho_max);
  d.keep.resize(static_cast<std::size_t>(stages));
  for (int r = 0; r < stages; ++r) {
    auto& k = d.keep[static_cast<std::size_t>(r)];
    k.resize(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) k(i, j) = rng.uniform() < rho ? S(0) : S(1);
  }
  return d;
}

// Apply a draw to quantized stage nodes and fold the masked aggregate.
template <typename S>
int masked_aggregate_graph(Graph<S>& g, const HierGraphNodes& q, const HfsqConfig& cfg,
                           const ProgressiveDraw<S>& d) {
  std::vector<int> stages;
  int s0 = q.values[0];
  if (d.drop_high) s0 = g.add_const(s0, d.noise);
  stages.push_back(g.mul_const(s0, d.keep[0]));
  if (!d.drop_high)
    for (std::size_t r = 1; r < q.values.size(); ++r)
      stages.push_back(g.mul_const(q.values[r], d.keep[r]));
  int agg = g.scale(stages[0], static_cast<S>(cfg.stage_scales[0]));
  for (std::size_t r = 1; r < stages.size(); ++r)
    agg = g.add(agg, g.scale(stages[r], static_cast<S>(cfg.stage_scales[r])));
  return agg;
}

template <typename S>
struct CodecLossNodes {
  int total = -1;
  int kin = -1;
  int lat = -1;
};

// smoothing width of the trained L1 penalties
inline constexpr double kSmoothAbsEps = 3e-3;

// mean L1 of the reconstruction error and its first two time
// differences, each term weighted separately
template <typename S>
int kinematic_loss_graph(Graph<S>& g, int pred, int target, double l_pos, double l_vel,
                         double l_acc) {
  const S eps = static_cast<S>(kSmoothAbsEps);
  const int err = g.sub(pred, target);
  const int pos = g.mean_all(g.smooth_abs(err, eps));
  const int verr = g.tdiff(err);
  const int vel = g.mean_all(g.smooth_abs(verr, eps));
  const int acc = g.mean_all(g.smooth_abs(g.tdiff(verr), eps));
  int out = g.scale(pos, static_cast<S>(l_pos));
  out = g.add(out, g.scale(vel, static_cast<S>(l_vel)));
  return g.add(out, g.scale(acc, static_cast<S>(l_acc)));
}

// One window through one stream codec: encode, quantize, corrupt,
// decode, and assemble the losses.
template <typename S>
CodecLossNodes<S> codec_stream_loss(Graph<S>& g, const BoundParams<S>& p, const CodecConfig& cfg,
                                    const std::string& prefix, const Mat<S>& window,
                                    const ProgressiveDraw<S>& draw) {
  CodecLossNodes<S> out;
  const int x = g.constant(window);
  const int v = codec_encode(g, p, prefix, x);
  const HierGraphNodes q = hfsq_quantize_graph(g, v, cfg.hfsq, cfg.quantize);

  // latent loss against the uncorrupted aggregate
  const int d1 = g.sub(v, g.stopgrad(q.aggregate));
  const int pull = g.mean_all(g.mul(d1, d1));
  const int d2 = g.sub(g.stopgrad(v), q.aggregate);
  const int commit = g.mean_all(g.mul(d2, d2));
  out.lat = g.add(pull, g.scale(commit, static_cast<S>(cfg.beta)));

  const int agg = masked_aggregate_graph(g, q, cfg.hfsq, draw);
  const int recon = codec_decode(g, p, prefix, agg);
  out.kin = kinematic_loss_graph(g, recon, x, cfg.lambda_pos, cfg.lambda_vel, cfg.lambda_acc);

  out.total = g.add(g.scale(out.kin, static_cast<S>(cfg.lambda_kin)),
                    g.scale(out.lat, static_cast<S>(cfg.lambda_lat)));
  return out;
}

// Sum of the three stream losses for one window.
template <typename S>
int codec_window_loss(Graph<S>& g, const BoundParams<S>& p, const CodecConfig& cfg,
                      const BodyStreams<S>& gt, Rng& mask_rng) {
  int total = -1;
  const Mat<S>* mats[3] = {&gt.upper, &gt.lower, &gt.rel_root};
  const auto streams = cfg.streams();
  for (std::size_t k = 0; k < streams.size(); ++k) {
    const Index lat_rows = mats[k]->rows() / 4;
    const auto draw = draw_progressive<S>(mask_rng, lat_rows, streams[k].latent_dim,
                                          cfg.hfsq.stages, cfg.p_res, cfg.sigma_base, cfg.rho_max);
    const auto nodes = codec_stream_loss(g, p, cfg, streams[k].prefix, *mats[k], draw);
    total = total < 0 ? nodes.total : g.add(total, nodes.total);
  }
  return total;
}

// Inference helpers: plain forward passes through a throwaway graph.
template <typename S>
Mat<S> codec_encode_infer(const ParamStore<S>& store, const std::string& prefix, const Mat<S>& x) {
  Graph<S> g;
  const BoundParams<S> p = bind_params(g, store, false);
  return g.val(codec_encode(g, p, prefix, g.constant(x)));
}

template <typename S>
Mat<S> codec_decode_infer(const ParamStore<S>& store, const std::string& prefix, const Mat<S>& z) {
  Graph<S> g;
  const BoundParams<S> p = bind_params(g, store, false);
  return g.val(codec_decode(g, p, prefix, g.constant(z)));
}

}  // namespace rd
