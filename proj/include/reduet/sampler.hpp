// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <thread>
#include <vector>

#include "reduet/diffusion.hpp"

namespace rd {

struct SampleOptions {
  std::uint64_t seed = 0;
  GuidanceSpec guidance{};
  bool blocks_parallel = false;
  int threads = 1;
  bool snap_grid = true;
  bool drop_music = false;
  bool drop_leader = false;
};

template <typename S>
struct SampleOutput {
  Mat<S> reactor;  // 4K x 66 recomposed motion
  Mat<S> latents;  // K x stages*token_dim final stage values
  BodyStreams<S> streams;
};

namespace detail {

// Reverse diffusion for one block. All randomness is counter-keyed by
// (seed, block, step), so the result does not depend on execution order.
template <typename S>
Mat<S> sample_block_latents(const ParamStore<S>& dn_store, const DenoiserConfig& dn_cfg,
                            const NoiseSchedule& sched, Index block_len, Index block_index,
                            const Mat<S>& music_lat, const Mat<S>& lead_lat,
                            const SampleOptions& opt) {
  const Index xd = dn_cfg.x_dim();
  const BlcSpec blc{block_len, block_len};
  const auto stages = static_cast<std::size_t>(dn_cfg.stages);
  const std::vector<bool> music_on(stages, !opt.drop_music);
  const std::vector<bool> lead_on(stages, !opt.drop_leader);
  const std::vector<bool> off(stages, false);
  const std::uint64_t b = static_cast<std::uint64_t>(block_index);

  Mat<S> x = NoiseStream(opt.seed, b, 0).normal_matrix<S>(block_len, xd);
  for (int i = sched.steps; i >= 1; --i) {
    Graph<S> g;
    const BoundParams<S> p = bind_params(g, dn_store, false);
    const int xt = g.constant(x);
    const int mus = g.constant(music_lat);
    const int led = g.constant(lead_lat);
    const int t = sched.t_cond[static_cast<std::size_t>(i)];
    const int cond = denoise_graph(g, p, dn_cfg, blc, xt, t, mus, led, music_on, lead_on);
    Mat<S> x0_hat;
    if (opt.guidance.all_zero()) {
      x0_hat = g.val(cond);
    } else {
      const int unc = denoise_graph(g, p, dn_cfg, blc, xt, t, mus, led, off, off);
      x0_hat = ldcfg_combine(Mat<S>(g.val(cond)), Mat<S>(g.val(unc)), opt.guidance,
                             dn_cfg.token_dim);
    }
    x0_hat = x0_hat.cwiseMax(S(-1)).cwiseMin(S(1));
    const Mat<S> nz = i > 1
                          ? NoiseStream(opt.seed, b, static_cast<std::uint64_t>(i))
                                .normal_matrix<S>(block_len, xd)
                          : Mat<S>::Zero(block_len, xd);
    x = posterior_step(x, x0_hat, i, sched, nz);
  }
  return x;
}

}  // namespace detail

// Generates a reactor for a leader and music track: blockwise reverse
// diffusion over stage values, grid snap, aggregation, frozen decode,
// and recomposition around the leader's root. Sequential and parallel
// block execution run the same per-block code and agree bit for bit.
template <typename S>
SampleOutput<S> sample_reactor(const ParamStore<S>& dn_store, const DenoiserConfig& dn_cfg,
                               const ParamStore<S>& cd_store, const CodecConfig& cd_cfg,
                               const NoiseSchedule& sched, const BlcSpec& blc,
                               const Mat<S>& music_raw, const Mat<S>& leader_pose,
                               const SampleOptions& opt) {
  dn_cfg.validate();
  cd_cfg.validate();
  sched.validate();
  blc.validate();
  opt.guidance.validate();
  require(static_cast<int>(opt.guidance.s.size()) == dn_cfg.stages,
          "sample: guidance stage count");
  require(cd_cfg.hfsq.stages == dn_cfg.stages && cd_cfg.total_latent() == dn_cfg.token_dim,
          "sample: codec and denoiser layouts disagree");
  require(dn_cfg.music_stack == 4, "sample: music stack must match the 4x latent rate");
  const Index frames = 4 * blc.total_len;
  require(music_raw.rows() == frames && music_raw.cols() == dn_cfg.music_dim,
          "sample: music shape");
  require(leader_pose.rows() == frames && leader_pose.cols() == kPoseDims,
          "sample: leader shape");
  require(opt.threads >= 1, "sample: thread count");

  const Index B = blc.blocks();
  const Index T = blc.block_len;
  const Index F = 4 * T;

  // per-block conditions; the leader is encoded block by block so block
  // independence survives the conv padding
  std::vector<Mat<S>> mus(static_cast<std::size_t>(B)), led(static_cast<std::size_t>(B));
  for (Index b = 0; b < B; ++b) {
    mus[static_cast<std::size_t>(b)] =
        stack_rows(Mat<S>(music_raw.middleRows(b * F, F)), dn_cfg.music_stack);
    Graph<S> g;
    const BoundParams<S> p = bind_params(g, dn_store, false);
    const Mat<S> locals = local_joints(Mat<S>(leader_pose.middleRows(b * F, F)));
    led[static_cast<std::size_t>(b)] =
        g.val(encode_leader_graph(g, p, dn_cfg, g.constant(locals)));
  }

  std::vector<Mat<S>> lat(static_cast<std::size_t>(B));
  auto work = [&](Index b) {
    lat[static_cast<std::size_t>(b)] = detail::sample_block_latents(
        dn_store, dn_cfg, sched, T, b, mus[static_cast<std::size_t>(b)],
        led[static_cast<std::size_t>(b)], opt);
  };
  if (opt.blocks_parallel && opt.threads > 1 && B > 1) {
    for (Index start = 0; start < B; start += opt.threads) {
      std::vector<std::thread> pool;
      for (Index b = start; b < std::min(B, start + opt.threads); ++b)
        pool.emplace_back(work, b);
      for (auto& th : pool) th.join();
    }
  } else {
    for (Index b = 0; b < B; ++b) work(b);
  }

  SampleOutput<S> out;
  out.latents.resize(blc.total_len, dn_cfg.x_dim());
  for (Index b = 0; b < B; ++b)
    out.latents.middleRows(b * T, T) = lat[static_cast<std::size_t>(b)];

  // snap each stage slice onto its grid, aggregate, decode
  const auto streams = cd_cfg.streams();
  Mat<S>* outs[3] = {&out.streams.upper, &out.streams.lower, &out.streams.rel_root};
  Index off = 0;
  for (std::size_t k = 0; k < streams.size(); ++k) {
    Mat<S> agg = Mat<S>::Zero(blc.total_len, streams[k].latent_dim);
    for (int r = 0; r < cd_cfg.hfsq.stages; ++r) {
      const Index col = static_cast<Index>(r) * dn_cfg.token_dim + off;
      Mat<S> sl = out.latents.middleCols(col, streams[k].latent_dim);
      if (opt.snap_grid) {
        sl = fsq_snap_values(sl, cd_cfg.hfsq.base);
        out.latents.middleCols(col, streams[k].latent_dim) = sl;
      }
      agg += static_cast<S>(cd_cfg.hfsq.stage_scales[static_cast<std::size_t>(r)]) * sl;
    }
    *outs[k] = codec_decode_infer(cd_store, streams[k].prefix, agg);
    off += streams[k].latent_dim;
  }
  out.reactor = recompose(out.streams, root_track(leader_pose));
  return out;
}

}  // namespace rd
