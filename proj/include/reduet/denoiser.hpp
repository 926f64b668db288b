// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "reduet/core.hpp"
#include "reduet/layers.hpp"

namespace rd {

// Block layout of a latent-rate sequence. Attention never crosses block
// boundaries, so blocks can be denoised independently and in parallel.
struct BlcSpec {
  Index block_len = 60;
  Index total_len = 60;

  Index blocks() const { return total_len / block_len; }

  void validate() const {
    require(block_len >= 1, "BlcSpec: block_len must be positive");
    require(total_len >= 1, "BlcSpec: total_len must be positive");
    require(total_len % block_len == 0, "BlcSpec: total_len must be a multiple of block_len");
  }
};

struct DenoiserConfig {
  int depth = 4;
  int width = 256;
  int heads = 4;
  int stages = 2;
  // width of one stage's slice of an input row (sum of the three
  // streams' latent dims)
  int token_dim = 288;
  int music_dim = 54;
  // raw music frames folded into one latent-rate row
  int music_stack = 4;
  int d_music = 64;
  int d_lead = 64;
  int h_lead = 64;
  int d_cross = 64;
  int d_temb = 64;
  int mlp_ratio = 2;
  int lead_in_dims = 63;

  int stage_width() const { return width / stages; }
  int cond_dim() const { return d_music + d_temb; }
  int x_dim() const { return stages * token_dim; }
  int music_cols() const { return music_dim * music_stack; }

  void validate() const {
    require(depth >= 1 && width >= 1 && heads >= 1 && stages >= 1, "DenoiserConfig: sizes");
    require(width % heads == 0, "DenoiserConfig: width must divide by heads");
    require(width % stages == 0, "DenoiserConfig: width must divide by stages");
    require(token_dim >= 1 && music_dim >= 1 && music_stack >= 1, "DenoiserConfig: dims");
    require(d_music >= 1 && d_lead >= 1 && h_lead >= 1 && d_cross >= 1, "DenoiserConfig: dims");
    require(d_temb >= 4 && d_temb % 2 == 0, "DenoiserConfig: d_temb must be even and >= 4");
    require(mlp_ratio >= 1 && lead_in_dims >= 1, "DenoiserConfig: dims");
  }
};

// Row i = (sin(pi (i mod T) / T), cos(pi (i mod T) / T)). The phase
// restarts at every block boundary, so all blocks see the same encoding.
template <typename S>
Mat<S> phase_pe_matrix(Index total, Index block_len) {
  require(total >= 0 && block_len >= 1, "phase_pe_matrix: bad lengths");
  Mat<S> pe(total, 2);
  const double pi = std::acos(-1.0);
  for (Index i = 0; i < total; ++i) {
    const double ph = pi * static_cast<double>(i % block_len) / static_cast<double>(block_len);
    pe(i, 0) = static_cast<S>(std::sin(ph));
    pe(i, 1) = static_cast<S>(std::cos(ph));
  }
  return pe;
}

// Sinusoidal embedding of the diffusion step, half sines and half
// cosines over a geometric frequency ladder.
template <typename S>
Mat<S> timestep_embedding(int t, int dim) {
  require(dim >= 4 && dim % 2 == 0, "timestep_embedding: dim must be even and >= 4");
  const int half = dim / 2;
  Mat<S> emb(1, dim);
  for (int k = 0; k < half; ++k) {
    const double freq =
        std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half - 1));
    const double a = static_cast<double>(t) * freq;
    emb(0, k) = static_cast<S>(std::sin(a));
    emb(0, half + k) = static_cast<S>(std::cos(a));
  }
  return emb;
}

// Fold `stack` consecutive raw-rate rows into one latent-rate row.
template <typename S>
Mat<S> stack_rows(const Mat<S>& raw, int stack) {
  require(stack >= 1, "stack_rows: stack must be positive");
  require(raw.rows() % stack == 0, "stack_rows: rows not divisible by stack");
  const Index out_rows = raw.rows() / stack;
  Mat<S> out(out_rows, raw.cols() * stack);
  for (Index i = 0; i < out_rows; ++i)
    for (int s = 0; s < stack; ++s)
      out.block(i, s * raw.cols(), 1, raw.cols()) = raw.row(i * stack + s);
  return out;
}

template <typename S>
void declare_denoiser(ParamStore<S>& store, const DenoiserConfig& cfg, Rng& rng) {
  cfg.validate();
  const Index sw = cfg.stage_width();
  for (int r = 0; r < cfg.stages; ++r)
    declare_dense(store, "embed.s" + std::to_string(r), cfg.token_dim, sw, rng);
  declare_dense(store, "pe", 2, cfg.width, rng);
  declare_dense(store, "music_in", cfg.music_cols(), cfg.d_music, rng);
  declare_conv(store, "lead.c0", cfg.lead_in_dims, cfg.h_lead, 4, rng);
  declare_conv(store, "lead.c1", cfg.h_lead, cfg.h_lead, 4, rng);
  declare_conv(store, "lead.c2", cfg.h_lead, cfg.d_lead, 1, rng);
  for (int r = 0; r < cfg.stages; ++r) {
    store.add_constant("null_music.s" + std::to_string(r), 1, cfg.d_music, 0.0);
    store.add_constant("null_lead.s" + std::to_string(r), 1, cfg.d_lead, 0.0);
  }
  for (int d = 0; d < cfg.depth; ++d) {
    const std::string b = "blk" + std::to_string(d);
    declare_layernorm(store, b + ".ln_sa", cfg.width);
    declare_self_attention(store, b + ".sa", cfg.width, rng);
    for (int r = 0; r < cfg.stages; ++r) {
      const std::string sr = b + ".s" + std::to_string(r);
      declare_layernorm(store, sr + ".ln_ca", sw);
      declare_cross_attention(store, sr + ".ca", sw, cfg.d_lead, cfg.d_cross, sw, rng);
      declare_layernorm(store, sr + ".ln_mlp", sw);
      declare_film(store, sr + ".film", cfg.cond_dim(), sw, rng);
      declare_dense(store, sr + ".mlp0", sw, cfg.mlp_ratio * sw, rng);
      declare_dense(store, sr + ".mlp1", cfg.mlp_ratio * sw, sw, rng);
    }
  }
  for (int r = 0; r < cfg.stages; ++r) {
    const std::string hr = "head.s" + std::to_string(r);
    declare_layernorm(store, hr + ".ln", sw);
    declare_dense(store, hr + ".out", sw, cfg.token_dim, rng);
  }
}

// Leader pose rows at raw rate to features at latent rate (4x down),
// topology mirroring the motion encoder.
template <typename S>
int encode_leader_graph(Graph<S>& g, const BoundParams<S>& p, const DenoiserConfig& cfg,
                        int leader_locals) {
  require(g.val(leader_locals).cols() == cfg.lead_in_dims, "encode_leader: wrong input dims");
  require(g.val(leader_locals).rows() % 4 == 0, "encode_leader: frames must divide by 4");
  const int h0 = g.gelu(conv(g, p, "lead.c0", leader_locals, 4, 2, 1));
  const int h1 = g.gelu(conv(g, p, "lead.c1", h0, 4, 2, 1));
  return conv(g, p, "lead.c2", h1, 1, 1, 0);
}

// Predicts clean stage values from noisy ones. Layout of x_t rows and of
// the output: stage-major slices of token_dim each. Stage r's music
// (leader) input is swapped for its learned null row where music_mask[r]
// (lead_mask[r]) is false. music_lat carries stacked raw rows, lead_lat
// encoded leader features, both at latent rate over the same block
// layout.
template <typename S>
int denoise_graph(Graph<S>& g, const BoundParams<S>& p, const DenoiserConfig& cfg,
                  const BlcSpec& blc, int x_t, int t, int music_lat, int lead_lat,
                  const std::vector<bool>& music_mask, const std::vector<bool>& lead_mask) {
  cfg.validate();
  blc.validate();
  const Index K = blc.total_len;
  require(g.val(x_t).rows() == K && g.val(x_t).cols() == cfg.x_dim(),
          "denoise: x_t shape mismatch");
  require(g.val(music_lat).rows() == K && g.val(music_lat).cols() == cfg.music_cols(),
          "denoise: music shape mismatch");
  require(g.val(lead_lat).rows() == K && g.val(lead_lat).cols() == cfg.d_lead,
          "denoise: leader shape mismatch");
  require(static_cast<int>(music_mask.size()) == cfg.stages &&
              static_cast<int>(lead_mask.size()) == cfg.stages,
          "denoise: cond_mask size");
  require(t >= 0, "denoise: negative step");

  const Index sw = cfg.stage_width();
  std::vector<int> emb;
  for (int r = 0; r < cfg.stages; ++r)
    emb.push_back(dense(g, p, "embed.s" + std::to_string(r),
                        g.slice_cols(x_t, static_cast<Index>(r) * cfg.token_dim, cfg.token_dim)));
  int h = g.concat_cols(emb);
  const int pe = g.constant(phase_pe_matrix<S>(K, blc.block_len));
  h = g.add(h, dense(g, p, "pe", pe));

  const int memb = dense(g, p, "music_in", music_lat);
  const int temb = g.repeat_rows(g.constant(timestep_embedding<S>(t, cfg.d_temb)), K);
  std::vector<int> lead_r, cond_r;
  for (int r = 0; r < cfg.stages; ++r) {
    const std::string sr = ".s" + std::to_string(r);
    const int mr = music_mask[static_cast<std::size_t>(r)]
                       ? memb
                       : g.repeat_rows(p.id("null_music" + sr), K);
    lead_r.push_back(lead_mask[static_cast<std::size_t>(r)]
                         ? lead_lat
                         : g.repeat_rows(p.id("null_lead" + sr), K));
    cond_r.push_back(g.concat_cols({mr, temb}));
  }

  const auto sa_mask = block_causal_mask(K, blc.block_len);
  const auto ca_mask = block_diag_mask(K, K, blc.block_len, blc.block_len);
  for (int d = 0; d < cfg.depth; ++d) {
    const std::string b = "blk" + std::to_string(d);
    h = g.add(h, self_attention(g, p, b + ".sa", layernorm(g, p, b + ".ln_sa", h), cfg.heads,
                                sa_mask));
    std::vector<int> slices;
    for (int r = 0; r < cfg.stages; ++r) {
      const std::string sr = b + ".s" + std::to_string(r);
      int hr = g.slice_cols(h, static_cast<Index>(r) * sw, sw);
      hr = g.add(hr, cross_attention(g, p, sr + ".ca", layernorm(g, p, sr + ".ln_ca", hr),
                                     lead_r[static_cast<std::size_t>(r)], ca_mask));
      int u = film(g, p, sr + ".film", layernorm(g, p, sr + ".ln_mlp", hr),
                   cond_r[static_cast<std::size_t>(r)]);
      u = dense(g, p, sr + ".mlp1", g.gelu(dense(g, p, sr + ".mlp0", u)));
      slices.push_back(g.add(hr, u));
    }
    h = g.concat_cols(slices);
  }

  std::vector<int> outs;
  for (int r = 0; r < cfg.stages; ++r) {
    const std::string hr = "head.s" + std::to_string(r);
    outs.push_back(dense(g, p, hr + ".out",
                         layernorm(g, p, hr + ".ln",
                                   g.slice_cols(h, static_cast<Index>(r) * sw, sw))));
  }
  return g.concat_cols(outs);
}

// Joint form: one per-stage mask dropping music and leader together.
template <typename S>
int denoise_graph(Graph<S>& g, const BoundParams<S>& p, const DenoiserConfig& cfg,
                  const BlcSpec& blc, int x_t, int t, int music_lat, int lead_lat,
                  const std::vector<bool>& cond_mask) {
  return denoise_graph(g, p, cfg, blc, x_t, t, music_lat, lead_lat, cond_mask, cond_mask);
}

}  // namespace rd
