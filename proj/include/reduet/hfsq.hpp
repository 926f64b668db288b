// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "reduet/core.hpp"
#include "reduet/fsq.hpp"

namespace rd {

// Cascaded residual quantization. Stage r snaps the running residual
// onto its grid and contributes scale s_r of the result:
//   e_1 = v;  value_r = snap(bound_r(e_r));  e_{r+1} = e_r - s_r * value_r
// The stage bound uses input gain 1/s_r so the shrinking residual keeps
// using the full grid. Aggregation is the left fold of s_r * value_r in
// stage order; the final residual e_{R+1} is recorded so the chain can
// be replayed bit-exactly from the stored codes.
struct HfsqConfig {
  FsqSpec base{{8, 5, 5, 5}};  // tiled across the latent width
  int stages = 2;
  std::vector<double> stage_scales{1.0, 0.25};

  double gain(int stage) const { return 1.0 / stage_scales[static_cast<std::size_t>(stage)]; }
  void validate() const {
    require(stages >= 1, "hfsq: stages must be >= 1");
    require(static_cast<int>(stage_scales.size()) >= stages, "hfsq: missing stage scales");
    for (int r = 0; r < stages; ++r)
      require(stage_scales[static_cast<std::size_t>(r)] > 0.0, "hfsq: stage scales must be positive");
    require(base.dims() > 0, "hfsq: empty level pattern");
  }
};

template <typename S>
struct HierLatent {
  std::vector<Mat<int>> codes;   // per stage, rows x width
  std::vector<Mat<S>> values;    // per stage, grid values in [-1, 1]
  Mat<S> aggregate;              // left fold of s_r * values[r]
  Mat<S> final_residual;         // e_{R+1}
};

template <typename S>
Mat<S> hfsq_aggregate(const std::vector<Mat<S>>& values, const HfsqConfig& cfg) {
  require(static_cast<int>(values.size()) == cfg.stages, "hfsq_aggregate: stage count mismatch");
  Mat<S> agg = static_cast<S>(cfg.stage_scales[0]) * values[0];
  for (int r = 1; r < cfg.stages; ++r)
    agg = agg + static_cast<S>(cfg.stage_scales[static_cast<std::size_t>(r)]) *
                    values[static_cast<std::size_t>(r)];
  return agg;
}

template <typename S>
HierLatent<S> hfsq_quantize(const Mat<S>& v, const HfsqConfig& cfg) {
  cfg.validate();
  HierLatent<S> out;
  Mat<S> e = v;
  for (int r = 0; r < cfg.stages; ++r) {
    const S s = static_cast<S>(cfg.stage_scales[static_cast<std::size_t>(r)]);
    Mat<S> b = fsq_bound(e, cfg.base, static_cast<S>(cfg.gain(r)));
    Mat<int> codes = fsq_codes_from_values(fsq_quantize_values(b, cfg.base), cfg.base);
    // store the dequantized form so replay from codes is bit-identical
    Mat<S> vals = fsq_dequantize<S>(codes, cfg.base);
    e = e - s * vals;
    out.codes.push_back(std::move(codes));
    out.values.push_back(std::move(vals));
  }
  out.aggregate = hfsq_aggregate(out.values, cfg);
  out.final_residual = std::move(e);
  return out;
}

template <typename S>
Mat<S> hfsq_decode_codes(const std::vector<Mat<int>>& codes, const HfsqConfig& cfg) {
  std::vector<Mat<S>> values;
  values.reserve(codes.size());
  for (const auto& c : codes) values.push_back(fsq_dequantize<S>(c, cfg.base));
  return hfsq_aggregate(values, cfg);
}

// Training-time corruption of the continuous stage values; codes are
// left untouched. Draw order per call, always consumed so that the rng
// stream does not depend on the outcome:
//   1. one uniform (residual-drop coin)
//   2. rows*cols normals (stage-1 noise)
//   3. one uniform (the sub-dim rate rho)
//   4. stages * rows * cols uniforms (keep coins)
template <typename S>
HierLatent<S> progressive_mask(const HierLatent<S>& in, const HfsqConfig& cfg, Rng& rng,
                               double p_res, double sigma_base, double rho_max) {
  require(p_res >= 0.0 && p_res <= 1.0, "progressive_mask: p_res out of range");
  require(sigma_base >= 0.0, "progressive_mask: sigma_base must be non-negative");
  require(rho_max >= 0.0 && rho_max <= 1.0, "progressive_mask: rho_max out of range");
  require(!in.values.empty(), "progressive_mask: empty latent");
  const Index rows = in.values[0].rows(), cols = in.values[0].cols();

  HierLatent<S> out = in;
  const bool drop_high = rng.uniform() < p_res;
  Mat<S> noise(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) noise(i, j) = static_cast<S>(sigma_base * rng.normal());
  const double rho = rng.uniform(0.0, rho_max);
  if (drop_high) {
    out.values[0] += noise;
    for (std::size_t r = 1; r < out.values.size(); ++r) out.values[r].setZero();
  }
  for (std::size_t r = 0; r < out.values.size(); ++r)
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j)
        if (rng.uniform() < rho) out.values[r](i, j) = S(0);

  out.aggregate = hfsq_aggregate(out.values, cfg);
  return out;
}

}  // namespace rd
