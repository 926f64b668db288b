// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "reduet/core.hpp"

namespace rd {

// Finite scalar quantization. Each channel j is squashed into
// [-h_j, h_j] with h_j = (L_j - 1) / 2, then snapped to a uniform grid
// of L_j points. Odd L_j grids sit on integers, even ones on
// half-integers, so the quantized value q_j / h_j always spans [-1, 1]
// symmetrically and the integer code q_j + h_j lies in [0, L_j).
struct FsqSpec {
  std::vector<int> levels;

  int dims() const { return static_cast<int>(levels.size()); }
  std::uint64_t codebook_size() const {
    std::uint64_t n = 1;
    for (int l : levels) n *= static_cast<std::uint64_t>(l);
    return n;
  }
};

inline double fsq_half_width(int levels) { return 0.5 * (levels - 1); }

// Nearest grid point in the q domain. Midpoints resolve away from zero;
// an exactly-zero input on an even grid takes the positive value.
template <typename S>
S fsq_snap_q(S b, int levels) {
  const S h = static_cast<S>(fsq_half_width(levels));
  S q;
  if (levels % 2 == 1) {
    q = std::round(b);
  } else {
    q = std::round(b + S(0.5)) - S(0.5);
  }
  if (q > h) q = h;
  if (q < -h) q = -h;
  return q;
}

// Per-column level, tiling the spec pattern across cols columns.
inline std::vector<int> fsq_levels_for_cols(const FsqSpec& spec, Index cols) {
  require(spec.dims() > 0, "fsq: empty level list");
  require(cols % spec.dims() == 0, "fsq: column count not a multiple of spec dims");
  std::vector<int> out(static_cast<std::size_t>(cols));
  for (Index j = 0; j < cols; ++j) out[static_cast<std::size_t>(j)] = spec.levels[static_cast<std::size_t>(j % spec.dims())];
  return out;
}

// b_j = h_j * tanh(gain * z_j); keeps the quantizer input strictly
// inside the representable range.
template <typename S>
Mat<S> fsq_bound(const Mat<S>& z, const FsqSpec& spec, S gain = S(1)) {
  const auto levels = fsq_levels_for_cols(spec, z.cols());
  Mat<S> b(z.rows(), z.cols());
  for (Index j = 0; j < z.cols(); ++j) {
    const S h = static_cast<S>(fsq_half_width(levels[static_cast<std::size_t>(j)]));
    b.col(j) = h * (gain * z.col(j).array()).tanh();
  }
  return b;
}

// Snap bounded activations to their grids; returns values in [-1, 1].
template <typename S>
Mat<S> fsq_quantize_values(const Mat<S>& b, const FsqSpec& spec) {
  const auto levels = fsq_levels_for_cols(spec, b.cols());
  Mat<S> v(b.rows(), b.cols());
  for (Index j = 0; j < b.cols(); ++j) {
    const int l = levels[static_cast<std::size_t>(j)];
    const S h = static_cast<S>(fsq_half_width(l));
    for (Index i = 0; i < b.rows(); ++i) v(i, j) = fsq_snap_q(b(i, j), l) / h;
  }
  return v;
}

// Snap arbitrary values (for example diffusion outputs) onto the
// quantizer grid in value space.
template <typename S>
Mat<S> fsq_snap_values(const Mat<S>& values, const FsqSpec& spec) {
  const auto levels = fsq_levels_for_cols(spec, values.cols());
  Mat<S> v(values.rows(), values.cols());
  for (Index j = 0; j < values.cols(); ++j) {
    const int l = levels[static_cast<std::size_t>(j)];
    const S h = static_cast<S>(fsq_half_width(l));
    for (Index i = 0; i < values.rows(); ++i) {
      S x = values(i, j);
      if (x > S(1)) x = S(1);
      if (x < S(-1)) x = S(-1);
      v(i, j) = fsq_snap_q(x * h, l) / h;
    }
  }
  return v;
}

// Integer codes in [0, L_j) from grid values.
template <typename S>
Mat<int> fsq_codes_from_values(const Mat<S>& values, const FsqSpec& spec) {
  const auto levels = fsq_levels_for_cols(spec, values.cols());
  Mat<int> c(values.rows(), values.cols());
  for (Index j = 0; j < values.cols(); ++j) {
    const int l = levels[static_cast<std::size_t>(j)];
    const double h = fsq_half_width(l);
    for (Index i = 0; i < values.rows(); ++i) {
      const int code = static_cast<int>(std::lround(static_cast<double>(values(i, j)) * h + h));
      c(i, j) = code < 0 ? 0 : (code >= l ? l - 1 : code);
    }
  }
  return c;
}

// value_j = (2 code_j - (L_j - 1)) / (L_j - 1)
template <typename S>
Mat<S> fsq_dequantize(const Mat<int>& codes, const FsqSpec& spec) {
  const auto levels = fsq_levels_for_cols(spec, codes.cols());
  Mat<S> v(codes.rows(), codes.cols());
  for (Index j = 0; j < codes.cols(); ++j) {
    const int l = levels[static_cast<std::size_t>(j)];
    for (Index i = 0; i < codes.rows(); ++i)
      v(i, j) = static_cast<S>(2 * codes(i, j) - (l - 1)) / static_cast<S>(l - 1);
  }
  return v;
}

// Mixed-radix flat index of one code row chunk; first channel is the
// most significant digit.
inline std::uint64_t fsq_flatten(const int* codes, const FsqSpec& spec) {
  std::uint64_t idx = 0;
  for (int j = 0; j < spec.dims(); ++j)
    idx = idx * static_cast<std::uint64_t>(spec.levels[static_cast<std::size_t>(j)]) +
          static_cast<std::uint64_t>(codes[j]);
  return idx;
}

inline std::vector<int> fsq_unflatten(std::uint64_t idx, const FsqSpec& spec) {
  std::vector<int> codes(static_cast<std::size_t>(spec.dims()));
  for (int j = spec.dims() - 1; j >= 0; --j) {
    const std::uint64_t l = static_cast<std::uint64_t>(spec.levels[static_cast<std::size_t>(j)]);
    codes[static_cast<std::size_t>(j)] = static_cast<int>(idx % l);
    idx /= l;
  }
  return codes;
}

}  // namespace rd
