// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace rd {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;
template <typename S>
using ColVec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatF = Mat<float>;
using MatD = Mat<double>;
using Index = Eigen::Index;

// Thrown for precondition violations (bad shapes, bad arguments).
struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
// Thrown when training or sampling produces non-finite values.
struct NumericFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidArgument(msg);
}

// SplitMix64 finalizer. Fully specified bit mixing, identical on every
// platform; all randomness in this project derives from it so that runs
// are reproducible down to the bit.
inline constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

// uniform in [0,1) from 53 random bits
inline double u64_to_unit(std::uint64_t u) {
  return static_cast<double>(u >> 11) * 0x1.0p-53;
}

// Sequential deterministic generator. Box-Muller for normals (no cached
// spare, so the draw order is trivially predictable).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix64(seed ^ 0x853c49e6748fea9bULL)) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }
  double uniform() { return u64_to_unit(next_u64()); }
  // uniform in [lo, hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // integer in [0, n)
  std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }
  // fork an independent stream; deterministic given (parent seed path, tag)
  Rng fork(std::uint64_t tag) const { return Rng(hash_combine(state_, tag)); }

 private:
  std::uint64_t state_;
};

// Stateless counter-based noise stream. Values depend only on the key and
// the element index, never on draw order, so parallel consumers pulling
// the same indices see the same stream.
class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, std::uint64_t a, std::uint64_t b)
      : key_(hash_combine(hash_combine(mix64(seed), a), b)) {}

  double normal(std::uint64_t idx) const {
    const std::uint64_t u1 = mix64(key_ ^ (2 * idx));
    const std::uint64_t u2 = mix64(key_ ^ (2 * idx + 1));
    double x = u64_to_unit(u1);
    if (x <= 0.0) x = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(x)) *
           std::cos(6.283185307179586476925287 * u64_to_unit(u2));
  }

  template <typename S>
  Mat<S> normal_matrix(Index rows, Index cols, std::uint64_t base = 0) const {
    Mat<S> m(rows, cols);
    std::uint64_t idx = base;
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m(i, j) = static_cast<S>(normal(idx++));
    return m;
  }

 private:
  std::uint64_t key_;
};

template <typename S>
bool all_finite(const Mat<S>& m) {
  return m.allFinite();
}

// rows scaled to unit length through a smooth floor, so the map stays
// differentiable at the origin
template <typename S>
Mat<S> unit_rows_mat(const Mat<S>& x, S eps) {
  Mat<S> v(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const S s = std::sqrt(x.row(i).squaredNorm() + eps * eps);
    v.row(i) = x.row(i) / s;
  }
  return v;
}

}  // namespace rd
