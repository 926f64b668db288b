// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>

#include "reduet/core.hpp"

namespace rd {

// 22-joint skeleton in SMPL joint order. Poses are stored frame-major:
// a sequence is a T x 66 matrix whose row t is (x0,y0,z0, x1,y1,z1, ...)
// in meters, y up, x lateral (positive toward the character's left),
// z forward.
inline constexpr int kNumJoints = 22;
inline constexpr int kPoseDims = 3 * kNumJoints;
inline constexpr int kRootJoint = 0;

inline constexpr std::array<int, kNumJoints> kParent = {
    -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};

// left/right joint pairs swapped by mirroring
inline constexpr std::array<std::array<int, 2>, 8> kMirrorPairs = {{
    {1, 2}, {4, 5}, {7, 8}, {10, 11}, {13, 14}, {16, 17}, {18, 19}, {20, 21}}};

// spine, head and arms
inline constexpr std::array<int, 13> kUpperJoints = {3, 6, 9, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21};
// pelvis, legs and feet; the pelvis is the root so its root-relative
// coordinates are identically zero
inline constexpr std::array<int, 9> kLowerJoints = {0, 1, 2, 4, 5, 7, 8, 10, 11};
inline constexpr std::array<int, 2> kFootJoints = {10, 11};

inline constexpr int kUpperDims = 3 * static_cast<int>(kUpperJoints.size());
inline constexpr int kLowerDims = 3 * static_cast<int>(kLowerJoints.size());

// height of the foot joints in the rest pose, relative to the pelvis
inline constexpr double kGroundY = -0.95;

// first column of a joint's x/y/z triple inside the lower stream
inline int lower_stream_col(int joint) {
  for (std::size_t k = 0; k < kLowerJoints.size(); ++k)
    if (kLowerJoints[k] == joint) return static_cast<int>(3 * k);
  throw InvalidArgument("lower_stream_col: joint not in the lower stream");
}

// standing pose, pelvis at the origin, arms horizontal
inline const Mat<double>& rest_pose_joints() {
  static const Mat<double> rest = [] {
    Mat<double> p(kNumJoints, 3);
    p << 0.00, 0.00, 0.00,   // pelvis
        0.09, -0.07, 0.00,   // left hip
        -0.09, -0.07, 0.00,  // right hip
        0.00, 0.11, 0.01,    // spine1
        0.10, -0.48, 0.00,   // left knee
        -0.10, -0.48, 0.00,  // right knee
        0.00, 0.23, 0.01,    // spine2
        0.10, -0.88, -0.03,  // left ankle
        -0.10, -0.88, -0.03, // right ankle
        0.00, 0.34, 0.02,    // spine3
        0.11, kGroundY, 0.12,   // left foot
        -0.11, kGroundY, 0.12,  // right foot
        0.00, 0.48, 0.01,    // neck
        0.07, 0.44, 0.01,    // left collar
        -0.07, 0.44, 0.01,   // right collar
        0.00, 0.62, 0.03,    // head
        0.17, 0.42, 0.00,    // left shoulder
        -0.17, 0.42, 0.00,   // right shoulder
        0.44, 0.41, 0.00,    // left elbow
        -0.44, 0.41, 0.00,   // right elbow
        0.70, 0.40, 0.00,    // left wrist
        -0.70, 0.40, 0.00;   // right wrist
    return p;
  }();
  return rest;
}

template <typename S>
RowVec<S> rest_pose_row() {
  const auto& joints = rest_pose_joints();
  RowVec<S> row(kPoseDims);
  for (int j = 0; j < kNumJoints; ++j)
    for (int a = 0; a < 3; ++a) row(3 * j + a) = static_cast<S>(joints(j, a));
  return row;
}

// Reflect poses across the x = 0 plane: negate x everywhere and swap
// left/right joints. Applying it twice is the identity.
template <typename S>
Mat<S> mirror_poses(const Mat<S>& seq) {
  require(seq.cols() == kPoseDims, "mirror_poses: expected 66 columns");
  Mat<S> out(seq.rows(), seq.cols());
  std::array<int, kNumJoints> target{};
  for (int j = 0; j < kNumJoints; ++j) target[static_cast<std::size_t>(j)] = j;
  for (const auto& pr : kMirrorPairs) {
    target[static_cast<std::size_t>(pr[0])] = pr[1];
    target[static_cast<std::size_t>(pr[1])] = pr[0];
  }
  for (int j = 0; j < kNumJoints; ++j) {
    const int d = target[static_cast<std::size_t>(j)];
    out.col(3 * d + 0) = -seq.col(3 * j + 0);
    out.col(3 * d + 1) = seq.col(3 * j + 1);
    out.col(3 * d + 2) = seq.col(3 * j + 2);
  }
  return out;
}

template <typename S>
Mat<S> root_track(const Mat<S>& seq) {
  require(seq.cols() == kPoseDims, "root_track: expected 66 columns");
  return seq.leftCols(3);
}

// Body streams used by the codec: upper and lower joints relative to
// the pelvis, plus the pelvis offset from a reference root track.
template <typename S>
struct BodyStreams {
  Mat<S> upper;     // T x 39
  Mat<S> lower;     // T x 27
  Mat<S> rel_root;  // T x 3
};

template <typename S>
BodyStreams<S> decompose(const Mat<S>& seq, const Mat<S>& reference_root) {
  require(seq.cols() == kPoseDims, "decompose: expected 66 columns");
  require(reference_root.rows() == seq.rows() && reference_root.cols() == 3,
          "decompose: reference root must be T x 3");
  BodyStreams<S> s;
  s.upper.resize(seq.rows(), kUpperDims);
  s.lower.resize(seq.rows(), kLowerDims);
  const auto root = seq.leftCols(3);
  for (std::size_t k = 0; k < kUpperJoints.size(); ++k) {
    const int j = kUpperJoints[k];
    s.upper.middleCols(static_cast<Index>(3 * k), 3) = seq.middleCols(3 * j, 3) - root;
  }
  for (std::size_t k = 0; k < kLowerJoints.size(); ++k) {
    const int j = kLowerJoints[k];
    s.lower.middleCols(static_cast<Index>(3 * k), 3) = seq.middleCols(3 * j, 3) - root;
  }
  s.rel_root = root - reference_root;
  return s;
}

template <typename S>
Mat<S> recompose(const BodyStreams<S>& s, const Mat<S>& reference_root) {
  const Index t = s.rel_root.rows();
  require(s.upper.rows() == t && s.lower.rows() == t, "recompose: stream length mismatch");
  require(s.upper.cols() == kUpperDims && s.lower.cols() == kLowerDims && s.rel_root.cols() == 3,
          "recompose: stream width mismatch");
  require(reference_root.rows() == t && reference_root.cols() == 3,
          "recompose: reference root must be T x 3");
  Mat<S> seq(t, kPoseDims);
  Mat<S> root = reference_root + s.rel_root;
  for (std::size_t k = 0; k < kUpperJoints.size(); ++k)
    seq.middleCols(3 * kUpperJoints[k], 3) = s.upper.middleCols(static_cast<Index>(3 * k), 3) + root;
  for (std::size_t k = 0; k < kLowerJoints.size(); ++k)
    seq.middleCols(3 * kLowerJoints[k], 3) = s.lower.middleCols(static_cast<Index>(3 * k), 3) + root;
  return seq;
}

// root-relative joint positions of every joint except the pelvis,
// T x 63; conditioning input for the leader branch
template <typename S>
Mat<S> local_joints(const Mat<S>& seq) {
  require(seq.cols() == kPoseDims, "local_joints: expected 66 columns");
  Mat<S> out(seq.rows(), 3 * (kNumJoints - 1));
  const auto root = seq.leftCols(3);
  for (int j = 1; j < kNumJoints; ++j)
    out.middleCols(3 * (j - 1), 3) = seq.middleCols(3 * j, 3) - root;
  return out;
}

}  // namespace rd
