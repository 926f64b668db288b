// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#include "reduet/synth.hpp"

#include <cmath>

#include "reduet/skeleton.hpp"

namespace rd {

namespace {
constexpr double kTwoPi = 6.283185307179586476925287;

bool is_lower_limb(int joint) {
  for (int j : kLowerJoints)
    if (j == joint) return true;
  return false;
}
}  // namespace

std::vector<int> beat_frames(int frames, int fps, double bpm) {
  std::vector<int> beats;
  for (int k = 0;; ++k) {
    const int t = static_cast<int>(std::lround(fps * 60.0 * k / bpm));
    if (t >= frames) break;
    beats.push_back(t);
  }
  return beats;
}

Duet make_duet(const DuetParams& p) {
  require(p.frames >= 2, "make_duet: frames must be at least 2");
  require(p.fps > 0, "make_duet: fps must be positive");
  require(p.bpm > 0.0, "make_duet: bpm must be positive");
  require(p.lag >= 0, "make_duet: lag must be non-negative");
  require(p.noise_scale >= 0.0, "make_duet: noise_scale must be non-negative");

  const int t_total = p.frames;
  const double omega_beat = kTwoPi * (p.bpm / 60.0) / p.fps;  // rad per frame

  Rng root_rng = Rng(p.seed).fork(1);
  Rng limb_rng = Rng(p.seed).fork(2);
  Rng partner_rng = Rng(p.seed).fork(3);
  Rng music_rng = Rng(p.seed).fork(4);
  Rng noise_rng = Rng(p.seed).fork(5);

  Duet d;
  d.params = p;
  d.beat_frames = beat_frames(t_total, p.fps, p.bpm);

  // leader root: slow horizontal drift plus a small beat-locked bounce
  const double phase_x = root_rng.uniform(0.0, kTwoPi);
  const double phase_z = root_rng.uniform(0.0, kTwoPi);
  const double phase_y = root_rng.uniform(0.0, kTwoPi);
  Mat<double> leader_root(t_total, 3);
  for (int t = 0; t < t_total; ++t) {
    leader_root(t, 0) = 0.35 * std::sin(omega_beat * t / 8.0 + phase_x);
    leader_root(t, 1) = 0.015 * std::sin(omega_beat * t + phase_y);
    leader_root(t, 2) = 0.35 * std::cos(omega_beat * t / 8.0 + phase_z);
  }

  // leader limbs: per joint and axis, a sinusoid at an integer multiple
  // of the beat frequency around the rest offset; legs swing with
  // reduced amplitude so the feet stay near the ground
  const auto& rest = rest_pose_joints();
  Mat<double> leader_local = Mat<double>::Zero(t_total, kPoseDims);
  for (int j = 1; j < kNumJoints; ++j) {
    const double damp = is_lower_limb(j) ? 0.3 : 1.0;
    for (int a = 0; a < 3; ++a) {
      const double amp = damp * limb_rng.uniform(0.03, 0.22);
      const double mult = 1.0 + static_cast<double>(limb_rng.uniform_int(3));
      const double phase = limb_rng.uniform(0.0, kTwoPi);
      for (int t = 0; t < t_total; ++t)
        leader_local(t, 3 * j + a) =
            rest(j, a) + amp * std::sin(mult * omega_beat * t + phase);
    }
  }

  // reactor: stands at a fixed offset from the leader, orbits that spot
  // once per beat, and mirrors the leader's limbs with a time lag
  const double off_x = partner_rng.uniform(0.9, 1.3);
  const double off_z = partner_rng.uniform(-0.3, 0.3);
  const double orbit_r = partner_rng.uniform(0.05, 0.15);
  const double orbit_phase = partner_rng.uniform(0.0, kTwoPi);

  Mat<double> reactor_local(t_total, kPoseDims);
  for (int t = 0; t < t_total; ++t) {
    const int src = t >= p.lag ? t - p.lag : 0;
    reactor_local.row(t) = leader_local.row(src);
  }
  if (p.mirror) reactor_local = mirror_poses(reactor_local);
  for (int t = 0; t < t_total; ++t)
    for (int c = 3; c < kPoseDims; ++c)
      reactor_local(t, c) += p.noise_scale * noise_rng.normal();

  Mat<double> reactor_root(t_total, 3);
  for (int t = 0; t < t_total; ++t) {
    const double theta = omega_beat * t + orbit_phase;
    reactor_root(t, 0) = leader_root(t, 0) + off_x + orbit_r * std::cos(theta);
    reactor_root(t, 1) = leader_root(t, 1);
    reactor_root(t, 2) = leader_root(t, 2) + off_z + orbit_r * std::sin(theta);
  }

  d.leader.resize(t_total, kPoseDims);
  d.reactor.resize(t_total, kPoseDims);
  for (int c = 0; c < kPoseDims; ++c) {
    const int axis = c % 3;
    d.leader.col(c) = leader_local.col(c) + leader_root.col(axis);
    d.reactor.col(c) = reactor_local.col(c) + reactor_root.col(axis);
  }

  // music: decoy sinusoids, then a Gaussian onset envelope and a binary
  // beat flag on the last two channels
  d.music.resize(t_total, kMusicDims);
  for (int c = 0; c < kMusicOnsetDim; ++c) {
    const double freq = music_rng.uniform(0.25, 6.0);
    const double amp = music_rng.uniform(0.5, 1.5);
    const double phase = music_rng.uniform(0.0, kTwoPi);
    const double omega = kTwoPi * freq / p.fps;
    for (int t = 0; t < t_total; ++t) d.music(t, c) = amp * std::sin(omega * t + phase);
  }
  const double sigma = 1.5;
  d.music.col(kMusicOnsetDim).setZero();
  d.music.col(kMusicBeatDim).setZero();
  for (int tb : d.beat_frames) {
    const int lo = std::max(0, tb - 12);
    const int hi = std::min(t_total - 1, tb + 12);
    for (int t = lo; t <= hi; ++t) {
      const double dt = t - tb;
      d.music(t, kMusicOnsetDim) += std::exp(-dt * dt / (2.0 * sigma * sigma));
    }
    d.music(tb, kMusicBeatDim) = 1.0;
  }
  return d;
}

}  // namespace rd
