// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "reduet/core.hpp"

namespace rd {

inline constexpr int kMusicDims = 54;
// all music channels except these two are decoys with no causal tie to
// the dancers
inline constexpr int kMusicOnsetDim = 52;
inline constexpr int kMusicBeatDim = 53;

struct DuetParams {
  std::uint64_t seed = 1;
  int fps = 30;
  int frames = 900;
  double bpm = 120.0;
  int lag = 12;               // reactor answers the leader this many frames late
  double noise_scale = 0.01;  // meters, applied to reactor joint offsets
  bool mirror = true;         // reactor mirrors the leader left/right
};

struct Duet {
  DuetParams params;
  Mat<double> leader;   // T x 66
  Mat<double> reactor;  // T x 66
  Mat<double> music;    // T x 54
  std::vector<int> beat_frames;
};

std::vector<int> beat_frames(int frames, int fps, double bpm);

// Deterministic leader/reactor pair: the leader dances beat-locked
// sinusoids on a drifting root, the reactor mirrors the leader with a
// time lag, stands at an offset and orbits it on the beat. The music
// track is mostly decoy sinusoids plus a beat-onset envelope and a
// binary beat flag.
Duet make_duet(const DuetParams& p);

// Training windows cut from a longer take. A dense stride slides the
// block phase across the data, a stride equal to the window length
// tiles it without overlap.
struct WindowSpec {
  int window_len = 240;
  int stride = 4;

  void validate() const {
    require(window_len >= 1, "WindowSpec: window_len must be positive");
    require(stride >= 1 && stride <= window_len, "WindowSpec: stride out of [1, window_len]");
  }
};

inline std::vector<Index> slide_windows(Index total_frames, const WindowSpec& spec) {
  spec.validate();
  require(total_frames >= spec.window_len, "slide_windows: take shorter than one window");
  std::vector<Index> starts;
  for (Index s = 0; s + spec.window_len <= total_frames; s += spec.stride) starts.push_back(s);
  return starts;
}

}  // namespace rd
