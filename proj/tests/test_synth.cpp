// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "reduet/core.hpp"
#include "reduet/skeleton.hpp"
#include "reduet/synth.hpp"

using namespace rd;

TEST_SUITE_BEGIN("synth");

TEST_CASE("mirroring is an involution and fixes the rest pose") {
  Rng rng(5);
  Mat<double> seq(30, kPoseDims);
  for (Index i = 0; i < seq.rows(); ++i)
    for (Index j = 0; j < seq.cols(); ++j) seq(i, j) = rng.normal();
  Mat<double> twice = mirror_poses(mirror_poses(seq));
  CHECK((twice - seq).cwiseAbs().maxCoeff() == 0.0);

  Mat<double> rest(1, kPoseDims);
  rest.row(0) = rest_pose_row<double>();
  CHECK((mirror_poses(rest) - rest).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("decompose and recompose invert each other") {
  DuetParams p;
  p.seed = 11;
  p.frames = 120;
  Duet d = make_duet(p);
  Mat<double> lead_root = root_track(d.leader);
  auto streams = decompose(d.reactor, lead_root);
  CHECK(streams.upper.cols() == kUpperDims);
  CHECK(streams.lower.cols() == kLowerDims);
  CHECK(streams.rel_root.cols() == 3);
  // pelvis belongs to the lower stream and is zero by construction
  CHECK(streams.lower.leftCols(3).cwiseAbs().maxCoeff() == 0.0);
  Mat<double> back = recompose(streams, lead_root);
  CHECK((back - d.reactor).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("generation is bit-deterministic") {
  DuetParams p;
  p.seed = 42;
  p.frames = 200;
  Duet a = make_duet(p);
  Duet b = make_duet(p);
  CHECK((a.leader - b.leader).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.reactor - b.reactor).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.music - b.music).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.beat_frames == b.beat_frames);

  DuetParams q = p;
  q.seed = 43;
  Duet c = make_duet(q);
  CHECK((a.reactor - c.reactor).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("reactor copies the leader limbs under identity settings") {
  DuetParams p;
  p.seed = 9;
  p.frames = 150;
  p.lag = 0;
  p.noise_scale = 0.0;
  p.mirror = false;
  Duet d = make_duet(p);
  Mat<double> ll = local_joints(d.leader);
  Mat<double> rl = local_joints(d.reactor);
  CHECK((ll - rl).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mirror flag reflects the limbs and nothing else") {
  DuetParams p;
  p.seed = 9;
  p.frames = 150;
  p.lag = 0;
  p.noise_scale = 0.0;
  p.mirror = true;
  Duet d = make_duet(p);
  DuetParams q = p;
  q.mirror = false;
  Duet e = make_duet(q);
  CHECK((d.leader - e.leader).cwiseAbs().maxCoeff() == 0.0);
  CHECK((d.music - e.music).cwiseAbs().maxCoeff() == 0.0);
  CHECK((root_track(d.reactor) - root_track(e.reactor)).cwiseAbs().maxCoeff() == 0.0);

  // build the mirrored reference from the unmirrored run
  Mat<double> mirrored = mirror_poses(e.reactor);
  Mat<double> want = local_joints(mirrored);
  CHECK((local_joints(d.reactor) - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("lag shifts the reactor limbs in time") {
  DuetParams p;
  p.seed = 21;
  p.frames = 180;
  p.lag = 12;
  p.noise_scale = 0.0;
  p.mirror = false;
  Duet d = make_duet(p);
  Mat<double> ll = local_joints(d.leader);
  Mat<double> rl = local_joints(d.reactor);
  for (int t = p.lag; t < p.frames; t += 7)
    CHECK((rl.row(t) - ll.row(t - p.lag)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((rl.row(0) - ll.row(0)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("beats land on the expected frames") {
  auto beats = beat_frames(100, 30, 120.0);
  std::vector<int> want = {0, 15, 30, 45, 60, 75, 90};
  CHECK(beats == want);

  DuetParams p;
  p.seed = 3;
  p.frames = 100;
  Duet d = make_duet(p);
  for (int t = 0; t < p.frames; ++t) {
    const bool on_beat = std::find(want.begin(), want.end(), t) != want.end();
    CHECK(d.music(t, kMusicBeatDim) == (on_beat ? 1.0 : 0.0));
  }
  // onset envelope peaks on the beat
  for (int tb : {15, 30, 45, 60, 75}) {
    CHECK(d.music(tb, kMusicOnsetDim) > d.music(tb + 3, kMusicOnsetDim));
    CHECK(d.music(tb, kMusicOnsetDim) > d.music(tb - 3, kMusicOnsetDim));
    CHECK(d.music(tb, kMusicOnsetDim) > 0.9);
  }
}

TEST_CASE("poses stay finite and feet stay near the ground") {
  DuetParams p;
  p.seed = 17;
  p.frames = 300;
  Duet d = make_duet(p);
  CHECK(all_finite(d.leader));
  CHECK(all_finite(d.reactor));
  CHECK(all_finite(d.music));
  for (const Mat<double>* seq : {&d.leader, &d.reactor}) {
    for (int foot : kFootJoints) {
      const auto y = seq->col(3 * foot + 1);
      CHECK(y.minCoeff() > kGroundY - 0.12);
      CHECK(y.maxCoeff() < kGroundY + 0.12);
    }
  }
  // the two dancers stay apart
  Mat<double> gap = root_track(d.reactor) - root_track(d.leader);
  CHECK(gap.rowwise().norm().minCoeff() > 0.4);
}

TEST_CASE("window starts follow the stride") {
  CHECK(slide_windows(240, {240, 4}) == std::vector<Index>{0});
  CHECK(slide_windows(248, {240, 4}) == std::vector<Index>{0, 4, 8});
  CHECK(slide_windows(480, {240, 240}) == std::vector<Index>{0, 240});
  CHECK(slide_windows(1180, {240, 4}).size() == 236);
  // every covered frame lies in at least window_len / stride windows
  const auto starts = slide_windows(100, {24, 6});
  for (Index f = 24; f + 24 <= 100; ++f) {
    int hits = 0;
    for (Index s : starts) hits += (s <= f && f < s + 24) ? 1 : 0;
    CHECK(hits >= 4);
  }
  CHECK_THROWS_AS(slide_windows(100, {240, 4}), InvalidArgument);
  CHECK_THROWS_AS(slide_windows(240, {240, 0}), InvalidArgument);
  CHECK_THROWS_AS(slide_windows(240, {240, 241}), InvalidArgument);
}

TEST_SUITE_END();
