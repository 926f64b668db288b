// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "reduet/skeleton.hpp"

namespace rd {

// Named scalar results of one evaluation run.
struct MetricReport {
  std::map<std::string, double> values;

  void set(const std::string& name, double v) { values[name] = v; }
  double at(const std::string& name) const {
    const auto it = values.find(name);
    require(it != values.end(), "metric report: missing " + name);
    return it->second;
  }
  bool has(const std::string& name) const { return values.count(name) != 0; }

  void validate() const {
    for (const auto& [name, v] : values)
      require(std::isfinite(v), "metric report: " + name + " is not finite");
    for (const char* name :
         {"mpjpe_mm", "mpjve_mm_per_frame", "boundary_jitter", "aits_seconds"})
      if (has(name)) require(at(name) >= 0.0, std::string("metric report: ") + name + " < 0");
  }
};

inline void write_metric_csv(const std::string& path, const MetricReport& report) {
  std::ofstream out(path);
  require(out.good(), "cannot open " + path);
  out << "metric,value\n";
  for (const auto& [name, v] : report.values) out << name << "," << v << "\n";
  require(out.good(), "failed writing " + path);
}

namespace detail {

// mean over rows and joint triplets of the L2 norm of a - b
template <typename S>
double joint_mean_l2(const Mat<S>& a, const Mat<S>& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "joint_mean_l2: shape mismatch");
  require(a.cols() % 3 == 0 && a.cols() > 0 && a.rows() > 0, "joint_mean_l2: need T x 3J");
  const Index joints = a.cols() / 3;
  double sum = 0.0;
  for (Index t = 0; t < a.rows(); ++t)
    for (Index j = 0; j < joints; ++j)
      sum += (a.template block<1, 3>(t, 3 * j) - b.template block<1, 3>(t, 3 * j))
                 .template cast<double>()
                 .norm();
  return sum / static_cast<double>(a.rows() * joints);
}

}  // namespace detail

// Mean per-joint position error in millimeters.
template <typename S>
double mpjpe_mm(const Mat<S>& gt, const Mat<S>& pred) {
  return 1000.0 * detail::joint_mean_l2(gt, pred);
}

// Mean per-joint velocity error in millimeters per frame.
template <typename S>
double mpjve_mm(const Mat<S>& gt, const Mat<S>& pred) {
  require(gt.rows() >= 2, "mpjve: need at least 2 frames");
  const Mat<S> vg = gt.bottomRows(gt.rows() - 1) - gt.topRows(gt.rows() - 1);
  const Mat<S> vp = pred.bottomRows(pred.rows() - 1) - pred.topRows(pred.rows() - 1);
  return 1000.0 * detail::joint_mean_l2(vg, vp);
}

// Mean joint-averaged L2 velocity change around block boundaries. Every
// boundary must have its full window of velocity differences inside the
// sequence; boundaries that do not fit are skipped.
template <typename S>
double boundary_jitter(const Mat<S>& motion, const std::vector<Index>& boundaries,
                       Index half_radius = 30) {
  require(motion.cols() % 3 == 0 && motion.cols() > 0, "boundary_jitter: need T x 3J");
  require(half_radius >= 1, "boundary_jitter: half_radius");
  const Index T = motion.rows();
  require(T >= 3, "boundary_jitter: need at least 3 frames");
  const Index joints = motion.cols() / 3;
  // dv row t compares velocities t -> t+1 and t+1 -> t+2
  const Index dv_rows = T - 2;
  double total = 0.0;
  int used = 0;
  for (const Index b : boundaries) {
    if (b - half_radius < 0 || b + half_radius > dv_rows) continue;
    double acc = 0.0;
    for (Index t = b - half_radius; t < b + half_radius; ++t) {
      double frame = 0.0;
      for (Index j = 0; j < joints; ++j) {
        const auto p0 = motion.template block<1, 3>(t, 3 * j).template cast<double>();
        const auto p1 = motion.template block<1, 3>(t + 1, 3 * j).template cast<double>();
        const auto p2 = motion.template block<1, 3>(t + 2, 3 * j).template cast<double>();
        frame += (p2 - 2.0 * p1 + p0).norm();
      }
      acc += frame / static_cast<double>(joints);
    }
    total += acc / static_cast<double>(2 * half_radius);
    ++used;
  }
  require(used > 0, "boundary_jitter: no boundary with a full window");
  return total / used;
}

// Foot-skating indicator: mean over frames of the horizontal center-of-mass
// acceleration magnitude times the slower foot's speed, normalized by the
// peak horizontal acceleration. Zero when the body never accelerates.
template <typename S>
double pfc_lite(const Mat<S>& motion) {
  require(motion.cols() == kPoseDims, "pfc_lite: expected 66 columns");
  const Index T = motion.rows();
  require(T >= 3, "pfc_lite: need at least 3 frames");
  Mat<double> com(T, 3);
  for (Index t = 0; t < T; ++t) {
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    for (int j = 0; j < kNumJoints; ++j)
      c += motion.template block<1, 3>(t, 3 * j).template cast<double>().transpose();
    com.row(t) = (c / kNumJoints).transpose();
  }
  double sum = 0.0, peak = 0.0;
  std::vector<double> score(static_cast<std::size_t>(T - 2));
  for (Index t = 0; t + 2 < T; ++t) {
    const Eigen::RowVector3d a = com.row(t + 2) - 2.0 * com.row(t + 1) + com.row(t);
    const double a_hor = std::sqrt(a(0) * a(0) + a(2) * a(2));
    peak = std::max(peak, a_hor);
    double slow = std::numeric_limits<double>::infinity();
    for (const int j : kFootJoints) {
      const auto p0 = motion.template block<1, 3>(t, 3 * j).template cast<double>();
      const auto p2 = motion.template block<1, 3>(t + 2, 3 * j).template cast<double>();
      slow = std::min(slow, 0.5 * (p2 - p0).norm());
    }
    score[static_cast<std::size_t>(t)] = a_hor * slow;
  }
  if (peak == 0.0) return 0.0;
  for (const double v : score) sum += v;
  return sum / (static_cast<double>(T - 2) * peak);
}

// Frames where the joint-averaged speed has a strict local minimum, with
// minima closer than 5 frames resolved in favor of the deeper one.
template <typename S>
std::vector<Index> kinematic_beats(const Mat<S>& motion) {
  require(motion.cols() % 3 == 0 && motion.cols() > 0, "kinematic_beats: need T x 3J");
  const Index T = motion.rows();
  require(T >= 3, "kinematic_beats: need at least 3 frames");
  const Index joints = motion.cols() / 3;
  std::vector<double> speed(static_cast<std::size_t>(T - 1));
  for (Index t = 0; t + 1 < T; ++t) {
    double s = 0.0;
    for (Index j = 0; j < joints; ++j)
      s += (motion.template block<1, 3>(t + 1, 3 * j) - motion.template block<1, 3>(t, 3 * j))
               .template cast<double>()
               .norm();
    speed[static_cast<std::size_t>(t)] = s / static_cast<double>(joints);
  }
  std::vector<Index> minima;
  for (Index t = 1; t + 1 < static_cast<Index>(speed.size()); ++t) {
    const auto u = static_cast<std::size_t>(t);
    if (speed[u] < speed[u - 1] && speed[u] < speed[u + 1]) minima.push_back(t);
  }
  // deepest-first suppression with a 5 frame separation
  std::vector<Index> order = minima;
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    const double sa = speed[static_cast<std::size_t>(a)];
    const double sb = speed[static_cast<std::size_t>(b)];
    return sa != sb ? sa < sb : a < b;
  });
  std::vector<Index> kept;
  for (const Index t : order) {
    bool clash = false;
    for (const Index k : kept)
      if (std::abs(t - k) < 5) clash = true;
    if (!clash) kept.push_back(t);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

// Mean over reference beats of exp(-d^2 / (2 sigma^2)) with d the frame
// distance to the nearest candidate beat. No candidates scores zero.
inline double beat_score(const std::vector<Index>& reference, const std::vector<Index>& candidate,
                         double sigma = 3.0) {
  require(!reference.empty(), "beat_score: empty reference beats");
  require(sigma > 0.0, "beat_score: sigma");
  if (candidate.empty()) return 0.0;
  double sum = 0.0;
  for (const Index r : reference) {
    double d = std::numeric_limits<double>::infinity();
    for (const Index c : candidate) d = std::min(d, static_cast<double>(std::abs(r - c)));
    sum += std::exp(-d * d / (2.0 * sigma * sigma));
  }
  return sum / static_cast<double>(reference.size());
}

// Motion peaks against music beats.
inline double beat_align(const std::vector<Index>& motion_beats,
                         const std::vector<Index>& music_beats, double sigma = 3.0) {
  return beat_score(music_beats, motion_beats, sigma);
}

// Reactor peaks against the leader's peaks.
inline double beat_echo(const std::vector<Index>& leader_beats,
                        const std::vector<Index>& reactor_beats, double sigma = 3.0) {
  return beat_score(leader_beats, reactor_beats, sigma);
}

inline constexpr int kKinematicFeatureDim = 32;

// Joint groups for the hand-crafted distribution features, covering every
// joint except the pelvis.
inline const std::vector<std::vector<int>>& feature_joint_groups() {
  static const std::vector<std::vector<int>> groups = {
      {3, 6, 9},      // spine
      {12, 15},       // neck and head
      {13, 16, 18},   // left arm
      {20},           // left wrist
      {14, 17, 19},   // right arm
      {21},           // right wrist
      {1, 4, 7, 10},  // left leg
      {2, 5, 8, 11},  // right leg
  };
  return groups;
}

// One sample's distribution feature: per joint group the pooled mean speed,
// speed deviation, and mean acceleration magnitude of root-relative joints,
// then the relative root's per-axis mean and deviation plus its speed mean
// and deviation.
template <typename S>
Mat<double> kinematic_feature_row(const Mat<S>& seq, const Mat<S>& rel_root) {
  require(seq.rows() >= 3, "features: need at least 3 frames");
  require(rel_root.rows() == seq.rows() && rel_root.cols() == 3, "features: rel_root shape");
  const Mat<double> local = local_joints(seq).template cast<double>();
  const Index T = seq.rows();
  Mat<double> out(1, kKinematicFeatureDim);
  Index col = 0;
  for (const auto& group : feature_joint_groups()) {
    std::vector<double> speeds, accs;
    for (const int j : group) {
      const Index c = 3 * (j - 1);
      for (Index t = 0; t + 1 < T; ++t)
        speeds.push_back((local.block<1, 3>(t + 1, c) - local.block<1, 3>(t, c)).norm());
      for (Index t = 0; t + 2 < T; ++t)
        accs.push_back((local.block<1, 3>(t + 2, c) - 2.0 * local.block<1, 3>(t + 1, c) +
                        local.block<1, 3>(t, c))
                           .norm());
    }
    double sm = 0.0;
    for (const double v : speeds) sm += v;
    sm /= static_cast<double>(speeds.size());
    double sv = 0.0;
    for (const double v : speeds) sv += (v - sm) * (v - sm);
    sv = std::sqrt(sv / static_cast<double>(speeds.size()));
    double am = 0.0;
    for (const double v : accs) am += v;
    am /= static_cast<double>(accs.size());
    out(0, col++) = sm;
    out(0, col++) = sv;
    out(0, col++) = am;
  }
  const Mat<double> rr = rel_root.template cast<double>();
  for (int a = 0; a < 3; ++a) out(0, col++) = rr.col(a).mean();
  for (int a = 0; a < 3; ++a) {
    const double m = rr.col(a).mean();
    out(0, col++) = std::sqrt((rr.col(a).array() - m).square().mean());
  }
  std::vector<double> rs(static_cast<std::size_t>(T - 1));
  for (Index t = 0; t + 1 < T; ++t)
    rs[static_cast<std::size_t>(t)] = (rr.row(t + 1) - rr.row(t)).norm();
  double rm = 0.0;
  for (const double v : rs) rm += v;
  rm /= static_cast<double>(rs.size());
  double rv = 0.0;
  for (const double v : rs) rv += (v - rm) * (v - rm);
  out(0, col++) = rm;
  out(0, col++) = std::sqrt(rv / static_cast<double>(rs.size()));
  require(col == kKinematicFeatureDim, "features: dimension mismatch");
  return out;
}

// Frechet distance between two Gaussians given their moments:
// |mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2)), with the cross sqrt
// evaluated through symmetric eigendecompositions.
inline double frechet_from_moments(const Mat<double>& mu_a, const Mat<double>& cov_a,
                                   const Mat<double>& mu_b, const Mat<double>& cov_b) {
  const Index d = mu_a.cols();
  require(mu_a.rows() == 1 && mu_b.rows() == 1 && mu_b.cols() == d, "frechet: mean shapes");
  require(cov_a.rows() == d && cov_a.cols() == d && cov_b.rows() == d && cov_b.cols() == d,
          "frechet: covariance shapes");
  Eigen::SelfAdjointEigenSolver<Mat<double>> es_a(cov_a);
  require(es_a.info() == Eigen::Success, "frechet: eigendecomposition failed");
  const Mat<double> root_a = es_a.eigenvectors() *
                             es_a.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                             es_a.eigenvectors().transpose();
  // Tr((Sa Sb)^(1/2)) = Tr((Sa^(1/2) Sb Sa^(1/2))^(1/2)), and the inner
  // matrix is symmetric positive semidefinite
  Mat<double> m = root_a * cov_b * root_a;
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat<double>> es_m(m);
  require(es_m.info() == Eigen::Success, "frechet: eigendecomposition failed");
  const double tr_sqrt = es_m.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d2 = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
  return std::max(d2, 0.0);
}

// Frechet distance between the Gaussian fits of two feature sets
// (rows are samples). Covariances are regularized by 1e-6 I.
inline double frechet_distance(const Mat<double>& feats_a, const Mat<double>& feats_b) {
  require(feats_a.rows() >= 2 && feats_b.rows() >= 2, "frechet: need at least 2 samples");
  require(feats_a.cols() == feats_b.cols(), "frechet: feature dims disagree");
  require(feats_a.cols() >= 1 && feats_a.cols() <= 64, "frechet: feature dim out of range");
  const auto moments = [](const Mat<double>& f) {
    const Mat<double> mu = f.colwise().mean();
    const Mat<double> centered = f.rowwise() - mu.row(0);
    Mat<double> cov = centered.transpose() * centered / static_cast<double>(f.rows() - 1);
    cov += 1e-6 * Mat<double>::Identity(f.cols(), f.cols());
    return std::make_pair(mu, cov);
  };
  const auto [mu_a, cov_a] = moments(feats_a);
  const auto [mu_b, cov_b] = moments(feats_b);
  return frechet_from_moments(mu_a, cov_a, mu_b, cov_b);
}

// Mean L2 distance between seeded random pairs of feature rows.
inline double diversity(const Mat<double>& feats, int pairs = 300, std::uint64_t seed = 0) {
  require(feats.rows() >= 2, "diversity: need at least 2 samples");
  require(pairs >= 1, "diversity: pair count");
  Rng rng(seed);
  const auto n = static_cast<std::uint64_t>(feats.rows());
  double sum = 0.0;
  for (int p = 0; p < pairs; ++p) {
    const auto i = static_cast<Index>(rng.uniform_int(n));
    auto j = static_cast<Index>(rng.uniform_int(n - 1));
    if (j >= i) ++j;
    sum += (feats.row(i) - feats.row(j)).norm();
  }
  return sum / pairs;
}

// Mean wall-clock seconds of fn over at least 3 runs.
inline double timed_mean_seconds(const std::function<void()>& fn, int runs = 3) {
  require(runs >= 3, "timed_mean_seconds: need at least 3 runs");
  double total = 0.0;
  for (int r = 0; r < runs; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    total += std::chrono::duration<double>(t1 - t0).count();
  }
  return total / runs;
}

}  // namespace rd
