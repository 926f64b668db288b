// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#include "reduet/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>

namespace rd {

namespace {

namespace fs = std::filesystem;

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fmt_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += fmt_double(v[i]);
  }
  return out;
}

std::string fmt_int_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<int> int_list(const Config& cfg, const std::string& key, const std::vector<int>& fb) {
  const std::vector<double> dfb(fb.begin(), fb.end());
  std::vector<int> out;
  for (double x : cfg.get_double_list(key, dfb)) {
    require(std::floor(x) == x && std::abs(x) < 1e9, "config: " + key + " must hold integers");
    out.push_back(static_cast<int>(x));
  }
  return out;
}

int geti(const Config& c, const std::string& k, int fb) {
  return static_cast<int>(c.get_int(k, fb));
}

// stage r contributes 4^-r by default, so every scale is a power of two
std::vector<double> default_scales(int stages) {
  std::vector<double> s;
  double v = 1.0;
  for (int r = 0; r < stages; ++r, v *= 0.25) s.push_back(v);
  return s;
}

OptConfig opt_from_config(const Config& cfg, const std::string& ns, const char* kind_fb,
                          double lr_fb) {
  OptConfig o;
  o.kind = opt_kind_from_string(cfg.get_string(ns + ".opt", kind_fb));
  o.lr = cfg.get_double(ns + ".lr", lr_fb);
  o.beta1 = cfg.get_double(ns + ".beta1", o.beta1);
  o.beta2 = cfg.get_double(ns + ".beta2", o.beta2);
  o.eps = cfg.get_double(ns + ".eps", o.eps);
  o.weight_decay = cfg.get_double(ns + ".wd", 0.0);
  o.clip_norm = cfg.get_double(ns + ".clip", 1.0);
  return o;
}

void emit_opt(Config& c, const std::string& ns, const OptConfig& o) {
  c.set(ns + ".opt", o.kind == OptKind::Lion ? "lion" : "adamw");
  c.set(ns + ".lr", fmt_double(o.lr));
  c.set(ns + ".beta1", fmt_double(o.beta1));
  c.set(ns + ".beta2", fmt_double(o.beta2));
  c.set(ns + ".eps", fmt_double(o.eps));
  c.set(ns + ".wd", fmt_double(o.weight_decay));
  c.set(ns + ".clip", fmt_double(o.clip_norm));
}

void scale_grads(ParamStore<float>& store, float f) {
  for (int i = 0; i < store.count(); ++i) {
    auto& gr = store.entry(i).grad;
    if (gr.size() != 0) gr *= f;
  }
}

void shuffle_indices(std::vector<int>& idx, Rng& rng) {
  for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(i + 1)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
}

BodyStreams<float> window_streams(const Duet& d, Index start, Index len) {
  const Mat<float> re = d.reactor.middleRows(start, len).cast<float>();
  const Mat<float> lead_root = d.leader.middleRows(start, len).leftCols(3).cast<float>();
  return decompose(re, lead_root);
}

std::vector<double> mean_speed_trace(const Mat<double>& pose) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(pose.rows() - 1));
  for (Index t = 0; t + 1 < pose.rows(); ++t) {
    double s = 0.0;
    for (int j = 0; j < kNumJoints; ++j)
      s += (pose.block<1, 3>(t + 1, 3 * j) - pose.block<1, 3>(t, 3 * j)).norm();
    out.push_back(s / kNumJoints);
  }
  return out;
}

void write_train_log(const std::string& dir, const std::string& stem, const TrainLog& log) {
  write_csv(dir + "/" + stem + ".csv", log.header, log.rows);
  std::vector<double> losses;
  for (const auto& r : log.rows) losses.push_back(r.at(1));
  write_svg_traces(dir + "/" + stem + ".svg", {{"loss", losses}}, 900, 300, stem);
}

std::string ensure_dir(const std::string& out_dir) {
  require(!out_dir.empty(), "output directory not set");
  fs::create_directories(out_dir);
  return out_dir;
}

}  // namespace

void PipelineProfile::validate() const {
  require(threads >= 1, "profile: threads must be >= 1");
  require(frames >= 8 && fps >= 1 && bpm > 0.0, "profile: bad take settings");
  require(lag >= 0 && noise_scale >= 0.0, "profile: bad reactor settings");
  require(window_len >= 8 && window_len % 4 == 0,
          "profile: window length must be a positive multiple of 4");
  require(stride >= 1 && stride <= window_len, "profile: stride out of [1, window_len]");
  require(train_begin >= 0 && train_begin + window_len <= train_end && train_end <= frames,
          "profile: training range does not fit the take");
  require(max_windows >= 1, "profile: max_windows must be >= 1");
  require(eval_begin >= 0 && eval_blocks >= 1 &&
              eval_begin + eval_blocks * window_len <= frames,
          "profile: evaluation range does not fit the take");
  codec.validate();
  dn.validate();
  require(dn.stages == codec.hfsq.stages && dn.token_dim == codec.total_latent(),
          "profile: codec and denoiser layouts disagree");
  require(dn.music_stack == 4 && block_latent == window_len / 4,
          "profile: block length must match the 4x latent rate");
  require(train_steps >= 2, "profile: diffusion steps must be >= 2");
  require(sample_steps >= 2 && sample_steps <= train_steps,
          "profile: sampling steps out of [2, train_steps]");
  require(p_drop >= 0.0 && p_drop <= 1.0, "profile: condition drop rate out of [0,1]");
  loss_w.validate();
  require(static_cast<int>(loss_w.lambda_stage.size()) == codec.hfsq.stages,
          "profile: stage weight count");
  guidance.validate();
  require(static_cast<int>(guidance.s.size()) == codec.hfsq.stages,
          "profile: guidance strength count");
  require(codec_epochs >= 1 && codec_batch >= 1 && dn_epochs >= 1 && dn_batch >= 1,
          "profile: epochs and batch sizes must be >= 1");
  require(codec_lr_decay > 0.0 && codec_lr_decay <= 1.0 && dn_lr_decay > 0.0 &&
              dn_lr_decay <= 1.0,
          "profile: learning-rate decay out of (0,1]");
}

PipelineProfile profile_from_config(const Config& cfg) {
  PipelineProfile p;
  p.seed = cfg.get_u64("seed", 1);
  p.threads = geti(cfg, "threads", 1);

  p.frames = geti(cfg, "data.frames", 3100);
  p.fps = geti(cfg, "data.fps", 30);
  p.bpm = cfg.get_double("data.bpm", 120.0);
  p.lag = geti(cfg, "data.lag", 12);
  p.noise_scale = cfg.get_double("data.noise", 0.01);

  p.window_len = geti(cfg, "window.len", 240);
  p.stride = geti(cfg, "window.stride", 4);
  p.train_begin = geti(cfg, "train.begin", 0);
  p.train_end = geti(cfg, "train.end", 1180);
  p.max_windows = geti(cfg, "train.max_windows", 200);
  p.eval_begin = geti(cfg, "eval.begin", 1180);
  p.eval_blocks = geti(cfg, "eval.blocks", 8);

  p.codec.hfsq.base = FsqSpec{int_list(cfg, "codec.levels", {8, 5, 5, 5})};
  p.codec.hfsq.stages = geti(cfg, "codec.stages", 2);
  p.codec.hfsq.stage_scales =
      cfg.get_double_list("codec.scales", default_scales(p.codec.hfsq.stages));
  p.codec.hidden = geti(cfg, "codec.hidden", 96);
  p.codec.latent_upper = geti(cfg, "codec.latent_upper", 128);
  p.codec.latent_lower = geti(cfg, "codec.latent_lower", 128);
  p.codec.latent_rel = geti(cfg, "codec.latent_rel", 32);
  p.codec.beta = cfg.get_double("codec.beta", 0.25);
  p.codec.lambda_kin = cfg.get_double("codec.lambda_kin", 1.0);
  p.codec.lambda_lat = cfg.get_double("codec.lambda_lat", 1.0);
  p.codec.lambda_pos = cfg.get_double("codec.lambda_pos", 1.0);
  p.codec.lambda_vel = cfg.get_double("codec.lambda_vel", 0.5);
  p.codec.lambda_acc = cfg.get_double("codec.lambda_acc", 0.25);
  p.codec.p_res = cfg.get_double("codec.p_res", 0.3);
  p.codec.sigma_base = cfg.get_double("codec.sigma_base", 0.05);
  p.codec.rho_max = cfg.get_double("codec.rho_max", 0.2);

  p.dn.depth = geti(cfg, "dn.depth", 4);
  p.dn.width = geti(cfg, "dn.width", 256);
  p.dn.heads = geti(cfg, "dn.heads", 4);
  p.dn.mlp_ratio = geti(cfg, "dn.mlp_ratio", 2);
  p.dn.d_music = geti(cfg, "dn.d_music", 64);
  p.dn.d_lead = geti(cfg, "dn.d_lead", 64);
  p.dn.h_lead = geti(cfg, "dn.h_lead", 64);
  p.dn.d_cross = geti(cfg, "dn.d_cross", 64);
  p.dn.d_temb = geti(cfg, "dn.d_temb", 64);
  p.dn.stages = p.codec.hfsq.stages;
  p.dn.token_dim = p.codec.total_latent();
  p.dn.music_dim = kMusicDims;
  p.dn.music_stack = 4;
  p.dn.lead_in_dims = 3 * (kNumJoints - 1);
  p.block_latent = p.window_len / 4;

  p.train_steps = geti(cfg, "diff.train_steps", 1000);
  p.sample_steps = geti(cfg, "diff.sample_steps", 100);
  const std::string sched = cfg.get_string("diff.schedule", "cosine");
  if (sched == "cosine")
    p.schedule = ScheduleKind::Cosine;
  else if (sched == "linear")
    p.schedule = ScheduleKind::Linear;
  else
    throw InvalidArgument("config: diff.schedule must be cosine or linear");
  p.p_drop = cfg.get_double("diff.p_drop", 0.2);
  p.loss_w.lambda_stage = cfg.get_double_list(
      "diff.stage_weights", std::vector<double>(static_cast<std::size_t>(p.dn.stages), 1.0));
  p.loss_w.lambda_kin = cfg.get_double("diff.lambda_kin", 1.0);
  p.loss_w.lambda_fc = cfg.get_double("diff.lambda_fc", 0.5);
  p.loss_w.lambda_ro = cfg.get_double("diff.lambda_ro", 0.5);
  p.guidance.s = cfg.get_double_list(
      "guidance", std::vector<double>(static_cast<std::size_t>(p.dn.stages), 1.2));

  p.codec_opt = opt_from_config(cfg, "codec", "lion", 1e-3);
  p.codec_epochs = geti(cfg, "codec.epochs", 30);
  p.codec_batch = geti(cfg, "codec.batch", 16);
  p.codec_lr_decay = cfg.get_double("codec.decay", 0.998);

  p.dn_opt = opt_from_config(cfg, "dn", "adamw", 3e-4);
  p.dn_epochs = geti(cfg, "dn.epochs", 60);
  p.dn_batch = geti(cfg, "dn.batch", 16);
  p.dn_lr_decay = cfg.get_double("dn.decay", 0.998);

  p.validate();
  return p;
}

PipelineProfile profile_from_text(const std::string& text) {
  return profile_from_config(Config::parse_string(text));
}

std::string profile_to_text(const PipelineProfile& p) {
  p.validate();
  Config c;
  c.set("seed", std::to_string(p.seed));
  c.set("threads", std::to_string(p.threads));
  c.set("data.frames", std::to_string(p.frames));
  c.set("data.fps", std::to_string(p.fps));
  c.set("data.bpm", fmt_double(p.bpm));
  c.set("data.lag", std::to_string(p.lag));
  c.set("data.noise", fmt_double(p.noise_scale));
  c.set("window.len", std::to_string(p.window_len));
  c.set("window.stride", std::to_string(p.stride));
  c.set("train.begin", std::to_string(p.train_begin));
  c.set("train.end", std::to_string(p.train_end));
  c.set("train.max_windows", std::to_string(p.max_windows));
  c.set("eval.begin", std::to_string(p.eval_begin));
  c.set("eval.blocks", std::to_string(p.eval_blocks));
  c.set("codec.levels", fmt_int_list(p.codec.hfsq.base.levels));
  c.set("codec.stages", std::to_string(p.codec.hfsq.stages));
  c.set("codec.scales", fmt_list(p.codec.hfsq.stage_scales));
  c.set("codec.hidden", std::to_string(p.codec.hidden));
  c.set("codec.latent_upper", std::to_string(p.codec.latent_upper));
  c.set("codec.latent_lower", std::to_string(p.codec.latent_lower));
  c.set("codec.latent_rel", std::to_string(p.codec.latent_rel));
  c.set("codec.beta", fmt_double(p.codec.beta));
  c.set("codec.lambda_kin", fmt_double(p.codec.lambda_kin));
  c.set("codec.lambda_lat", fmt_double(p.codec.lambda_lat));
  c.set("codec.lambda_pos", fmt_double(p.codec.lambda_pos));
  c.set("codec.lambda_vel", fmt_double(p.codec.lambda_vel));
  c.set("codec.lambda_acc", fmt_double(p.codec.lambda_acc));
  c.set("codec.p_res", fmt_double(p.codec.p_res));
  c.set("codec.sigma_base", fmt_double(p.codec.sigma_base));
  c.set("codec.rho_max", fmt_double(p.codec.rho_max));
  c.set("dn.depth", std::to_string(p.dn.depth));
  c.set("dn.width", std::to_string(p.dn.width));
  c.set("dn.heads", std::to_string(p.dn.heads));
  c.set("dn.mlp_ratio", std::to_string(p.dn.mlp_ratio));
  c.set("dn.d_music", std::to_string(p.dn.d_music));
  c.set("dn.d_lead", std::to_string(p.dn.d_lead));
  c.set("dn.h_lead", std::to_string(p.dn.h_lead));
  c.set("dn.d_cross", std::to_string(p.dn.d_cross));
  c.set("dn.d_temb", std::to_string(p.dn.d_temb));
  c.set("diff.train_steps", std::to_string(p.train_steps));
  c.set("diff.sample_steps", std::to_string(p.sample_steps));
  c.set("diff.schedule", p.schedule == ScheduleKind::Cosine ? "cosine" : "linear");
  c.set("diff.p_drop", fmt_double(p.p_drop));
  c.set("diff.stage_weights", fmt_list(p.loss_w.lambda_stage));
  c.set("diff.lambda_kin", fmt_double(p.loss_w.lambda_kin));
  c.set("diff.lambda_fc", fmt_double(p.loss_w.lambda_fc));
  c.set("diff.lambda_ro", fmt_double(p.loss_w.lambda_ro));
  c.set("guidance", fmt_list(p.guidance.s));
  emit_opt(c, "codec", p.codec_opt);
  c.set("codec.epochs", std::to_string(p.codec_epochs));
  c.set("codec.batch", std::to_string(p.codec_batch));
  c.set("codec.decay", fmt_double(p.codec_lr_decay));
  emit_opt(c, "dn", p.dn_opt);
  c.set("dn.epochs", std::to_string(p.dn_epochs));
  c.set("dn.batch", std::to_string(p.dn_batch));
  c.set("dn.decay", fmt_double(p.dn_lr_decay));
  return c.serialize();
}

int capped_threads(int requested) {
  require(requested >= 1, "threads must be >= 1");
  const char* env = std::getenv("REACT_THREADS");
  if (env == nullptr || *env == '\0') return requested;
  int cap = 0;
  const auto res = std::from_chars(env, env + std::string(env).size(), cap);
  require(res.ec == std::errc() && cap >= 1, "REACT_THREADS must be a positive integer");
  return std::min(requested, cap);
}

DuetDataset build_dataset(const PipelineProfile& p) {
  p.validate();
  DuetParams dp;
  dp.seed = p.seed;
  dp.fps = p.fps;
  dp.frames = p.frames;
  dp.bpm = p.bpm;
  dp.lag = p.lag;
  dp.noise_scale = p.noise_scale;
  DuetDataset ds;
  ds.duet = make_duet(dp);
  ds.starts = slide_windows(p.train_end - p.train_begin, {p.window_len, p.stride});
  for (auto& s : ds.starts) s += p.train_begin;
  if (ds.starts.size() > static_cast<std::size_t>(p.max_windows))
    ds.starts.resize(static_cast<std::size_t>(p.max_windows));
  return ds;
}

ParamStore<float> train_codec_model(const PipelineProfile& p, const DuetDataset& ds,
                                    TrainLog* log) {
  p.validate();
  require(!ds.starts.empty(), "train codec: empty dataset");
  std::vector<BodyStreams<float>> wins;
  wins.reserve(ds.starts.size());
  for (Index s : ds.starts) wins.push_back(window_streams(ds.duet, s, p.window_len));

  ParamStore<float> store;
  Rng init(p.seed);
  declare_codec(store, p.codec, init);
  Optimizer<float> opt(p.codec_opt, store);
  Rng shuffle_rng(p.seed + 1);
  Rng mask_rng(p.seed + 2);

  const int n = static_cast<int>(wins.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  if (log) log->header = {"epoch", "loss", "lr"};

  for (int epoch = 1; epoch <= p.codec_epochs; ++epoch) {
    shuffle_indices(order, shuffle_rng);
    double esum = 0.0;
    for (int b0 = 0; b0 < n; b0 += p.codec_batch) {
      const int bn = std::min(p.codec_batch, n - b0);
      for (int k = 0; k < bn; ++k) {
        Graph<float> g;
        const BoundParams<float> bp = bind_params(g, store, true);
        const int loss = codec_window_loss(
            g, bp, p.codec, wins[static_cast<std::size_t>(order[static_cast<std::size_t>(b0 + k)])],
            mask_rng);
        const double lv = static_cast<double>(g.val(loss)(0, 0));
        if (!std::isfinite(lv)) throw NumericFailure("codec training loss is not finite");
        g.backward(loss);
        collect_grads(g, bp, store);
        esum += lv;
      }
      scale_grads(store, 1.0f / static_cast<float>(bn));
      opt.step(store);
    }
    const double mean_loss = esum / n;
    if (log) log->rows.push_back({static_cast<double>(epoch), mean_loss, opt.lr()});
    std::cout << "codec epoch " << epoch << "/" << p.codec_epochs << " loss " << mean_loss
              << " lr " << opt.lr() << std::endl;
    opt.scale_lr(p.codec_lr_decay);
  }
  return store;
}

Mat<float> encode_stage_values(const ParamStore<float>& cd, const CodecConfig& cfg,
                               const BodyStreams<float>& gt) {
  const auto streams = cfg.streams();
  const Mat<float>* mats[3] = {&gt.upper, &gt.lower, &gt.rel_root};
  require(gt.upper.rows() % 4 == 0, "encode targets: frames must divide by 4");
  const Index rows = gt.upper.rows() / 4;
  const int token = cfg.total_latent();
  Mat<float> x0(rows, cfg.hfsq.stages * token);
  Index off = 0;
  for (std::size_t k = 0; k < streams.size(); ++k) {
    const Mat<float> lat = codec_encode_infer(cd, streams[k].prefix, *mats[k]);
    const HierLatent<float> h = hfsq_quantize(lat, cfg.hfsq);
    for (int r = 0; r < cfg.hfsq.stages; ++r)
      x0.middleCols(static_cast<Index>(r) * token + off, streams[k].latent_dim) =
          h.values[static_cast<std::size_t>(r)];
    off += streams[k].latent_dim;
  }
  return x0;
}

std::vector<DiffusionItem<float>> build_diffusion_items(const PipelineProfile& p,
                                                        const DuetDataset& ds,
                                                        const ParamStore<float>& cd) {
  p.validate();
  std::vector<DiffusionItem<float>> items;
  items.reserve(ds.starts.size());
  for (Index s : ds.starts) {
    DiffusionItem<float> it;
    const Mat<float> lead = ds.duet.leader.middleRows(s, p.window_len).cast<float>();
    it.ref_root = root_track(lead);
    it.gt = decompose(Mat<float>(ds.duet.reactor.middleRows(s, p.window_len).cast<float>()),
                      it.ref_root);
    it.x0 = encode_stage_values(cd, p.codec, it.gt);
    it.music_lat = stack_rows(Mat<float>(ds.duet.music.middleRows(s, p.window_len).cast<float>()),
                              p.dn.music_stack);
    it.lead_locals = local_joints(lead);
    items.push_back(std::move(it));
  }
  return items;
}

ParamStore<float> train_denoiser_model(const PipelineProfile& p,
                                       const std::vector<DiffusionItem<float>>& items,
                                       const ParamStore<float>& cd, TrainLog* log) {
  p.validate();
  require(!items.empty(), "train denoiser: empty dataset");
  ParamStore<float> dn;
  Rng init(p.seed + 3);
  declare_denoiser(dn, p.dn, init);
  const NoiseSchedule sched = make_schedule(p.train_steps, p.schedule);
  const BlcSpec blc{p.block_latent, p.block_latent};
  Optimizer<float> opt(p.dn_opt, dn);
  Rng shuffle_rng(p.seed + 4);
  Rng draw_rng(p.seed + 5);

  const int n = static_cast<int>(items.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  if (log) log->header = {"epoch", "loss", "simple", "kin", "fc", "ro", "lr"};

  for (int epoch = 1; epoch <= p.dn_epochs; ++epoch) {
    shuffle_indices(order, shuffle_rng);
    double sums[5] = {0, 0, 0, 0, 0};
    for (int b0 = 0; b0 < n; b0 += p.dn_batch) {
      const int bn = std::min(p.dn_batch, n - b0);
      for (int k = 0; k < bn; ++k) {
        const auto& item = items[static_cast<std::size_t>(order[static_cast<std::size_t>(b0 + k)])];
        // fixed draw order per sample: step, noise, condition coins
        const int t = 1 + static_cast<int>(draw_rng.uniform_int(
                              static_cast<std::uint64_t>(p.train_steps)));
        Mat<float> noise(item.x0.rows(), item.x0.cols());
        for (Index i = 0; i < noise.rows(); ++i)
          for (Index j = 0; j < noise.cols(); ++j)
            noise(i, j) = static_cast<float>(draw_rng.normal());
        const std::vector<bool> keep = draw_cond_mask(draw_rng, p.dn.stages, p.p_drop);

        Graph<float> g;
        const BoundParams<float> dn_p = bind_params(g, dn, true);
        const BoundParams<float> cd_p = bind_params(g, cd, false);
        const DiffLossNodes nodes = diffusion_window_loss(g, dn_p, p.dn, cd_p, p.codec, blc,
                                                          sched, p.loss_w, item, t, noise, keep);
        g.backward(nodes.total);
        collect_grads(g, dn_p, dn);
        const int ids[5] = {nodes.total, nodes.simple, nodes.kin, nodes.fc, nodes.ro};
        for (int m = 0; m < 5; ++m) sums[m] += static_cast<double>(g.val(ids[m])(0, 0));
      }
      scale_grads(dn, 1.0f / static_cast<float>(bn));
      opt.step(dn);
    }
    if (log)
      log->rows.push_back({static_cast<double>(epoch), sums[0] / n, sums[1] / n, sums[2] / n,
                           sums[3] / n, sums[4] / n, opt.lr()});
    std::cout << "denoiser epoch " << epoch << "/" << p.dn_epochs << " loss " << sums[0] / n
              << " lr " << opt.lr() << std::endl;
    opt.scale_lr(p.dn_lr_decay);
  }
  return dn;
}

EvalInputs eval_inputs(const PipelineProfile& p, const Duet& duet, int blocks, bool swap_roles) {
  p.validate();
  require(blocks >= 1, "eval inputs: blocks must be >= 1");
  const Index begin = p.eval_begin;
  const Index frames = static_cast<Index>(blocks) * p.window_len;
  require(begin + frames <= duet.leader.rows(), "eval inputs: take too short");
  EvalInputs in;
  in.begin = begin;
  in.music = duet.music.middleRows(begin, frames).cast<float>();
  const Mat<double>& lead = swap_roles ? duet.reactor : duet.leader;
  const Mat<double>& gt = swap_roles ? duet.leader : duet.reactor;
  in.leader = lead.middleRows(begin, frames).cast<float>();
  in.gt_reactor = gt.middleRows(begin, frames).cast<float>();
  for (int b : duet.beat_frames)
    if (b >= begin && b < begin + frames) in.music_beats.push_back(b - begin);
  return in;
}

SampleOutput<float> generate(const PipelineProfile& p, const ParamStore<float>& dn,
                             const ParamStore<float>& cd, const EvalInputs& in,
                             const SampleOptions& opt) {
  p.validate();
  require(in.leader.rows() % (4 * p.block_latent) == 0, "generate: length must fill whole blocks");
  const BlcSpec blc{p.block_latent, in.leader.rows() / 4};
  const NoiseSchedule sched =
      strided_schedule(make_schedule(p.train_steps, p.schedule), p.sample_steps);
  return sample_reactor(dn, p.dn, cd, p.codec, sched, blc, in.music, in.leader, opt);
}

MetricReport evaluate_generation(const PipelineProfile& p, const EvalInputs& in,
                                 const Mat<float>& reactor, std::uint64_t diversity_seed) {
  require(reactor.rows() == in.gt_reactor.rows() && reactor.cols() == kPoseDims,
          "evaluate: reactor shape");
  const Mat<double> gen = reactor.cast<double>();
  const Mat<double> gt = in.gt_reactor.cast<double>();
  const Mat<double> lead = in.leader.cast<double>();
  const Index T = gen.rows();
  const Index W = p.window_len;
  const Index nw = T / W;

  MetricReport r;
  r.set("mpjpe_mm", mpjpe_mm(gt, gen));
  r.set("mpjve_mm_per_frame", mpjve_mm(gt, gen));
  r.set("pfc", pfc_lite(gen));
  const auto gen_beats = kinematic_beats(gen);
  r.set("beat_align", beat_align(gen_beats, in.music_beats));
  r.set("beat_echo", beat_echo(kinematic_beats(lead), gen_beats));
  r.set("mpjpe_rest_mm", rest_pose_mpjpe(in.gt_reactor));

  if (nw >= 2) {
    const Mat<double> lead_root = root_track(lead);
    Mat<double> fg(nw, kKinematicFeatureDim), fr(nw, kKinematicFeatureDim);
    for (Index w = 0; w < nw; ++w) {
      const Mat<double> ref = lead_root.middleRows(w * W, W);
      const Mat<double> gw = gen.middleRows(w * W, W);
      const Mat<double> tw = gt.middleRows(w * W, W);
      fg.row(w) = kinematic_feature_row(gw, Mat<double>(root_track(gw) - ref));
      fr.row(w) = kinematic_feature_row(tw, Mat<double>(root_track(tw) - ref));
    }
    r.set("frechet_kin", frechet_distance(fr, fg));
    r.set("diversity", diversity(fg, 300, diversity_seed));
    std::vector<Index> joins;
    for (Index b = 1; b < nw; ++b)
      if (b * W >= 30 && b * W + 30 <= T - 2) joins.push_back(b * W);
    if (!joins.empty()) r.set("boundary_jitter", boundary_jitter(gen, joins));
  }
  r.validate();
  return r;
}

double rest_pose_mpjpe(const Mat<float>& gt) {
  const Mat<double> rest = rest_pose_row<double>().replicate(gt.rows(), 1);
  return mpjpe_mm(Mat<double>(gt.cast<double>()), rest);
}

double codec_reconstruction_mpjpe(const PipelineProfile& p, const DuetDataset& ds,
                                  const ParamStore<float>& cd) {
  p.validate();
  require(!ds.starts.empty(), "reconstruction: empty dataset");
  double sum = 0.0;
  for (Index s : ds.starts) {
    const BodyStreams<float> gt = window_streams(ds.duet, s, p.window_len);
    const Mat<float>* mats[3] = {&gt.upper, &gt.lower, &gt.rel_root};
    BodyStreams<float> rec;
    Mat<float>* outs[3] = {&rec.upper, &rec.lower, &rec.rel_root};
    const auto streams = p.codec.streams();
    for (std::size_t k = 0; k < streams.size(); ++k) {
      const Mat<float> lat = codec_encode_infer(cd, streams[k].prefix, *mats[k]);
      const HierLatent<float> h = hfsq_quantize(lat, p.codec.hfsq);
      *outs[k] = codec_decode_infer(cd, streams[k].prefix, h.aggregate);
    }
    const Mat<float> lead_root =
        ds.duet.leader.middleRows(s, p.window_len).leftCols(3).cast<float>();
    const Mat<float> pose = recompose(rec, lead_root);
    const Mat<float> gt_pose = ds.duet.reactor.middleRows(s, p.window_len).cast<float>();
    sum += mpjpe_mm(gt_pose, pose);
  }
  return sum / static_cast<double>(ds.starts.size());
}

Checkpoint make_codec_checkpoint(const PipelineProfile& p, const ParamStore<float>& cd,
                                 double final_loss) {
  Checkpoint ck;
  ck.config_text = profile_to_text(p);
  ck.groups["codec"] = cd;
  ck.scalars["codec_final_loss"] = final_loss;
  return ck;
}

Checkpoint make_model_checkpoint(const PipelineProfile& p, const ParamStore<float>& cd,
                                 const ParamStore<float>& dn, double final_loss) {
  Checkpoint ck = make_codec_checkpoint(p, cd, 0.0);
  ck.scalars.erase("codec_final_loss");
  ck.groups["denoiser"] = dn;
  ck.scalars["denoiser_final_loss"] = final_loss;
  return ck;
}

ParamStore<float> store_from_checkpoint(const Checkpoint& ck, const std::string& group) {
  const auto it = ck.groups.find(group);
  require(it != ck.groups.end(), "checkpoint has no group: " + group);
  return it->second;
}

int cmd_gen_data(const PipelineProfile& p, const std::string& out_dir) {
  const std::string dir = ensure_dir(out_dir);
  const DuetDataset ds = build_dataset(p);
  write_seq(dir + "/leader.rdseq", ds.duet.leader);
  write_seq(dir + "/reactor.rdseq", ds.duet.reactor);
  write_seq(dir + "/music.rdseq", ds.duet.music);
  std::vector<std::vector<double>> beat_rows;
  for (int b : ds.duet.beat_frames) beat_rows.push_back({static_cast<double>(b)});
  write_csv(dir + "/beats.csv", {"frame"}, beat_rows);
  {
    std::ofstream out(dir + "/profile.cfg");
    require(out.good(), "cannot open " + dir + "/profile.cfg");
    out << profile_to_text(p);
  }
  write_svg_traces(dir + "/duet.svg",
                   {{"leader_speed", mean_speed_trace(ds.duet.leader)},
                    {"reactor_speed", mean_speed_trace(ds.duet.reactor)}},
                   900, 300, "joint-mean speed");
  std::cout << "wrote " << ds.duet.leader.rows() << " frames, " << ds.starts.size()
            << " training windows to " << dir << std::endl;
  return 0;
}

int cmd_train_codec(const PipelineProfile& p, const std::string& out_dir) {
  const std::string dir = ensure_dir(out_dir);
  const DuetDataset ds = build_dataset(p);
  TrainLog log;
  const ParamStore<float> cd = train_codec_model(p, ds, &log);
  write_train_log(dir, "codec_loss", log);
  const double final_loss = log.rows.empty() ? 0.0 : log.rows.back().at(1);
  write_checkpoint(dir + "/codec.rdckpt", make_codec_checkpoint(p, cd, final_loss));
  const double recon = codec_reconstruction_mpjpe(p, ds, cd);
  write_csv(dir + "/codec_recon.csv", {"recon_mpjpe_mm"}, {{recon}});
  std::cout << "codec reconstruction error " << recon << " mm" << std::endl;
  return 0;
}

int cmd_train_denoiser(const PipelineProfile& p, const std::string& codec_ckpt,
                       const std::string& out_dir) {
  const std::string dir = ensure_dir(out_dir);
  const Checkpoint cck = read_checkpoint(codec_ckpt);
  // the declared layout must match the stored weights exactly
  ParamStore<float> cd;
  Rng init(p.seed);
  declare_codec(cd, p.codec, init);
  load_param_values(cd, store_from_checkpoint(cck, "codec"));

  const DuetDataset ds = build_dataset(p);
  const std::vector<DiffusionItem<float>> items = build_diffusion_items(p, ds, cd);
  TrainLog log;
  const ParamStore<float> dn = train_denoiser_model(p, items, cd, &log);
  write_train_log(dir, "denoiser_loss", log);
  const double final_loss = log.rows.empty() ? 0.0 : log.rows.back().at(1);
  write_checkpoint(dir + "/model.rdckpt", make_model_checkpoint(p, cd, dn, final_loss));
  return 0;
}

namespace {

struct LoadedModel {
  PipelineProfile profile;
  ParamStore<float> cd;
  ParamStore<float> dn;
};

LoadedModel load_model(const std::string& ckpt_path) {
  const Checkpoint ck = read_checkpoint(ckpt_path);
  LoadedModel m;
  m.profile = profile_from_text(ck.config_text);
  m.cd = store_from_checkpoint(ck, "codec");
  m.dn = store_from_checkpoint(ck, "denoiser");
  return m;
}

SampleOptions options_from(const PipelineProfile& p, std::uint64_t seed,
                           const std::vector<double>& guidance, bool parallel, bool drop_music,
                           bool drop_leader) {
  SampleOptions opt;
  opt.seed = seed;
  opt.guidance = guidance.empty() ? p.guidance : GuidanceSpec{guidance};
  opt.blocks_parallel = parallel;
  // a parallel run takes the machine's cores unless the profile or the
  // REACT_THREADS cap says otherwise
  int want = 1;
  if (parallel) {
    want = p.threads > 1 ? p.threads : static_cast<int>(std::thread::hardware_concurrency());
    if (want < 1) want = 1;
  }
  opt.threads = capped_threads(want);
  opt.drop_music = drop_music;
  opt.drop_leader = drop_leader;
  return opt;
}

void write_sample_svg(const std::string& path, const EvalInputs& in, const Mat<float>& reactor) {
  const Mat<double> gen = reactor.cast<double>();
  const std::vector<double> gen_speed = mean_speed_trace(gen);
  const std::vector<double> lead_speed = mean_speed_trace(Mat<double>(in.leader.cast<double>()));
  double top = 0.0;
  for (double v : gen_speed) top = std::max(top, v);
  std::vector<double> beats(gen_speed.size(), 0.0);
  for (Index b : in.music_beats)
    if (b < static_cast<Index>(beats.size())) beats[static_cast<std::size_t>(b)] = top;
  write_svg_traces(path,
                   {{"generated_speed", gen_speed},
                    {"leader_speed", lead_speed},
                    {"music_beats", beats}},
                   900, 300, "joint-mean speed");
}

}  // namespace

int cmd_sample(const std::string& ckpt_path, const SampleFlags& flags,
               const std::string& out_dir) {
  const std::string dir = ensure_dir(out_dir);
  const LoadedModel m = load_model(ckpt_path);
  PipelineProfile p = m.profile;
  int blocks = p.eval_blocks;
  if (flags.length_seconds > 0.0) {
    const double frames_req = flags.length_seconds * p.fps;
    blocks = std::max(1, static_cast<int>(std::ceil(frames_req / p.window_len)));
    const int needed = p.eval_begin + blocks * p.window_len;
    if (needed > p.frames) p.frames = needed;
  }
  const DuetDataset ds = build_dataset(p);
  const EvalInputs in = eval_inputs(p, ds.duet, blocks, flags.swap_roles);
  const SampleOptions opt = options_from(p, flags.seed, flags.guidance, flags.blocks_parallel,
                                         flags.drop_music, flags.drop_leader);
  const SampleOutput<float> out = generate(p, m.dn, m.cd, in, opt);
  write_seq(dir + "/reactor.rdseq", out.reactor.cast<double>());
  write_seq(dir + "/latents.rdseq", out.latents.cast<double>());
  write_sample_svg(dir + "/sample.svg", in, out.reactor);
  std::cout << "sampled " << out.reactor.rows() << " frames (" << blocks << " blocks) to " << dir
            << std::endl;
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const EvalFlags& flags, const std::string& out_dir) {
  const std::string dir = ensure_dir(out_dir);
  const LoadedModel m = load_model(ckpt_path);
  const PipelineProfile& p = m.profile;
  const DuetDataset ds = build_dataset(p);
  const EvalInputs in = eval_inputs(p, ds.duet, p.eval_blocks, flags.swap_roles);
  const SampleOptions opt = options_from(p, flags.seed, flags.guidance, flags.blocks_parallel,
                                         flags.drop_music, flags.drop_leader);

  const auto t0 = std::chrono::steady_clock::now();
  const SampleOutput<float> out = generate(p, m.dn, m.cd, in, opt);
  const double gen_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const MetricReport r = evaluate_generation(p, in, out.reactor, p.seed);
  write_metric_csv(dir + "/metrics.csv", r);
  write_seq(dir + "/reactor.rdseq", out.reactor.cast<double>());
  write_sample_svg(dir + "/eval.svg", in, out.reactor);

  double aits = 0.0;
  if (flags.timing_runs >= 3)
    aits = timed_mean_seconds([&] { generate(p, m.dn, m.cd, in, opt); }, flags.timing_runs);
  write_csv(dir + "/timing.csv", {"generation_seconds", "aits_seconds", "timing_runs"},
            {{gen_seconds, aits, static_cast<double>(flags.timing_runs >= 3 ? flags.timing_runs
                                                                            : 0)}});
  for (const auto& [name, v] : r.values) std::cout << name << " " << v << std::endl;
  return 0;
}

int cmd_ablate_stages(const PipelineProfile& p, const std::vector<int>& stage_counts,
                      const std::vector<std::uint64_t>& seeds, const std::string& out_dir) {
  const std::string dir = ensure_dir(out_dir);
  require(!stage_counts.empty() && !seeds.empty(), "ablate stages: empty grid");
  std::vector<std::vector<double>> rows;
  for (const int R : stage_counts) {
    for (const std::uint64_t seed : seeds) {
      PipelineProfile v = p;
      v.seed = seed;
      v.codec.hfsq.stages = R;
      v.codec.hfsq.stage_scales = default_scales(R);
      v.dn.stages = R;
      v.loss_w.lambda_stage = std::vector<double>(static_cast<std::size_t>(R), 1.0);
      v.guidance.s = std::vector<double>(static_cast<std::size_t>(R), p.guidance.s[0]);
      const DuetDataset ds = build_dataset(v);
      const ParamStore<float> cd = train_codec_model(v, ds, nullptr);
      const double recon = codec_reconstruction_mpjpe(v, ds, cd);
      rows.push_back({static_cast<double>(R), static_cast<double>(seed), recon});
      std::cout << "stages " << R << " seed " << seed << " recon_mpjpe_mm " << recon << std::endl;
    }
  }
  write_csv(dir + "/ablate_stages.csv", {"stages", "seed", "recon_mpjpe_mm"}, rows);
  return 0;
}

int cmd_ablate_stride(const PipelineProfile& p, const std::vector<int>& strides,
                      const std::vector<std::uint64_t>& seeds, const std::string& out_dir) {
  const std::string dir = ensure_dir(out_dir);
  require(!strides.empty() && !seeds.empty(), "ablate stride: empty grid");
  // equalize presented windows across arms relative to the first stride
  PipelineProfile base = p;
  base.stride = strides.front();
  const auto n0 = static_cast<double>(build_dataset(base).starts.size());
  const double budget_cd = p.codec_epochs * n0;
  const double budget_dn = p.dn_epochs * n0;

  std::vector<std::vector<double>> rows;
  for (const int stride : strides) {
    for (const std::uint64_t seed : seeds) {
      PipelineProfile v = p;
      v.seed = seed;
      v.stride = stride;
      const DuetDataset ds = build_dataset(v);
      const auto nw = static_cast<double>(ds.starts.size());
      v.codec_epochs = std::max(1, static_cast<int>(std::llround(budget_cd / nw)));
      v.dn_epochs = std::max(1, static_cast<int>(std::llround(budget_dn / nw)));

      const ParamStore<float> cd = train_codec_model(v, ds, nullptr);
      const auto items = build_diffusion_items(v, ds, cd);
      const ParamStore<float> dn = train_denoiser_model(v, items, cd, nullptr);
      const EvalInputs in = eval_inputs(v, ds.duet, v.eval_blocks, false);
      SampleOptions opt;
      opt.seed = seed;
      opt.guidance = v.guidance;
      opt.threads = capped_threads(v.threads);
      const SampleOutput<float> out = generate(v, dn, cd, in, opt);
      const MetricReport r = evaluate_generation(v, in, out.reactor, seed);
      const double jitter = r.at("boundary_jitter");
      rows.push_back({static_cast<double>(stride), static_cast<double>(seed), jitter,
                      static_cast<double>(v.codec_epochs), static_cast<double>(v.dn_epochs), nw});
      std::cout << "stride " << stride << " seed " << seed << " boundary_jitter " << jitter
                << std::endl;
    }
  }
  write_csv(dir + "/ablate_stride.csv",
            {"stride", "seed", "boundary_jitter", "codec_epochs", "dn_epochs", "windows"}, rows);
  return 0;
}

int cmd_ablate_guidance(const std::string& ckpt_path,
                        const std::vector<std::vector<double>>& grid,
                        const std::string& out_dir) {
  const std::string dir = ensure_dir(out_dir);
  require(!grid.empty(), "ablate guidance: empty grid");
  const LoadedModel m = load_model(ckpt_path);
  const PipelineProfile& p = m.profile;
  const DuetDataset ds = build_dataset(p);
  const EvalInputs in = eval_inputs(p, ds.duet, p.eval_blocks, false);
  std::vector<std::vector<double>> rows;
  for (const auto& pair : grid) {
    const SampleOptions opt = options_from(p, p.seed, pair, false, false, false);
    const SampleOutput<float> out = generate(p, m.dn, m.cd, in, opt);
    const MetricReport r = evaluate_generation(p, in, out.reactor, p.seed);
    std::vector<double> row = pair;
    row.insert(row.end(), {r.at("mpjpe_mm"), r.at("mpjve_mm_per_frame"), r.at("frechet_kin"),
                           r.at("beat_echo"), r.at("pfc")});
    rows.push_back(row);
    std::cout << "guidance " << fmt_list(pair) << " mpjpe_mm " << r.at("mpjpe_mm") << std::endl;
  }
  std::vector<std::string> header;
  for (std::size_t r = 0; r < grid.front().size(); ++r) header.push_back("s" + std::to_string(r + 1));
  for (const char* name : {"mpjpe_mm", "mpjve_mm_per_frame", "frechet_kin", "beat_echo", "pfc"})
    header.push_back(name);
  write_csv(dir + "/ablate_guidance.csv", header, rows);
  return 0;
}

int cmd_ablate_conditions(const std::string& ckpt_path, const std::string& out_dir) {
  const std::string dir = ensure_dir(out_dir);
  const LoadedModel m = load_model(ckpt_path);
  const PipelineProfile& p = m.profile;
  const DuetDataset ds = build_dataset(p);
  const EvalInputs in = eval_inputs(p, ds.duet, p.eval_blocks, false);
  std::vector<std::vector<double>> rows;
  for (const auto& [drop_music, drop_leader] :
       std::vector<std::pair<bool, bool>>{{false, false}, {true, false}, {false, true},
                                          {true, true}}) {
    const SampleOptions opt = options_from(p, p.seed, {}, false, drop_music, drop_leader);
    const SampleOutput<float> out = generate(p, m.dn, m.cd, in, opt);
    const MetricReport r = evaluate_generation(p, in, out.reactor, p.seed);
    rows.push_back({drop_music ? 1.0 : 0.0, drop_leader ? 1.0 : 0.0, r.at("mpjpe_mm"),
                    r.at("beat_align"), r.at("beat_echo")});
    std::cout << "drop_music " << drop_music << " drop_leader " << drop_leader << " mpjpe_mm "
              << r.at("mpjpe_mm") << std::endl;
  }
  write_csv(dir + "/ablate_conditions.csv",
            {"drop_music", "drop_leader", "mpjpe_mm", "beat_align", "beat_echo"}, rows);
  return 0;
}

namespace {

void expect(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

template <typename S>
Mat<S> random_mat(Rng& rng, Index r, Index c, double s) {
  Mat<S> m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = static_cast<S>(rng.uniform(-s, s));
  return m;
}

template <typename S>
bool bitwise_equal(const Mat<S>& a, const Mat<S>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

CodecConfig tiny_codec_cfg() {
  CodecConfig c;
  c.hidden = 6;
  c.latent_upper = 4;
  c.latent_lower = 4;
  c.latent_rel = 4;
  return c;
}

DenoiserConfig tiny_dn_cfg() {
  DenoiserConfig c;
  c.depth = 1;
  c.width = 16;
  c.heads = 2;
  c.stages = 2;
  c.token_dim = 12;
  c.music_dim = 6;
  c.music_stack = 4;
  c.d_music = 4;
  c.d_lead = 4;
  c.h_lead = 4;
  c.d_cross = 4;
  c.d_temb = 4;
  c.mlp_ratio = 1;
  c.lead_in_dims = 63;
  return c;
}

void check_fsq_grid_snap() {
  for (int L : {2, 3, 5, 8}) {
    const FsqSpec spec{{L}};
    const double h = fsq_half_width(L);
    for (int i = 0; i <= 400; ++i) {
      // the bounded domain spans (-h, h); outputs live on the [-1, 1] grid
      const double b = -1.0 + 2.0 * i / 400.0;
      Mat<double> bm(1, 1);
      bm(0, 0) = b * h;
      const double got = fsq_quantize_values(bm, spec)(0, 0);
      double best = 0.0, bestd = 1e300;
      for (int c = 0; c < L; ++c) {
        const double v = (2.0 * c - (L - 1)) / (L - 1);
        const double d = std::abs(b - v);
        // ties resolve away from zero; a dead-center tie takes the
        // positive side
        const bool tie = d == bestd && (std::abs(v) > std::abs(best) ||
                                        (std::abs(v) == std::abs(best) && v > best));
        if (d < bestd || tie) {
          best = v;
          bestd = d;
        }
      }
      expect(got == best, "snap differs from nearest grid point at L=" + std::to_string(L));
    }
  }
}

void check_fsq_code_roundtrip() {
  const FsqSpec spec{{8, 5, 5, 5}};
  Rng rng(11);
  for (int n = 0; n < 200; ++n) {
    std::vector<int> codes(4);
    for (int j = 0; j < 4; ++j)
      codes[static_cast<std::size_t>(j)] =
          static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(spec.levels[static_cast<std::size_t>(j)])));
    const std::uint64_t flat = fsq_flatten(codes.data(), spec);
    expect(flat < spec.codebook_size(), "flat index out of range");
    expect(fsq_unflatten(flat, spec) == codes, "unflatten does not invert flatten");
  }
  const Mat<double> b = random_mat<double>(rng, 16, 8, 1.0);
  const Mat<double> vals = fsq_quantize_values(b, spec);
  const Mat<int> codes = fsq_codes_from_values(vals, spec);
  expect(bitwise_equal(fsq_dequantize<double>(codes, spec), vals),
         "dequantize(codes(values)) must reproduce the values");
}

void check_hfsq_telescoping() {
  const HfsqConfig cfg;
  Rng rng(12);
  for (int n = 0; n < 50; ++n) {
    const Mat<double> v = random_mat<double>(rng, 6, 8, 1.5);
    const auto h = hfsq_quantize(v, cfg);
    expect((v - h.aggregate - h.final_residual).cwiseAbs().maxCoeff() <= 1e-12,
           "aggregate plus final residual must reproduce the input");
    for (int r = 0; r < cfg.stages; ++r)
      expect(bitwise_equal(fsq_dequantize<double>(h.codes[static_cast<std::size_t>(r)], cfg.base),
                           h.values[static_cast<std::size_t>(r)]),
             "code replay must match stored stage values");
  }
}

void check_mask_draw_alignment() {
  Rng a(7), b(7);
  const auto da = draw_progressive<double>(a, 8, 4, 2, 0.0, 0.05, 0.2);
  const auto db = draw_progressive<double>(b, 8, 4, 2, 1.0, 0.05, 0.2);
  expect(!da.drop_high && db.drop_high, "drop coin must follow the drop rate");
  expect(bitwise_equal(da.noise, db.noise), "noise draw must not depend on the drop coin");
  for (int r = 0; r < 2; ++r)
    expect(bitwise_equal(da.keep[static_cast<std::size_t>(r)],
                         db.keep[static_cast<std::size_t>(r)]),
           "keep masks must not depend on the drop coin");
}

void check_phase_periodicity() {
  const Mat<double> pe = phase_pe_matrix<double>(180, 60);
  for (Index i = 0; i + 60 < 180; ++i)
    expect(pe(i, 0) == pe(i + 60, 0) && pe(i, 1) == pe(i + 60, 1),
           "phase encoding must repeat at the block period");
  expect(all_finite(pe) && all_finite(timestep_embedding<double>(5, 8)),
         "position encodings must be finite");
}

void check_block_isolation() {
  const DenoiserConfig cfg = tiny_dn_cfg();
  ParamStore<float> store;
  Rng rng(21);
  declare_denoiser(store, cfg, rng);
  Rng data(22);
  const Mat<float> x = random_mat<float>(data, 8, cfg.x_dim(), 0.8);
  const Mat<float> music = random_mat<float>(data, 8, cfg.music_cols(), 0.8);
  const Mat<float> lead = random_mat<float>(data, 8, cfg.d_lead, 0.5);
  const std::vector<bool> on(2, true);
  const BlcSpec blc{4, 8};

  auto run = [&](const Mat<float>& xs, const Mat<float>& ms, const Mat<float>& ls) {
    Graph<float> g;
    const auto p = bind_params(g, store, false);
    return Mat<float>(g.val(denoise_graph(g, p, cfg, blc, g.constant(xs), 3, g.constant(ms),
                                          g.constant(ls), on, on)));
  };
  const Mat<float> base = run(x, music, lead);
  Mat<float> x2 = x, m2 = music, l2 = lead;
  x2.bottomRows(4).array() += 2.0f;
  m2.bottomRows(4).array() -= 1.0f;
  l2.bottomRows(4).array() *= -2.0f;
  const Mat<float> out = run(x2, m2, l2);
  expect(bitwise_equal(Mat<float>(out.topRows(4)), Mat<float>(base.topRows(4))),
         "a block's output must not depend on other blocks");
  expect(!bitwise_equal(Mat<float>(out.bottomRows(4)), Mat<float>(base.bottomRows(4))),
         "the perturbed block must respond");
}

void check_schedule_consistency() {
  const NoiseSchedule base = make_schedule(50, ScheduleKind::Cosine);
  expect(base.alpha_bar[0] == 1.0, "clean step must keep the signal");
  for (int t = 1; t <= 50; ++t) {
    const auto u = static_cast<std::size_t>(t);
    expect(base.alpha_bar[u] < base.alpha_bar[u - 1], "signal level must decrease");
    expect(base.beta[u] > 0.0 && base.beta[u] < 1.0, "noise rate out of (0,1)");
  }
  const NoiseSchedule sub = strided_schedule(base, 10);
  for (int i = 1; i <= 10; ++i) {
    const auto u = static_cast<std::size_t>(i);
    const int tau = i * 50 / 10;
    expect(sub.t_cond[u] == tau, "strided schedule must keep the base step labels");
    expect(sub.alpha_bar[u] == base.alpha_bar[static_cast<std::size_t>(tau)],
           "strided schedule must keep the base signal levels");
  }
}

void check_guidance_degeneracy() {
  Rng rng(31);
  const Mat<double> c = random_mat<double>(rng, 4, 6, 1.0);
  const Mat<double> u = random_mat<double>(rng, 4, 6, 1.0);
  expect(bitwise_equal(ldcfg_combine(c, u, GuidanceSpec{{0.0, 0.0}}, 3), c),
         "zero strengths must return the conditional pass unchanged");
  expect((ldcfg_combine(c, c, GuidanceSpec{{1.2, 0.7}}, 3) - c).cwiseAbs().maxCoeff() <= 1e-12,
         "equal passes must cancel");
  const Mat<double> w = ldcfg_combine(c, u, GuidanceSpec{{0.5, 2.0}}, 3);
  expect(std::abs(w(1, 4) - (3.0 * c(1, 4) - 2.0 * u(1, 4))) <= 1e-12,
         "per-stage combination formula");
}

void check_parallel_agreement() {
  const CodecConfig ccfg = tiny_codec_cfg();
  const DenoiserConfig dcfg = tiny_dn_cfg();
  ParamStore<float> cd, dn;
  Rng r1(41), r2(42);
  declare_codec(cd, ccfg, r1);
  declare_denoiser(dn, dcfg, r2);
  const NoiseSchedule sched = strided_schedule(make_schedule(16, ScheduleKind::Cosine), 4);
  const BlcSpec blc{4, 8};
  Rng data(43);
  const Mat<float> music = random_mat<float>(data, 32, dcfg.music_dim, 0.8);
  Mat<float> leader = rest_pose_row<float>().replicate(32, 1);
  leader += random_mat<float>(data, 32, kPoseDims, 0.02);
  SampleOptions a;
  a.seed = 9;
  a.guidance = GuidanceSpec{{0.6, 0.6}};
  SampleOptions b = a;
  b.blocks_parallel = true;
  b.threads = 2;
  const auto sa = sample_reactor(dn, dcfg, cd, ccfg, sched, blc, music, leader, a);
  const auto sb = sample_reactor(dn, dcfg, cd, ccfg, sched, blc, music, leader, b);
  expect(all_finite(sa.reactor), "sampled motion must be finite");
  expect(bitwise_equal(sa.reactor, sb.reactor) && bitwise_equal(sa.latents, sb.latents),
         "parallel and sequential block order must agree exactly");
}

void check_metric_closed_forms() {
  expect(beat_score({10, 20}, {10, 20}) == 1.0, "identical beats must score 1");
  expect(std::abs(beat_score({10}, {13}) - std::exp(-0.5)) <= 1e-12,
         "one-sigma offset must score exp(-1/2)");
  const RowVec<double> rest = rest_pose_row<double>();
  Mat<double> lin(100, kPoseDims);
  for (Index t = 0; t < 100; ++t) {
    lin.row(t) = rest;
    lin(t, 0) += 0.25 * static_cast<double>(t);
  }
  expect(boundary_jitter(lin, {50}) <= 1e-12, "constant velocity must have zero jitter");
  Mat<double> a = rest.replicate(10, 1), b = a;
  for (Index t = 0; t < 10; ++t)
    for (int j = 0; j < kNumJoints; ++j) b(t, 3 * j) += 0.001;
  expect(std::abs(mpjpe_mm(a, b) - 1.0) <= 1e-9, "1 mm offset must read as 1 mm");
  expect(pfc_lite(a) == 0.0, "a motionless body must have zero foot skate");
  Rng rng(32);
  const Mat<double> cloud = random_mat<double>(rng, 6, 3, 1.0);
  expect(frechet_distance(cloud, cloud) <= 1e-6, "identical clouds must be at distance zero");
  Mat<double> shifted = cloud;
  shifted.col(0).array() += 1.0;
  shifted.col(1).array() += 2.0;
  expect(std::abs(frechet_distance(cloud, shifted) - 5.0) <= 1e-4,
         "a pure mean shift must read as its squared norm");
}

void check_config_roundtrip() {
  const PipelineProfile def;
  const std::string t1 = profile_to_text(def);
  expect(profile_to_text(profile_from_text(t1)) == t1, "profile text must round trip");
  Config c = Config::parse_string("bogus_key = 3\n");
  profile_from_config(c);
  const auto unknown = c.untouched_keys();
  expect(unknown.size() == 1 && unknown[0] == "bogus_key",
         "unsupported keys must be reported as untouched");
}

void check_checkpoint_roundtrip() {
  Checkpoint ck;
  ck.config_text = "alpha = 1\n";
  ParamStore<float> s;
  Rng rng(51);
  s.add_uniform("w", 3, 4, 0.5, rng);
  s.add_constant("b", 1, 4, 0.125);
  ck.groups["g"] = s;
  ck.scalars["loss"] = 0.25;
  const std::string path = (fs::temp_directory_path() / "reduet_selftest.rdckpt").string();
  write_checkpoint(path, ck);
  const Checkpoint back = read_checkpoint(path);
  fs::remove(path);
  expect(back.config_text == ck.config_text, "config text must survive the round trip");
  const auto& g = back.groups.at("g");
  expect(g.count() == 2, "group entry count");
  for (int i = 0; i < 2; ++i) {
    expect(g.entry(i).name == s.entry(i).name, "entry order must survive the round trip");
    expect(bitwise_equal(g.entry(i).value, s.entry(i).value),
           "weights must survive the round trip bit for bit");
  }
  expect(back.scalars.at("loss") == 0.25, "scalars must survive the round trip");
}

void check_data_determinism() {
  DuetParams dp;
  dp.seed = 5;
  dp.frames = 150;
  const Duet d1 = make_duet(dp);
  const Duet d2 = make_duet(dp);
  expect(bitwise_equal(d1.leader, d2.leader) && bitwise_equal(d1.reactor, d2.reactor) &&
             bitwise_equal(d1.music, d2.music) && d1.beat_frames == d2.beat_frames,
         "same seed must reproduce the take bit for bit");
}

}  // namespace

int run_selftest(std::ostream& out) {
  const std::vector<std::pair<std::string, std::function<void()>>> checks = {
      {"fsq-grid-snap", check_fsq_grid_snap},
      {"fsq-code-roundtrip", check_fsq_code_roundtrip},
      {"hfsq-telescoping", check_hfsq_telescoping},
      {"codec-mask-draw-alignment", check_mask_draw_alignment},
      {"denoiser-phase-periodicity", check_phase_periodicity},
      {"denoiser-block-isolation", check_block_isolation},
      {"diffusion-schedule-consistency", check_schedule_consistency},
      {"guidance-degeneracy", check_guidance_degeneracy},
      {"sampler-parallel-agreement", check_parallel_agreement},
      {"metric-closed-forms", check_metric_closed_forms},
      {"config-roundtrip", check_config_roundtrip},
      {"checkpoint-roundtrip", check_checkpoint_roundtrip},
      {"data-determinism", check_data_determinism},
  };
  int failures = 0;
  for (const auto& [name, fn] : checks) {
    try {
      fn();
      out << "PASS " << name << "\n";
    } catch (const std::exception& e) {
      ++failures;
      out << "FAIL " << name << ": " << e.what() << "\n";
    }
  }
  out << (failures == 0 ? "selftest passed" : "selftest FAILED") << " ("
      << checks.size() - static_cast<std::size_t>(failures) << "/" << checks.size() << ")\n";
  return failures == 0 ? 0 : 1;
}

}  // namespace rd
