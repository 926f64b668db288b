// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "reduet/config.hpp"
#include "reduet/diffusion.hpp"
#include "reduet/io.hpp"
#include "reduet/metrics.hpp"
#include "reduet/optim.hpp"
#include "reduet/sampler.hpp"
#include "reduet/synth.hpp"

namespace rd {

// Resolved settings for one run: data synthesis, windowing, both model
// configs, diffusion, and the two training loops.
struct PipelineProfile {
  std::uint64_t seed = 1;
  int threads = 1;

  int frames = 3100;
  int fps = 30;
  double bpm = 120.0;
  int lag = 12;
  double noise_scale = 0.01;

  int window_len = 240;
  int stride = 4;
  int train_begin = 0;
  int train_end = 1180;
  int max_windows = 200;
  int eval_begin = 1180;
  int eval_blocks = 8;

  CodecConfig codec;
  DenoiserConfig dn;
  int block_latent = 60;

  int train_steps = 1000;
  int sample_steps = 100;
  ScheduleKind schedule = ScheduleKind::Cosine;
  double p_drop = 0.2;
  DiffusionLossWeights loss_w;
  GuidanceSpec guidance;

  OptConfig codec_opt;
  int codec_epochs = 30;
  int codec_batch = 16;
  double codec_lr_decay = 0.998;

  OptConfig dn_opt;
  int dn_epochs = 60;
  int dn_batch = 16;
  double dn_lr_decay = 0.998;

  void validate() const;
};

// Reads every supported key, applies defaults, and derives the model
// configs. Unknown keys are rejected.
PipelineProfile profile_from_config(const Config& cfg);
PipelineProfile profile_from_text(const std::string& text);
// Canonical key=value form with every setting spelled out.
std::string profile_to_text(const PipelineProfile& p);

// Requested worker count bounded by the REACT_THREADS environment cap.
int capped_threads(int requested);

struct DuetDataset {
  Duet duet;
  std::vector<Index> starts;  // training window starts
};
DuetDataset build_dataset(const PipelineProfile& p);

struct TrainLog {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

// Stage-one training: the three stream codecs under progressive
// masking. Deterministic given the profile.
ParamStore<float> train_codec_model(const PipelineProfile& p, const DuetDataset& ds,
                                    TrainLog* log);

// Clean stage-value target for one window, stage-major over streams.
Mat<float> encode_stage_values(const ParamStore<float>& cd, const CodecConfig& cfg,
                               const BodyStreams<float>& gt);

std::vector<DiffusionItem<float>> build_diffusion_items(const PipelineProfile& p,
                                                        const DuetDataset& ds,
                                                        const ParamStore<float>& cd);

// Stage-two training: the blockwise denoiser against the frozen codec.
ParamStore<float> train_denoiser_model(const PipelineProfile& p,
                                       const std::vector<DiffusionItem<float>>& items,
                                       const ParamStore<float>& cd, TrainLog* log);

// Conditioning inputs and ground truth for a generation run.
struct EvalInputs {
  Mat<float> music;       // frames x 54
  Mat<float> leader;      // frames x 66 conditioning motion
  Mat<float> gt_reactor;  // frames x 66 target motion
  std::vector<Index> music_beats;  // local frame indices
  Index begin = 0;
};
EvalInputs eval_inputs(const PipelineProfile& p, const Duet& duet, int blocks, bool swap_roles);

SampleOutput<float> generate(const PipelineProfile& p, const ParamStore<float>& dn,
                             const ParamStore<float>& cd, const EvalInputs& in,
                             const SampleOptions& opt);

// Full metric suite of one generated sequence against its ground truth.
MetricReport evaluate_generation(const PipelineProfile& p, const EvalInputs& in,
                                 const Mat<float>& reactor, std::uint64_t diversity_seed);

// Constant rest pose scored against the same ground truth.
double rest_pose_mpjpe(const Mat<float>& gt);

// Mean reconstruction error of the trained codec over training windows.
double codec_reconstruction_mpjpe(const PipelineProfile& p, const DuetDataset& ds,
                                  const ParamStore<float>& cd);

// Checkpoint plumbing shared by the commands.
Checkpoint make_codec_checkpoint(const PipelineProfile& p, const ParamStore<float>& cd,
                                 double final_loss);
Checkpoint make_model_checkpoint(const PipelineProfile& p, const ParamStore<float>& cd,
                                 const ParamStore<float>& dn, double final_loss);
ParamStore<float> store_from_checkpoint(const Checkpoint& ck, const std::string& group);

// Commands: write artifacts under out_dir and return a process exit
// code (0 ok, 2 bad configuration or inputs, 3 numeric failure).
int cmd_gen_data(const PipelineProfile& p, const std::string& out_dir);
int cmd_train_codec(const PipelineProfile& p, const std::string& out_dir);
int cmd_train_denoiser(const PipelineProfile& p, const std::string& codec_ckpt,
                       const std::string& out_dir);

struct SampleFlags {
  double length_seconds = 0.0;  // 0 keeps the profile's eval length
  std::uint64_t seed = 0;
  std::vector<double> guidance;  // empty keeps the profile's strengths
  bool blocks_parallel = false;
  bool drop_music = false;
  bool drop_leader = false;
  bool swap_roles = false;
};
int cmd_sample(const std::string& ckpt_path, const SampleFlags& flags,
               const std::string& out_dir);

struct EvalFlags {
  std::uint64_t seed = 0;
  std::vector<double> guidance;
  bool blocks_parallel = false;
  bool drop_music = false;
  bool drop_leader = false;
  bool swap_roles = false;
  int timing_runs = 0;  // >= 3 also measures mean inference time
};
int cmd_eval(const std::string& ckpt_path, const EvalFlags& flags, const std::string& out_dir);

int cmd_ablate_stages(const PipelineProfile& p, const std::vector<int>& stage_counts,
                      const std::vector<std::uint64_t>& seeds, const std::string& out_dir);
int cmd_ablate_stride(const PipelineProfile& p, const std::vector<int>& strides,
                      const std::vector<std::uint64_t>& seeds, const std::string& out_dir);
int cmd_ablate_guidance(const std::string& ckpt_path,
                        const std::vector<std::vector<double>>& grid,
                        const std::string& out_dir);
int cmd_ablate_conditions(const std::string& ckpt_path, const std::string& out_dir);

// One named property check per module; prints one PASS/FAIL line each
// and returns 0 only if everything passes.
int run_selftest(std::ostream& out);

}  // namespace rd
