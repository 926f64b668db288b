// Copyright (c) 2026 the reduet authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "reduet/pipeline.hpp"
#include "reduet/version.hpp"

namespace {

rd::PipelineProfile load_profile(const std::string& config_path,
                                 const std::vector<std::string>& sets) {
  rd::Config cfg =
      config_path.empty() ? rd::Config::parse_string("") : rd::Config::parse_file(config_path);
  for (const std::string& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw rd::InvalidArgument("--set expects key=value, got: " + kv);
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  rd::PipelineProfile p = rd::profile_from_config(cfg);
  const auto unknown = cfg.untouched_keys();
  if (!unknown.empty()) throw rd::InvalidArgument("unknown config key: " + unknown.front());
  p.threads = rd::capped_threads(p.threads);
  return p;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (double v : rd::parse_double_list(text)) {
    if (v < 0.0 || v != std::floor(v))
      throw rd::InvalidArgument("--seeds expects nonnegative integers");
    out.push_back(static_cast<std::uint64_t>(v));
  }
  if (out.empty()) throw rd::InvalidArgument("--seeds is empty");
  return out;
}

std::vector<int> parse_ints(const std::string& text, const std::string& what) {
  std::vector<int> out;
  for (double v : rd::parse_double_list(text)) {
    if (v != std::floor(v)) throw rd::InvalidArgument(what + " expects integers");
    out.push_back(static_cast<int>(v));
  }
  if (out.empty()) throw rd::InvalidArgument(what + " is empty");
  return out;
}

// "a,b;c,d" -> {{a,b},{c,d}}
std::vector<std::vector<double>> parse_grid(const std::string& text) {
  std::vector<std::vector<double>> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t next = text.find(';', pos);
    const std::string part =
        text.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    if (!part.empty()) out.push_back(rd::parse_double_list(part));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  if (out.empty()) throw rd::InvalidArgument("empty guidance grid");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical quantized motion codec with blockwise diffusion sampling"};
  app.require_subcommand(0, 1);
  bool show_version = false;
  app.add_flag("--version", show_version, "print the version and exit");

  std::string config_path, out_dir;
  std::vector<std::string> sets;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value settings file");
    sub->add_option("--set", sets, "extra key=value override (repeatable)");
    sub->add_option("--out", out_dir, "output directory")->required();
  };

  CLI::App* gen = app.add_subcommand("gen-data", "write the synthetic duet take to disk");
  add_common(gen);

  std::int64_t epochs = 0;
  std::uint64_t train_seed = 0;
  CLI::App* tc = app.add_subcommand("train-codec", "train the three stream codecs");
  add_common(tc);
  tc->add_option("--epochs", epochs, "override codec.epochs");
  tc->add_option("--seed", train_seed, "override seed");

  std::string codec_ckpt;
  CLI::App* td = app.add_subcommand("train-denoiser", "train the denoiser against a codec");
  add_common(td);
  td->add_option("--codec", codec_ckpt, "codec checkpoint")->required();
  td->add_option("--epochs", epochs, "override dn.epochs");
  td->add_option("--seed", train_seed, "override seed");

  std::string ckpt_path, guidance_text;
  rd::SampleFlags sf;
  CLI::App* sm = app.add_subcommand("sample", "generate a reactor from a trained model");
  sm->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
  sm->add_option("--out", out_dir, "output directory")->required();
  sm->add_option("--length-seconds", sf.length_seconds, "rounded up to whole blocks");
  sm->add_option("--seed", sf.seed, "sampling noise seed");
  sm->add_option("--guidance", guidance_text, "per-stage strengths, comma separated");
  sm->add_flag("--blocks-parallel", sf.blocks_parallel, "denoise blocks on worker threads");
  sm->add_flag("--drop-music", sf.drop_music, "replace music conditioning by null embeddings");
  sm->add_flag("--drop-leader", sf.drop_leader, "replace leader conditioning by null embeddings");
  sm->add_flag("--swap-roles", sf.swap_roles, "condition on the reactor track instead");

  rd::EvalFlags ef;
  CLI::App* ev = app.add_subcommand("eval", "generate on the held-out span and score it");
  ev->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
  ev->add_option("--out", out_dir, "output directory")->required();
  ev->add_option("--seed", ef.seed, "sampling noise seed");
  ev->add_option("--guidance", guidance_text, "per-stage strengths, comma separated");
  ev->add_flag("--blocks-parallel", ef.blocks_parallel, "denoise blocks on worker threads");
  ev->add_flag("--drop-music", ef.drop_music, "replace music conditioning by null embeddings");
  ev->add_flag("--drop-leader", ef.drop_leader, "replace leader conditioning by null embeddings");
  ev->add_flag("--swap-roles", ef.swap_roles, "condition on the reactor track instead");
  ev->add_option("--timing-runs", ef.timing_runs, "also time this many extra generations (>= 3)");

  std::string axis, seeds_text = "1,2,3", stages_text = "1,2", strides_text = "4,240";
  std::string grid_text = "1,1;1,1.2;1,1.5;1.2,1.2;1.2,1.5;1.5,1.5";
  CLI::App* ab = app.add_subcommand("ablate", "sweep one design axis and write a CSV");
  ab->add_option("--axis", axis, "stages | stride | guidance | conditions")->required();
  ab->add_option("--config", config_path, "key=value settings file");
  ab->add_option("--set", sets, "extra key=value override (repeatable)");
  ab->add_option("--out", out_dir, "output directory")->required();
  ab->add_option("--ckpt", ckpt_path, "trained model (guidance and conditions axes)");
  ab->add_option("--seeds", seeds_text, "training seeds, comma separated");
  ab->add_option("--stages", stages_text, "stage counts for the stages axis");
  ab->add_option("--strides", strides_text, "window strides for the stride axis");
  ab->add_option("--grid", grid_text, "guidance pairs, ';' separated");

  CLI::App* st = app.add_subcommand("selftest", "run the built-in property checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.get_subcommands().empty()) {
      if (show_version) {
        std::cout << "reduet " << rd::version() << "\n";
        return 0;
      }
      std::cerr << app.help();
      return 1;
    }
    if (gen->parsed()) return rd::cmd_gen_data(load_profile(config_path, sets), out_dir);
    if (tc->parsed()) {
      if (tc->count("--epochs")) sets.push_back("codec.epochs=" + std::to_string(epochs));
      if (tc->count("--seed")) sets.push_back("seed=" + std::to_string(train_seed));
      return rd::cmd_train_codec(load_profile(config_path, sets), out_dir);
    }
    if (td->parsed()) {
      if (td->count("--epochs")) sets.push_back("dn.epochs=" + std::to_string(epochs));
      if (td->count("--seed")) sets.push_back("seed=" + std::to_string(train_seed));
      return rd::cmd_train_denoiser(load_profile(config_path, sets), codec_ckpt, out_dir);
    }
    if (sm->parsed()) {
      if (!guidance_text.empty()) sf.guidance = rd::parse_double_list(guidance_text);
      return rd::cmd_sample(ckpt_path, sf, out_dir);
    }
    if (ev->parsed()) {
      if (!guidance_text.empty()) ef.guidance = rd::parse_double_list(guidance_text);
      return rd::cmd_eval(ckpt_path, ef, out_dir);
    }
    if (ab->parsed()) {
      const rd::PipelineProfile p = axis == "guidance" || axis == "conditions"
                                        ? rd::PipelineProfile{}
                                        : load_profile(config_path, sets);
      if (axis == "stages")
        return rd::cmd_ablate_stages(p, parse_ints(stages_text, "--stages"),
                                     parse_seeds(seeds_text), out_dir);
      if (axis == "stride")
        return rd::cmd_ablate_stride(p, parse_ints(strides_text, "--strides"),
                                     parse_seeds(seeds_text), out_dir);
      if (axis == "guidance") {
        if (ckpt_path.empty()) throw rd::InvalidArgument("the guidance axis needs --ckpt");
        return rd::cmd_ablate_guidance(ckpt_path, parse_grid(grid_text), out_dir);
      }
      if (axis == "conditions") {
        if (ckpt_path.empty()) throw rd::InvalidArgument("the conditions axis needs --ckpt");
        return rd::cmd_ablate_conditions(ckpt_path, out_dir);
      }
      throw rd::InvalidArgument("unknown ablation axis: " + axis);
    }
    if (st->parsed()) return rd::run_selftest(std::cout);
    std::cerr << app.help();
    return 1;
  } catch (const rd::NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const rd::InvalidArgument& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
