// tools/avsep.cpp

// Copyright 2026  avsep contributors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <iostream>
#include <stdexcept>
#include <string>

#include "avsep/cli/commands.hpp"

namespace {

struct SubState {
  avsep::cli::CommonArgs common;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* cmd, SubState& st) {
  cmd->add_option("--config", st.common.config_path, "key = value config file");
  cmd->add_option("--set", st.common.sets,
                  "override one config key, key=value, repeatable");
  cmd->add_option("--out", st.common.out_dir,
                  "output directory (or AVSEP_OUT_DIR)");
  st.seed_opt = cmd->add_option("--seed", st.seed, "override the seed key");
  cmd->add_flag("--force", st.common.force, "reuse a non-empty output directory");
}

const avsep::cli::CommonArgs& finish(SubState& st) {
  if (st.seed_opt->count() > 0) st.common.seed = st.seed;
  return st.common;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"audio-visual speech separation toolkit"};
  app.require_subcommand(1);

  SubState synth_st;
  CLI::App* synth = app.add_subcommand(
      "synth-data", "generate a synthetic corpus with split manifests");
  add_common(synth, synth_st);

  SubState train_st;
  CLI::App* train_cmd =
      app.add_subcommand("train", "train a separation model");
  add_common(train_cmd, train_st);

  SubState eval_st;
  avsep::cli::EvaluateArgs eval_args;
  CLI::App* eval_cmd =
      app.add_subcommand("evaluate", "score methods on the test split");
  add_common(eval_cmd, eval_st);
  eval_cmd->add_option("--proposed", eval_args.proposed_ckpt,
                       "mask model checkpoint trained with the "
                       "correspondence term");
  eval_cmd->add_option("--baseline", eval_args.baseline_ckpt,
                       "mask model checkpoint trained without it");
  eval_cmd->add_option("--upit", eval_args.upit_ckpt,
                       "audio-only upit checkpoint");
  eval_cmd->add_flag("--with-oracle", eval_args.with_oracle,
                     "add the oracle magnitude mask row");

  SubState sep_st;
  avsep::cli::SeparateArgs sep_args;
  CLI::App* sep_cmd =
      app.add_subcommand("separate", "separate one mixture wav");
  add_common(sep_cmd, sep_st);
  sep_cmd->add_option("--checkpoint", sep_args.checkpoint, "mask model checkpoint")
      ->required();
  sep_cmd->add_option("--mixture", sep_args.mixture_path, "input mixture wav")
      ->required();
  sep_cmd->add_option("--video", sep_args.video_dirs,
                      "frame directory, one per speaker, repeatable")
      ->required();

  SubState ana_st;
  avsep::cli::AnalyzeArgs ana_args;
  CLI::App* ana_cmd = app.add_subcommand(
      "analyze-correspondence", "angle histograms on the test split");
  add_common(ana_cmd, ana_st);
  ana_cmd->add_option("--proposed", ana_args.proposed_ckpt,
                      "checkpoint carrying the correspondence head")
      ->required();
  ana_cmd->add_option("--baseline", ana_args.baseline_ckpt,
                      "checkpoint analyzed through the borrowed head");
  ana_cmd->add_flag("--no-plot", ana_args.no_plot, "skip the svg plot");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) {
      const auto& args = finish(synth_st);
      const auto cfg = avsep::cli::merge_config(args);
      const std::string out = avsep::cli::begin_run(args, cfg);
      avsep::cli::cmd_synth_data(cfg, out, std::cout);
    } else if (train_cmd->parsed()) {
      const auto& args = finish(train_st);
      const auto cfg = avsep::cli::merge_config(args);
      const std::string out = avsep::cli::begin_run(args, cfg);
      avsep::cli::cmd_train(cfg, out, std::cout, std::cerr);
    } else if (eval_cmd->parsed()) {
      const auto& args = finish(eval_st);
      const auto cfg = avsep::cli::merge_config(args);
      const std::string out = avsep::cli::begin_run(args, cfg);
      avsep::cli::cmd_evaluate(cfg, eval_args, out, std::cout);
    } else if (sep_cmd->parsed()) {
      const auto& args = finish(sep_st);
      const auto cfg = avsep::cli::merge_config(args);
      const std::string out = avsep::cli::begin_run(args, cfg);
      avsep::cli::cmd_separate(cfg, sep_args, out, std::cout);
    } else if (ana_cmd->parsed()) {
      const auto& args = finish(ana_st);
      const auto cfg = avsep::cli::merge_config(args);
      const std::string out = avsep::cli::begin_run(args, cfg);
      avsep::cli::cmd_analyze_correspondence(cfg, ana_args, out, std::cout);
    }
  } catch (const avsep::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
