// Copyright 2026 The ProbMix Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "probmix/experiment.hpp"
#include "probmix/selftest.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitRuntimeError = 2;
constexpr int kExitSelftestFailure = 3;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
  auto* opt = cmd->add_option("--config", args.config_path, "experiment config (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--set", args.overrides, "config override key=value (dotted keys)");
  cmd->add_option("--out", args.out_dir, "output directory (overrides config)");
}

probmix::ExperimentConfig resolve(const CommonArgs& args) {
  probmix::ExperimentConfig cfg = probmix::load_config(args.config_path, args.overrides);
  if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"probmix: mixup and probabilistic-mixup experiment runner"};
  app.require_subcommand(1);

  CommonArgs generate_args, train_args, sweep_args, eval_args, export_args, selftest_args;

  CLI::App* cmd_generate = app.add_subcommand("generate", "write toy dataset CSV fixtures");
  add_common(cmd_generate, generate_args);
  CLI::App* cmd_train = app.add_subcommand("train", "train one method over the seed list");
  add_common(cmd_train, train_args);
  CLI::App* cmd_sweep = app.add_subcommand("sweep", "grid sweep over methods and hyperparameters");
  add_common(cmd_sweep, sweep_args);
  CLI::App* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint on the configured data");
  add_common(cmd_eval, eval_args);
  std::string eval_checkpoint;
  cmd_eval->add_option("--checkpoint", eval_checkpoint, "checkpoint file to evaluate");
  CLI::App* cmd_export = app.add_subcommand("export-plots", "emit plot-data CSVs for a checkpoint");
  add_common(cmd_export, export_args);
  std::string export_checkpoint;
  cmd_export->add_option("--checkpoint", export_checkpoint, "checkpoint file to plot");
  CLI::App* cmd_selftest =
      app.add_subcommand("selftest", "run the fusion golden and equivalence suites");
  add_common(cmd_selftest, selftest_args, /*config_required=*/false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_selftest->parsed()) {
      const int failures = probmix::run_selftest(std::cout);
      if (failures != 0) {
        std::cout << failures << " selftest check(s) failed\n";
        return kExitSelftestFailure;
      }
      std::cout << "all selftest checks passed\n";
      return kExitOk;
    }
    if (cmd_generate->parsed()) {
      probmix::run_generate(resolve(generate_args));
    } else if (cmd_train->parsed()) {
      probmix::run_train(resolve(train_args));
    } else if (cmd_sweep->parsed()) {
      probmix::run_sweep(resolve(sweep_args));
    } else if (cmd_eval->parsed()) {
      probmix::ExperimentConfig cfg = resolve(eval_args);
      if (!eval_checkpoint.empty()) cfg.eval_checkpoint = eval_checkpoint;
      probmix::run_eval(cfg);
    } else if (cmd_export->parsed()) {
      probmix::ExperimentConfig cfg = resolve(export_args);
      if (!export_checkpoint.empty()) cfg.export_settings.checkpoint = export_checkpoint;
      probmix::run_export_plots(cfg);
    }
  } catch (const probmix::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntimeError;
  }
  return kExitOk;
}
