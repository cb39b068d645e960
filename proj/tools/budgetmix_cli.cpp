/* Copyright (c) 2026 The budgetmix Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

// Command-line front end: budgetmix <gen|split|train|eval|calibrate|sweep|report> --config <path>

#include "budgetmix/experiment.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <iostream>

namespace {

int fail(const std::string& command, const std::string& message) {
  nlohmann::ordered_json j;
  j["status"] = "error";
  j["command"] = command;
  j["message"] = message;
  std::cerr << j.dump() << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train and evaluate label-distribution classifiers under uneven annotation budgets"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;

  const std::vector<std::pair<std::string, std::string>> commands{
      {"gen", "generate the synthetic training pool and eval set"},
      {"split", "allocate the label budget into single/multi/unlabeled sets"},
      {"train", "train the configured strategy on each seed's split"},
      {"eval", "score checkpoints on the eval set"},
      {"calibrate", "entropy-matched calibration of trained checkpoints"},
      {"sweep", "gen + split + train + eval (+ calibrate) over all seeds, then summarise"},
      {"report", "summarise existing per-seed reports (mean and stddev)"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "run only this seed");
    sub->add_option("--out", out_dir, "output root (overrides the config)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    auto cfg = budgetmix::load_experiment(config_path);
    if (seed) {
      cfg.seeds = {*seed};
    }
    if (!out_dir.empty()) {
      cfg.out = out_dir;
    }
    const budgetmix::Experiment exp(std::move(cfg));
    const auto& seeds = exp.config().seeds;

    nlohmann::ordered_json result;
    result["status"] = "ok";
    result["command"] = command;
    result["run_dir"] = exp.run_dir().string();
    if (command == "gen") {
      exp.gen();
    } else if (command == "split") {
      for (const auto s : seeds) {
        result["manifests"].push_back(exp.split(s));
      }
    } else if (command == "train") {
      for (const auto s : seeds) {
        exp.train(s);
      }
    } else if (command == "eval") {
      for (const auto s : seeds) {
        result["reports"].push_back(budgetmix::report_summary_json(exp.eval(s)));
      }
    } else if (command == "calibrate") {
      for (const auto s : seeds) {
        result["reports"].push_back(budgetmix::report_summary_json(exp.calibrate(s)));
      }
    } else if (command == "sweep") {
      result["summary"] = exp.sweep();
    } else if (command == "report") {
      result["summary"] = exp.report();
    }
    std::cout << result.dump(2) << '\n';
  } catch (const std::exception& e) {
    return fail(command, e.what());
  }
  return 0;
}
