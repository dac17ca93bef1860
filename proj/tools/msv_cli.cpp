/*
 * Copyright 2026 The MSV Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// msv: generate | train | eval | sweep

#include <iostream>

#include "CLI11.hpp"
#include "msv/commands.hpp"
#include "msv/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Multi-sequence verifier experiments"};
  app.require_subcommand(1, 1);
  msv::CommandOptions opts;
  std::string config, out;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  auto* config_opt = app.add_option("--config", config, "run config JSON")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "overrides gen.seed and train.seed");
  auto* out_opt = app.add_option("--out", out, "run directory");
  auto* jobs_opt = app.add_option("--jobs", jobs, "evaluation workers")->check(CLI::PositiveNumber);
  for (const char* name : {"generate", "train", "eval", "sweep"}) {
    app.add_subcommand(name)->fallthrough();
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << msv::error_json("usage", e.what()) << "\n";
    return 2;
  }
  if (*config_opt) opts.config = config;
  if (*seed_opt) opts.seed = seed;
  if (*out_opt) opts.out = out;
  if (*jobs_opt) opts.jobs = jobs;
  try {
    msv::run_command(app.get_subcommands().front()->get_name(), opts);
  } catch (const msv::Error& e) {
    std::cerr << msv::error_json(e.kind(), e.what()) << "\n";
    return e.kind() == "usage" ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << msv::error_json("internal", e.what()) << "\n";
    return 1;
  }
  return 0;
}
