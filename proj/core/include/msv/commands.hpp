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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace msv {

// Global flags; each one overrides the matching config file entry.
struct CommandOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;  // gen.seed and train.seed
  std::optional<std::filesystem::path> out;
  std::optional<std::size_t> jobs;
};

// Each command writes its outputs under the run directory and embeds the
// resolved configuration in config.json. Failures throw msv::Error.
void cmd_generate(const CommandOptions& options);
void cmd_train(const CommandOptions& options);
void cmd_eval(const CommandOptions& options);
void cmd_sweep(const CommandOptions& options);

// Dispatches by name; throws UsageError for an unknown command.
void run_command(std::string_view name, const CommandOptions& options);

// {"error": message, "kind": tag} for stderr.
std::string error_json(std::string_view kind, std::string_view message);

}  // namespace msv
