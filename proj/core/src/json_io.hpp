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

// JSON conversions shared by the library sources. Not installed.
#pragma once

#include <string>

#include "json.hpp"
#include "msv/autodiff.hpp"
#include "msv/msv_model.hpp"
#include "msv/synth.hpp"
#include "msv/training.hpp"

namespace msv {

using Json = nlohmann::json;

// Shortest text that reads back to the same double.
std::string format_real(double v);

Json tensor_to_json(const ad::Tensor& t);
ad::Tensor tensor_from_json(const Json& j);

// Missing keys keep their defaults; unknown keys throw UsageError naming
// `section`.
Json msv_config_to_json(const MsvConfig& c);
MsvConfig msv_config_from_json(const Json& j, const std::string& section = "model");
Json gen_config_to_json(const GenConfig& c);
GenConfig gen_config_from_json(const Json& j, const std::string& section = "gen");
Json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j, const std::string& section = "train");

Json report_to_json(const Report& r);

// Throws UsageError when `j` has a key outside `allowed`.
void check_keys(const Json& j, std::initializer_list<const char*> allowed,
                const std::string& section);

}  // namespace msv
