// Copyright 2026 The dreinforce Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dr/augment.hpp"
#include "dr/loader.hpp"
#include "dr/train.hpp"

namespace dr {

enum class KeyType { String, Int, Double, Bool };

struct ConfigKey {
  std::string name;  // section.key
  KeyType type;
  std::string default_value;
  std::string help;
};

// Plain-text run configuration: one "section.key = value" per line, '#' starts a
// comment, and a "[section]" line prefixes the bare keys that follow. Unknown
// keys and malformed values are errors; all of them are reported together.
class RunConfig {
 public:
  RunConfig();

  static const std::vector<ConfigKey>& schema();
  static RunConfig parse(std::string_view text, std::string_view origin = "<config>");
  static RunConfig load(const std::string& path);

  // Throws ValidationError naming the key on unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  // "key=value" strings applied in order; every bad entry is reported.
  void apply_overrides(const std::vector<std::string>& assignments);

  const std::string& get(std::string_view key) const;
  std::int64_t get_int(std::string_view key) const;
  std::uint64_t get_uint(std::string_view key) const;
  double get_double(std::string_view key) const;
  bool get_bool(std::string_view key) const;
  // Non-empty string value, else ValidationError "missing required key".
  const std::string& require(std::string_view key) const;

  // Effective configuration in parseable form, one key per line, sorted.
  std::string echo() const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

AugmentationPolicy policy_from(const RunConfig& cfg);
TrainConfig train_config_from(const RunConfig& cfg);
std::optional<CurriculumSchedule> schedule_from(const RunConfig& cfg);

}  // namespace dr
