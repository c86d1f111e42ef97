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

#include "dr/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "dr/bytes.hpp"
#include "dr/errors.hpp"

namespace dr {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const ConfigKey* find_key(std::string_view name) {
  for (const auto& k : RunConfig::schema()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

std::optional<std::int64_t> to_int(std::string_view v) {
  std::int64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) return std::nullopt;
  return out;
}

std::optional<double> to_double(std::string_view v) {
  if (v.empty()) return std::nullopt;
  std::string s(v);
  char* end = nullptr;
  const double d = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(d)) return std::nullopt;
  return d;
}

std::optional<bool> to_bool(std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  return std::nullopt;
}

// Empty string when value fits the key's type.
std::string type_error(const ConfigKey& k, std::string_view v) {
  switch (k.type) {
    case KeyType::String: return {};
    case KeyType::Int:
      return to_int(v) ? std::string{} : "key '" + k.name + "': expected an integer, got '" + std::string(v) + "'";
    case KeyType::Double:
      return to_double(v) ? std::string{} : "key '" + k.name + "': expected a number, got '" + std::string(v) + "'";
    case KeyType::Bool:
      return to_bool(v) ? std::string{} : "key '" + k.name + "': expected true or false, got '" + std::string(v) + "'";
  }
  return {};
}

std::string join_errors(const std::vector<std::string>& errors) {
  std::string msg = errors.size() == 1 ? "config error: " : std::to_string(errors.size()) + " config errors:";
  if (errors.size() == 1) return msg + errors.front();
  for (const auto& e : errors) msg += "\n  " + e;
  return msg;
}

}  // namespace

const std::vector<ConfigKey>& RunConfig::schema() {
  using enum KeyType;
  static const std::vector<ConfigKey> keys = {
      {"dataset.train", String, "", "training set (DIMG)"},
      {"dataset.val", String, "", "validation set (DIMG)"},
      {"teacher.checkpoint", String, "", "teacher model checkpoint"},
      {"augment.variant", String, "rrc+ra/re", "rrc | rrc+mixing | rrc+ra/re | rrc+m*+r*"},
      {"augment.flip_p", Double, "0.5", "horizontal flip probability"},
      {"augment.ra_p", Double, "1.0", "probability of each RandAugment slot"},
      {"augment.erase_p", Double, "0.25", "random erase probability"},
      {"augment.mix_p", Double, "0.5", "probability of mixing"},
      {"augment.mixup_alpha", Double, "0.2", "MixUp Beta parameter"},
      {"augment.cutmix_alpha", Double, "1.0", "CutMix Beta parameter"},
      {"augment.crop_scale_min", Double, "0.08", "smallest crop area fraction"},
      {"augment.crop_scale_max", Double, "1.0", "largest crop area fraction"},
      {"augment.crop_ratio_min", Double, "0.75", "smallest crop aspect ratio"},
      {"augment.crop_ratio_max", Double, "1.3333333333333333", "largest crop aspect ratio"},
      {"job.store", String, "", "output store path"},
      {"job.samples_per_image", Int, "50", "stored reinforcements per image"},
      {"job.candidate_multiplier", Int, "1", "candidates drawn per kept reinforcement"},
      {"job.selection", String, "random", "random | min_confidence | max_entropy | max_loss | kmeans_diverse"},
      {"job.top_k", Int, "10", "stored teacher probabilities per record"},
      {"job.seed", Int, "0", "reinforcement seed"},
      {"job.workers", Int, "1", "worker threads"},
      {"job.double_mix", Bool, "false", "store two mixing coefficient sets per augmentation"},
      {"schedule.curriculum", String, "none", "none or start->end with start, end in easy | all | hard"},
      {"train.objective", String, "erm", "erm | online-kd-imitation | online-kd-invariance | reinforced"},
      {"train.arch", String, "student-s", "linear | mlp | student-s | teacher-l"},
      {"train.width", Int, "8", "hidden units or base channels"},
      {"train.epochs", Int, "100", "training epochs"},
      {"train.batch_size", Int, "128", "mini-batch size"},
      {"train.lr", Double, "0.05", "base learning rate"},
      {"train.momentum", Double, "0.9", "SGD momentum"},
      {"train.weight_decay", Double, "5e-4", "weight decay (divided by 10 for distillation)"},
      {"train.label_smoothing", Double, "0.1", "label smoothing (ERM only)"},
      {"train.seed", Int, "0", "training seed"},
      {"train.store", String, "", "reinforcement store for the reinforced objective"},
      {"train.workers", Int, "1", "loader worker threads"},
      {"train.library_size", Int, "0", "mix library size, 0 disables it"},
      {"run.out_dir", String, "runs/default", "output directory"},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& k : schema()) values_[k.name] = k.default_value;
}

RunConfig RunConfig::parse(std::string_view text, std::string_view origin) {
  RunConfig cfg;
  std::vector<std::string> errors;
  std::string section;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = std::string(origin) + ":" + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') {
        errors.push_back(where + "malformed section header");
        continue;
      }
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      errors.push_back(where + "expected 'key = value'");
      continue;
    }
    std::string key(trim(line.substr(0, eq)));
    std::string_view value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
    try {
      cfg.set(key, value);
    } catch (const ValidationError& e) {
      errors.push_back(where + e.what());
    }
  }
  if (!errors.empty()) throw ValidationError(join_errors(errors));
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  const auto bytes = bytes::read_file(path);
  return parse(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), path);
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const auto* k = find_key(key);
  if (!k) throw ValidationError("unknown key '" + std::string(key) + "'");
  if (auto err = type_error(*k, value); !err.empty()) throw ValidationError(err);
  values_[k->name] = std::string(value);
}

void RunConfig::apply_overrides(const std::vector<std::string>& assignments) {
  std::vector<std::string> errors;
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) {
      errors.push_back("override '" + a + "': expected key=value");
      continue;
    }
    try {
      set(trim(std::string_view(a).substr(0, eq)), trim(std::string_view(a).substr(eq + 1)));
    } catch (const ValidationError& e) {
      errors.push_back(e.what());
    }
  }
  if (!errors.empty()) throw ValidationError(join_errors(errors));
}

const std::string& RunConfig::get(std::string_view key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("unknown key '" + std::string(key) + "'");
  return it->second;
}

std::int64_t RunConfig::get_int(std::string_view key) const { return *to_int(get(key)); }

std::uint64_t RunConfig::get_uint(std::string_view key) const {
  const auto v = get_int(key);
  if (v < 0) throw ValidationError("key '" + std::string(key) + "' must be >= 0");
  return static_cast<std::uint64_t>(v);
}

double RunConfig::get_double(std::string_view key) const { return *to_double(get(key)); }
bool RunConfig::get_bool(std::string_view key) const { return *to_bool(get(key)); }

const std::string& RunConfig::require(std::string_view key) const {
  const auto& v = get(key);
  if (v.empty()) throw ValidationError("missing required key '" + std::string(key) + "'");
  return v;
}

std::string RunConfig::echo() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
  return out.str();
}

AugmentationPolicy policy_from(const RunConfig& cfg) {
  auto p = AugmentationPolicy::for_variant(parse_variant(cfg.get("augment.variant")));
  p.flip_p = cfg.get_double("augment.flip_p");
  p.ra_p = cfg.get_double("augment.ra_p");
  p.erase_p = cfg.get_double("augment.erase_p");
  p.mix_p = cfg.get_double("augment.mix_p");
  p.mixup_alpha = cfg.get_double("augment.mixup_alpha");
  p.cutmix_alpha = cfg.get_double("augment.cutmix_alpha");
  p.crop_scale = {cfg.get_double("augment.crop_scale_min"), cfg.get_double("augment.crop_scale_max")};
  p.crop_ratio = {cfg.get_double("augment.crop_ratio_min"), cfg.get_double("augment.crop_ratio_max")};
  p.check();
  return p;
}

TrainConfig train_config_from(const RunConfig& cfg) {
  TrainConfig t;
  t.objective = parse_objective(cfg.get("train.objective"));
  t.epochs = cfg.get_uint("train.epochs");
  t.batch_size = cfg.get_uint("train.batch_size");
  t.base_lr = cfg.get_double("train.lr");
  t.momentum = cfg.get_double("train.momentum");
  t.weight_decay = cfg.get_double("train.weight_decay");
  t.label_smoothing = cfg.get_double("train.label_smoothing");
  t.seed = cfg.get_uint("train.seed");
  t.check();
  return t;
}

std::optional<CurriculumSchedule> schedule_from(const RunConfig& cfg) {
  const auto& name = cfg.get("schedule.curriculum");
  if (name == "none" || name.empty()) return std::nullopt;
  return CurriculumSchedule::preset(name, static_cast<double>(cfg.get_uint("train.epochs")));
}

}  // namespace dr
