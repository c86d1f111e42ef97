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
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dr/loader.hpp"
#include "dr/nn.hpp"
#include "dr/store.hpp"
#include "dr/synth.hpp"
#include "dr/train.hpp"

namespace dr::exp {

// Sizes and schedules of the desk experiments.
struct DeskOptions {
  std::size_t train_size = 5000;
  std::size_t val_size = 1000;
  std::size_t teacher_epochs = 60;
  std::size_t student_epochs = 100;
  std::size_t timing_epochs = 5;
  std::size_t seeds = 3;
  std::size_t samples = 50;         // N of the main store
  std::size_t samples_large = 400;  // reference N of the sample-count experiment
  std::size_t library_size = 100;
  std::size_t workers = 1;
  std::string cache_dir;  // teacher checkpoints and stores are reused from here when set
  bool quick = false;

  static DeskOptions full();
  static DeskOptions quick_run();
};

struct RunKey {
  Objective objective = Objective::Erm;
  std::uint64_t seed = 1;
  std::size_t samples = 0;  // reinforced only
  std::string curriculum = "none";
  std::uint16_t width = 8;
  bool mixing = false;      // reinforced store with MixUp/CutMix
  bool library = false;
  std::size_t epochs = 0;   // 0: student_epochs

  std::string str() const;
};

struct RunResult {
  double accuracy = 0.0;
  double ece = 0.0;
  double mean_step_seconds = 0.0;
  double median_step_seconds = 0.0;
  std::size_t steps = 0;
  std::uint64_t teacher_calls = 0;
  double seconds = 0.0;
};

// Lazily builds the desk dataset, teacher and stores, and caches runs so
// criteria sharing a configuration train it once.
class Desk {
 public:
  explicit Desk(DeskOptions opts, std::ostream* log = nullptr);

  const DeskOptions& options() const { return opts_; }
  const LabeledDataset& train_set() const { return train_; }
  const LabeledDataset& val_set() const { return val_; }
  const SynthGenerator& generator() const { return gen_; }

  AugmentationPolicy policy(bool mixing = false) const;
  const nn::ModelTeacher& teacher();
  double teacher_accuracy();
  const ReinforcementStore& store(std::size_t samples, bool mixing = false);
  RunResult run(const RunKey& key);

 private:
  DeskOptions opts_;
  std::ostream* log_;
  SynthGenerator gen_;
  LabeledDataset train_, val_;
  std::shared_ptr<nn::Model> teacher_model_;
  std::unique_ptr<nn::ModelTeacher> teacher_;
  std::map<std::string, std::unique_ptr<ReinforcementStore>> stores_;
  std::map<std::string, RunResult> runs_;
  std::unique_ptr<MixLibrary> library_;
};

struct Metric {
  std::string name;
  double value = 0.0;
  std::string threshold;
  bool pass = true;
};

struct Table {
  std::string caption;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

struct CriterionResult {
  int id = 0;
  std::string title;
  bool blocking = true;
  bool pass = false;
  std::vector<Metric> metrics;
  std::vector<Table> tables;
  std::vector<std::string> notes;
  double seconds = 0.0;
};

CriterionResult storage_table();
CriterionResult training_overhead(Desk& desk);
CriterionResult accuracy_ordering(Desk& desk);
CriterionResult sample_count(Desk& desk);
CriterionResult calibration(Desk& desk);
CriterionResult curriculum(Desk& desk);
CriterionResult property_suites();
CriterionResult mixing_mechanics(Desk& desk);

// Runs the selected criteria (all when empty) in order.
std::vector<CriterionResult> run_criteria(Desk& desk, const std::vector<int>& ids, std::ostream* log = nullptr);

std::string fmt(double v, int digits = 4);
std::string to_markdown(const std::vector<CriterionResult>& results, const DeskOptions& opts);
void write_csv(const std::vector<CriterionResult>& results, std::ostream& out);

}  // namespace dr::exp
