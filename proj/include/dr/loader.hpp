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

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dr/augment.hpp"
#include "dr/batch.hpp"
#include "dr/dataset.hpp"
#include "dr/store.hpp"
#include "dr/teacher.hpp"

namespace dr {

// Index window [a, b] in percent of the confidence-sorted records of an image,
// moved from (a0, b0) to (a1, b1) over total_epochs with a half-cosine ramp.
struct CurriculumSchedule {
  double a0 = 0.0, b0 = 100.0;
  double a1 = 0.0, b1 = 100.0;
  double total_epochs = 1.0;

  // "easy", "all" or "hard" start/end pairs, written "easy->all" etc.
  static CurriculumSchedule preset(std::string_view name, double total_epochs);
  void check() const;
};

struct Window {
  double a = 0.0;
  double b = 100.0;
};

// a(t) = a0 + (a1 - a0)(1 - cos(pi t / T)) / 2, same for b; b - a >= 1.
// T == 0 gives the end window.
Window window_at(const CurriculumSchedule& sched, double epoch);

// Record indices [ceil(a N / 100), floor(b N / 100)) of a group of n records,
// widened to one index when rounding empties it.
std::pair<std::size_t, std::size_t> window_indices(const Window& w, std::size_t n);

// Chosen stored index per image for one epoch. Without a schedule the window is
// (0, 100). Double-mix stores pick a pair slot; the returned index is the pair's
// first record.
std::vector<std::uint32_t> epoch_plan(const ReinforcementStore& store, const std::optional<CurriculumSchedule>& sched,
                                      std::size_t epoch, std::uint64_t seed);

// Preloaded partner images, one pre-replayed augmentation per member. Lookups map
// any partner id to the nearest member id (modular distance).
class MixLibrary {
 public:
  MixLibrary() = default;
  // Picks `size` members uniformly without replacement; each is replayed with
  // the crop/flip/RA chain of its own stored record 0.
  static MixLibrary build(const LabeledDataset& ds, const ReinforcementStore& store, std::size_t size,
                          ImageDims out, std::uint64_t seed);

  std::size_t size() const { return ids_.size(); }
  const std::vector<std::int32_t>& ids() const { return ids_; }
  std::int32_t nearest(std::int32_t id, std::size_t dataset_size) const;
  const Image& image_for(std::int32_t id, std::size_t dataset_size) const;

 private:
  std::vector<std::int32_t> ids_;  // sorted
  std::vector<Image> images_;
};

// A loaded (image, partner) pair whose base chains are already applied, plus the
// two descriptors of a double-mix pair.
struct DoubleMixInput {
  Image primary;
  Image partner;
  AugmentationDescriptor first;
  AugmentationDescriptor second;
};

// Mixes every pair twice, once per coefficient set: output size is 2x input.
std::vector<Image> double_mix_expand(const std::vector<DoubleMixInput>& pairs);

struct LoaderOptions {
  ImageDims out{16, 16, 1};
  std::optional<CurriculumSchedule> schedule;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  const MixLibrary* library = nullptr;
};

// Training-time iterator over a reinforced dataset: one stored reinforcement per
// image per epoch, replayed on the fly. Holds no teacher.
class ReinforcedLoader {
 public:
  ReinforcedLoader(const LabeledDataset& ds, const ReinforcementStore& store, LoaderOptions opts);

  void reset(std::size_t epoch);
  // Next batch of up to batch_size samples; std::nullopt at epoch end. On
  // double-mix stores each loaded image yields two samples.
  std::optional<Batch> next_batch(std::size_t batch_size);

  std::size_t epoch_images() const { return order_.size(); }
  std::size_t samples_per_epoch() const;
  const std::vector<std::uint32_t>& plan() const { return plan_; }
  std::size_t num_classes() const { return store_.header().num_classes; }

  // Base-dataset partner images fetched (library hits excluded).
  std::uint64_t partner_loads() const { return partner_loads_.load(); }
  std::uint64_t samples_emitted() const { return samples_emitted_; }

 private:
  void load_single(std::uint32_t id, Image& out_img, std::vector<float>& target_row) const;
  void load_pair(std::uint32_t id, Image& out_a, Image& out_b, std::vector<float>& row_a,
                 std::vector<float>& row_b) const;
  const Image& partner_image(std::int32_t id) const;

  const LabeledDataset& ds_;
  const ReinforcementStore& store_;
  LoaderOptions opts_;
  std::vector<std::uint32_t> plan_;
  std::vector<std::uint32_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
  mutable std::atomic<std::uint64_t> partner_loads_{0};
  std::uint64_t samples_emitted_ = 0;
};

}  // namespace dr
