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
#include <chrono>
#include <cstdint>
#include <limits>
#include <string_view>
#include <vector>

#include "dr/augment.hpp"
#include "dr/dataset.hpp"
#include "dr/store.hpp"
#include "dr/teacher.hpp"

namespace dr {

enum class Selection { Random, MinConfidence, MaxEntropy, MaxLoss, KMeansDiverse };

std::string_view selection_name(Selection s);
Selection parse_selection(std::string_view name);

struct ReinforceJob {
  const LabeledDataset* dataset = nullptr;
  const Teacher* teacher = nullptr;
  AugmentationPolicy policy;
  std::size_t samples_per_image = 50;  // N
  std::size_t candidate_multiplier = 1;  // M: draw N*M candidates, keep N
  Selection selection = Selection::Random;
  std::size_t top_k = 10;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  // Store pairs of records sharing one augmentation and partner but two mixing
  // coefficient sets. Needs a mixing policy, even N and M == 1.
  bool double_mix = false;
  // Target images per teacher call; groups of one image are never split.
  std::size_t teacher_batch = 256;

  void check() const;
};

// One scored candidate of an image.
struct Candidate {
  std::uint32_t index = 0;  // draw order within the image
  AugmentationDescriptor desc;
  SparseProbs probs;
  DistributionMetrics metrics;  // from the full teacher row
};

// Picks n of the candidates; returns candidate positions in ascending order.
// Extreme-n strategies break ties by candidate index. KMeansDiverse runs k-means
// (k = n, k-means++ seeding from rng, at most 50 Lloyd iterations) on the
// densified probabilities and keeps the member nearest to each centroid; a
// cluster with no unused member takes the nearest unused candidate instead.
std::vector<std::size_t> select_subset(const std::vector<Candidate>& candidates, Selection strategy, std::size_t n,
                                       std::size_t num_classes, SeededRng& rng);

// Live counters of a running job. All values only grow.
struct ReinforceProgress {
  std::atomic<std::uint64_t> images_done{0};
  std::atomic<std::uint64_t> records_written{0};
  std::atomic<std::uint64_t> bytes_written{0};
  std::atomic<std::uint64_t> teacher_images{0};
  std::uint64_t total_images = 0;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  double elapsed_seconds() const;
  // Images per second since start.
  double throughput() const;
  // Seconds left at the current throughput; infinity before the first image.
  double eta_seconds() const;
};

struct ReinforceStats {
  std::uint64_t images = 0;
  std::uint64_t records = 0;
  std::uint64_t bytes = 0;
  std::uint64_t teacher_images = 0;
  double seconds = 0.0;
  double images_per_second = 0.0;
};

// The one-time reinforcement pass. Per-image results depend only on the seed, so
// any worker count produces the same bytes.
ReinforcementStore reinforce(const ReinforceJob& job, ReinforceProgress* progress = nullptr,
                             ReinforceStats* stats = nullptr);

// The descriptor candidate c of an image is drawn from.
SeededRng candidate_rng(std::uint64_t seed, std::uint32_t image_id, std::uint32_t candidate);

}  // namespace dr
