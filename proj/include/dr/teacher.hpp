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
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dr/dataset.hpp"

namespace dr {

struct ImageDims {
  std::uint16_t height = 0;
  std::uint16_t width = 0;
  std::uint8_t channels = 1;
  friend bool operator==(const ImageDims&, const ImageDims&) = default;
};

inline ImageDims dims_of(const Image& img) { return {img.height, img.width, img.channels}; }

// Row-major (rows x cols) probability matrix.
struct ProbMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;

  ProbMatrix() = default;
  ProbMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.f) {}
  std::span<float> row(std::size_t i) { return {values.data() + i * cols, cols}; }
  std::span<const float> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
};

// The teacher g: batch of images at input_dims() -> row-stochastic class
// probabilities. predict() must be safe to call from several threads at once.
class Teacher {
 public:
  virtual ~Teacher() = default;

  virtual std::size_t num_classes() const = 0;
  virtual ImageDims input_dims() const = 0;
  virtual std::string identity() const = 0;

  // Checks dims, counts the call, forwards to predict_batch.
  ProbMatrix predict(std::span<const Image> batch) const;

 protected:
  virtual ProbMatrix predict_batch(std::span<const Image> batch) const = 0;
};

// Process-wide counters of outermost predict() calls (nested ensemble member
// calls are not counted). Used to prove the reinforced loader never runs a teacher.
std::uint64_t teacher_batch_calls();
std::uint64_t teacher_image_evals();
void reset_teacher_counters();

// Arithmetic mean of member outputs.
class EnsembleTeacher final : public Teacher {
 public:
  explicit EnsembleTeacher(std::vector<std::shared_ptr<const Teacher>> members);

  std::size_t num_classes() const override;
  ImageDims input_dims() const override;
  std::string identity() const override;
  std::size_t size() const { return members_.size(); }

 protected:
  ProbMatrix predict_batch(std::span<const Image> batch) const override;

 private:
  std::vector<std::shared_ptr<const Teacher>> members_;
};

struct SparseEntry {
  std::uint32_t index = 0;
  float prob = 0.f;
  friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

// Top-K teacher probabilities, sorted by descending probability with ties broken
// by ascending class index. Values are the raw teacher outputs.
struct SparseProbs {
  std::vector<SparseEntry> entries;

  bool empty() const { return entries.empty(); }
  std::size_t size() const { return entries.size(); }
  float confidence() const { return entries.empty() ? 0.f : entries.front().prob; }
  friend bool operator==(const SparseProbs&, const SparseProbs&) = default;
};

// Keeps the k largest entries. Zero (or negative) probabilities are never stored,
// so the result may hold fewer than k entries. Throws for k == 0 or k > row size.
SparseProbs sparsify(std::span<const float> row, std::size_t k);

// Full row: zero outside the support, support renormalized to sum to 1.
std::vector<double> densify(const SparseProbs& sp, std::size_t num_classes);

struct DistributionMetrics {
  double confidence = 0.0;  // max p_j
  double entropy = 0.0;     // -sum p_j ln p_j, nats
  double loss = 0.0;        // -ln p_y; +inf when p_y == 0
  bool loss_infinite = false;
};

DistributionMetrics distribution_metrics(std::span<const float> row, std::optional<std::size_t> label = {});
DistributionMetrics distribution_metrics(std::span<const double> row, std::optional<std::size_t> label = {});
// Computed on the raw stored entries; labels outside the support give infinite loss.
DistributionMetrics distribution_metrics(const SparseProbs& sp, std::optional<std::size_t> label = {});

}  // namespace dr
