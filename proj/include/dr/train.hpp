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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dr/augment.hpp"
#include "dr/batch.hpp"
#include "dr/loader.hpp"
#include "dr/nn.hpp"
#include "dr/teacher.hpp"

namespace dr {

enum class Objective {
  Erm,                 // hard labels, label smoothing
  OnlineKdImitation,   // teacher evaluated on the augmented input
  OnlineKdInvariance,  // teacher evaluated on the clean input
  Reinforced,          // stored teacher outputs, no teacher in the loop
};

std::string_view objective_name(Objective o);
Objective parse_objective(std::string_view name);
inline bool is_distillation(Objective o) { return o != Objective::Erm; }

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  double base_lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double label_smoothing = 0.1;
  Objective objective = Objective::Erm;
  std::uint64_t seed = 0;
  bool eval_every_epoch = true;

  // Label smoothing only for ERM; distillation objectives use the plain KL loss.
  double effective_label_smoothing() const { return is_distillation(objective) ? 0.0 : label_smoothing; }
  // Distillation objectives shrink weight decay by 10x.
  double effective_weight_decay() const { return is_distillation(objective) ? weight_decay / 10.0 : weight_decay; }
  void check() const;
};

// Cosine schedule from base_lr at step 0 to exactly 0 at total_steps.
double cosine_lr(double base_lr, std::size_t step, std::size_t total_steps);

// Supplies one epoch of (input, soft target) batches.
class DataSource {
 public:
  virtual ~DataSource() = default;
  virtual void reset(std::size_t epoch) = 0;
  virtual std::optional<Batch> next_batch(std::size_t batch_size) = 0;
  virtual std::size_t samples_per_epoch() const = 0;
  virtual std::size_t num_classes() const = 0;
};

// Online augmentation with hard (optionally mixed) labels.
class ErmSource final : public DataSource {
 public:
  ErmSource(const LabeledDataset& ds, AugmentationPolicy policy, ImageDims out, std::uint64_t seed,
            double label_smoothing);
  void reset(std::size_t epoch) override;
  std::optional<Batch> next_batch(std::size_t batch_size) override;
  std::size_t samples_per_epoch() const override { return ds_.size(); }
  std::size_t num_classes() const override { return ds_.num_classes; }

 private:
  const LabeledDataset& ds_;
  AugmentationPolicy policy_;
  ImageDims out_;
  std::uint64_t seed_;
  double smoothing_;
  std::vector<std::uint32_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

enum class KdMode { Imitation, Invariance };

// Online distillation: one teacher batch call per step. Imitation shows the
// teacher the augmented image; invariance shows it the clean image.
class OnlineKdSource final : public DataSource {
 public:
  OnlineKdSource(const LabeledDataset& ds, AugmentationPolicy policy, ImageDims out, const Teacher& teacher,
                 KdMode mode, std::uint64_t seed);
  void reset(std::size_t epoch) override;
  std::optional<Batch> next_batch(std::size_t batch_size) override;
  std::size_t samples_per_epoch() const override { return ds_.size(); }
  std::size_t num_classes() const override { return ds_.num_classes; }

 private:
  const LabeledDataset& ds_;
  AugmentationPolicy policy_;
  ImageDims out_;
  const Teacher& teacher_;
  KdMode mode_;
  std::uint64_t seed_;
  std::vector<std::uint32_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

class ReinforcedSource final : public DataSource {
 public:
  explicit ReinforcedSource(ReinforcedLoader& loader) : loader_(loader) {}
  void reset(std::size_t epoch) override { loader_.reset(epoch); }
  std::optional<Batch> next_batch(std::size_t batch_size) override { return loader_.next_batch(batch_size); }
  std::size_t samples_per_epoch() const override { return loader_.samples_per_epoch(); }
  std::size_t num_classes() const override { return loader_.num_classes(); }

 private:
  ReinforcedLoader& loader_;
};

// The descriptor an online source draws for (epoch, image). Exposed so tests can
// rebuild exactly what the teacher saw.
AugmentationDescriptor online_descriptor(const AugmentationPolicy& policy, const Image& src,
                                         std::size_t dataset_size, std::uint64_t seed, std::size_t epoch,
                                         std::uint32_t image_id);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_acc = 0.0;
  double val_ece = 0.0;
  double seconds = 0.0;
  std::size_t steps = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<double> step_seconds;  // wall clock of every step, data loading included
  std::size_t steps = 0;
  std::uint64_t teacher_calls = 0;  // teacher batch calls made during training

  double mean_step_seconds() const;
  // Median is robust to scheduler noise on shared machines.
  double median_step_seconds() const;
  void write_csv(std::ostream& out) const;
  void write_csv(const std::string& path) const;
};

// Mini-batch SGD with momentum and a cosine schedule. Deterministic for a fixed
// config. Throws std::runtime_error naming the step when the loss is not finite.
TrainHistory train(nn::Model& model, DataSource& data, const TrainConfig& cfg, const LabeledDataset* val = nullptr,
                   std::ostream* log = nullptr);

// Per-sample probabilities on a dataset (resized to the model input if needed).
ProbMatrix predict_dataset(const nn::Model& model, const LabeledDataset& ds, std::size_t batch_size = 256);

// Argmax with ties to the lowest class index.
std::size_t argmax(std::span<const float> row);

// Top-1 accuracy in [0, 1].
double evaluate(const nn::Model& model, const LabeledDataset& ds);
double accuracy(const ProbMatrix& probs, std::span<const std::uint16_t> labels);

// Expected calibration error over equal-width bins (lo, hi]; confidences in (0, 1].
double ece(std::span<const double> confidences, std::span<const std::uint8_t> correct, std::size_t bins = 15);
double ece(const ProbMatrix& probs, std::span<const std::uint16_t> labels, std::size_t bins = 15);

}  // namespace dr
