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

#include "dr/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include "dr/errors.hpp"

namespace dr {
namespace {

constexpr std::uint64_t kOrderTag = 0x0DE5;
constexpr std::uint64_t kAugTag = 0x0411;

std::vector<std::uint32_t> shuffled_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::uint32_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
  SeededRng rng(seed, derive_stream(epoch, kOrderTag));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

Image resize_full(const Image& img, ImageDims out) {
  if (dims_of(img) == out) return img;
  if (img.channels != out.channels) throw ValidationError("channel count mismatch");
  return crop_resize(img, Box{0.f, 0.f, 1.f, 1.f}, out.height, out.width);
}

// Share of the primary image that survives mixing, in pixels.
double primary_weight(const AugmentationDescriptor& d, ImageDims dims) {
  if (d.mixup_applied()) return d.mixup_lambda;
  if (!d.cutmix_applied()) return 1.0;
  const auto px = [](float f, std::uint16_t n) { return std::clamp<long>(std::lround(static_cast<double>(f) * n), 0, n); };
  const long w = px(d.cutmix_box.x + d.cutmix_box.w, dims.width) - px(d.cutmix_box.x, dims.width);
  const long h = px(d.cutmix_box.y + d.cutmix_box.h, dims.height) - px(d.cutmix_box.y, dims.height);
  return 1.0 - static_cast<double>(w * h) / (static_cast<double>(dims.width) * dims.height);
}

}  // namespace

std::string_view objective_name(Objective o) {
  switch (o) {
    case Objective::Erm: return "erm";
    case Objective::OnlineKdImitation: return "online-kd-imitation";
    case Objective::OnlineKdInvariance: return "online-kd-invariance";
    case Objective::Reinforced: return "reinforced";
  }
  return "erm";
}

Objective parse_objective(std::string_view name) {
  for (auto o : {Objective::Erm, Objective::OnlineKdImitation, Objective::OnlineKdInvariance, Objective::Reinforced}) {
    if (name == objective_name(o)) return o;
  }
  throw ValidationError("unknown objective '" + std::string(name) + "'");
}

void TrainConfig::check() const {
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  if (!(base_lr >= 0.0)) throw ValidationError("learning rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight decay must be >= 0");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) throw ValidationError("label smoothing must be in [0, 1)");
}

double cosine_lr(double base_lr, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0 || step >= total_steps) return 0.0;
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
}

AugmentationDescriptor online_descriptor(const AugmentationPolicy& policy, const Image& src,
                                         std::size_t dataset_size, std::uint64_t seed, std::size_t epoch,
                                         std::uint32_t image_id) {
  SeededRng rng(seed, derive_stream(epoch, image_id, kAugTag));
  return sample_descriptor(policy, src.height, src.width, dataset_size, image_id, rng);
}

// ---- ErmSource --------------------------------------------------------------

ErmSource::ErmSource(const LabeledDataset& ds, AugmentationPolicy policy, ImageDims out, std::uint64_t seed,
                     double label_smoothing)
    : ds_(ds), policy_(policy), out_(out), seed_(seed), smoothing_(label_smoothing) {
  policy_.check();
  reset(0);
}

void ErmSource::reset(std::size_t epoch) {
  epoch_ = epoch;
  order_ = shuffled_order(ds_.size(), seed_, epoch);
  cursor_ = 0;
}

std::optional<Batch> ErmSource::next_batch(std::size_t batch_size) {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t n = std::min(batch_size, order_.size() - cursor_);
  const std::size_t C = ds_.num_classes;
  Batch b;
  b.num_classes = C;
  b.targets.assign(n * C, 0.f);
  auto provider = [this](std::int32_t id) -> const Image& { return ds_.images.at(static_cast<std::size_t>(id)); };
  for (std::size_t s = 0; s < n; ++s) {
    const auto id = order_[cursor_ + s];
    const auto desc = online_descriptor(policy_, ds_.images[id], ds_.size(), seed_, epoch_, id);
    b.images.push_back(replay(desc, ds_.images[id], provider, out_.height, out_.width));
    const double keep = primary_weight(desc, out_);
    float* row = b.targets.data() + s * C;
    row[ds_.labels[id]] += static_cast<float>(keep);
    if (desc.mixing_applied()) row[ds_.labels[static_cast<std::size_t>(desc.partner())]] += static_cast<float>(1.0 - keep);
    for (std::size_t c = 0; c < C; ++c) {
      row[c] = static_cast<float>((1.0 - smoothing_) * row[c] + smoothing_ / static_cast<double>(C));
    }
    b.labels.push_back(ds_.labels[id]);
    b.ids.push_back(id);
  }
  cursor_ += n;
  return b;
}

// ---- OnlineKdSource ---------------------------------------------------------

OnlineKdSource::OnlineKdSource(const LabeledDataset& ds, AugmentationPolicy policy, ImageDims out,
                               const Teacher& teacher, KdMode mode, std::uint64_t seed)
    : ds_(ds), policy_(policy), out_(out), teacher_(teacher), mode_(mode), seed_(seed) {
  policy_.check();
  if (teacher_.num_classes() != ds_.num_classes) throw ValidationError("teacher and dataset class counts differ");
  reset(0);
}

void OnlineKdSource::reset(std::size_t epoch) {
  epoch_ = epoch;
  order_ = shuffled_order(ds_.size(), seed_, epoch);
  cursor_ = 0;
}

std::optional<Batch> OnlineKdSource::next_batch(std::size_t batch_size) {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t n = std::min(batch_size, order_.size() - cursor_);
  const auto tdims = teacher_.input_dims();
  Batch b;
  b.num_classes = ds_.num_classes;
  std::vector<Image> teacher_inputs;
  teacher_inputs.reserve(n);
  auto provider = [this](std::int32_t id) -> const Image& { return ds_.images.at(static_cast<std::size_t>(id)); };
  for (std::size_t s = 0; s < n; ++s) {
    const auto id = order_[cursor_ + s];
    const auto& src = ds_.images[id];
    const auto desc = online_descriptor(policy_, src, ds_.size(), seed_, epoch_, id);
    b.images.push_back(replay(desc, src, provider, out_.height, out_.width));
    if (mode_ == KdMode::Imitation) {
      teacher_inputs.push_back(tdims == out_ ? b.images.back() : replay(desc, src, provider, tdims.height, tdims.width));
    } else {
      teacher_inputs.push_back(resize_full(src, tdims));
    }
    b.labels.push_back(ds_.labels[id]);
    b.ids.push_back(id);
  }
  const auto probs = teacher_.predict(teacher_inputs);
  b.targets = probs.values;
  cursor_ += n;
  return b;
}

// ---- History ----------------------------------------------------------------

double TrainHistory::mean_step_seconds() const {
  if (step_seconds.empty()) return 0.0;
  double s = 0.0;
  for (double v : step_seconds) s += v;
  return s / static_cast<double>(step_seconds.size());
}

double TrainHistory::median_step_seconds() const {
  if (step_seconds.empty()) return 0.0;
  auto v = step_seconds;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

void TrainHistory::write_csv(std::ostream& out) const {
  out << "epoch,loss,val_acc,ece\n";
  for (const auto& e : epochs) out << e.epoch << ',' << e.train_loss << ',' << e.val_acc << ',' << e.val_ece << '\n';
}

void TrainHistory::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  write_csv(out);
}

// ---- train ------------------------------------------------------------------

TrainHistory train(nn::Model& model, DataSource& data, const TrainConfig& cfg, const LabeledDataset* val,
                   std::ostream* log) {
  cfg.check();
  if (data.num_classes() != model.spec().num_classes) throw ValidationError("data and model class counts differ");
  TrainHistory hist;
  const std::size_t steps_per_epoch = (data.samples_per_epoch() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = cfg.epochs * steps_per_epoch;
  const std::size_t C = model.spec().num_classes;
  nn::SgdMomentum opt(cfg.momentum, cfg.effective_weight_decay());
  const auto params = model.params();
  const auto calls_before = teacher_batch_calls();
  using clock = std::chrono::steady_clock;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto epoch_start = clock::now();
    data.reset(epoch);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    EpochRecord rec;
    rec.epoch = epoch + 1;
    while (true) {
      const auto t0 = clock::now();
      auto batch = data.next_batch(cfg.batch_size);
      if (!batch) break;
      const nn::Tensor x = nn::images_to_tensor(batch->images);
      const auto trace = model.forward_trace(x);
      const nn::Tensor& logits = trace.back();
      const auto loss = is_distillation(cfg.objective) ? nn::kl_divergence(logits.data, batch->targets, C)
                                                       : nn::soft_cross_entropy(logits.data, batch->targets, C);
      if (!std::isfinite(loss.value)) {
        throw std::runtime_error("non-finite loss at step " + std::to_string(hist.steps) + " (epoch " +
                                 std::to_string(epoch + 1) + ")");
      }
      model.zero_grad();
      nn::Tensor dlogits(logits.n, logits.c, 1, 1);
      dlogits.data = loss.grad;
      model.backward(trace, dlogits);
      opt.step(params, cosine_lr(cfg.base_lr, hist.steps, total_steps));
      loss_sum += loss.value * static_cast<double>(batch->size());
      loss_count += batch->size();
      ++hist.steps;
      ++rec.steps;
      hist.step_seconds.push_back(std::chrono::duration<double>(clock::now() - t0).count());
    }
    rec.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    if (val && !val->empty() && (cfg.eval_every_epoch || epoch + 1 == cfg.epochs)) {
      const auto probs = predict_dataset(model, *val);
      rec.val_acc = accuracy(probs, val->labels);
      rec.val_ece = ece(probs, val->labels);
    }
    rec.seconds = std::chrono::duration<double>(clock::now() - epoch_start).count();
    if (log) {
      *log << objective_name(cfg.objective) << " epoch " << rec.epoch << "/" << cfg.epochs << " loss " << rec.train_loss
           << " val_acc " << rec.val_acc << " ece " << rec.val_ece << " (" << rec.seconds << " s)\n";
    }
    hist.epochs.push_back(rec);
  }
  hist.teacher_calls = teacher_batch_calls() - calls_before;
  return hist;
}

// ---- evaluation ---------------------------------------------------------------

ProbMatrix predict_dataset(const nn::Model& model, const LabeledDataset& ds, std::size_t batch_size) {
  const auto dims = model.spec().input;
  ProbMatrix out(ds.size(), model.spec().num_classes);
  std::vector<Image> buf;
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    const std::size_t end = std::min(ds.size(), start + batch_size);
    buf.clear();
    for (std::size_t i = start; i < end; ++i) buf.push_back(resize_full(ds.images[i], dims));
    const auto p = model.predict_probs(nn::images_to_tensor(buf));
    std::copy(p.values.begin(), p.values.end(), out.values.begin() + static_cast<std::ptrdiff_t>(start * out.cols));
  }
  return out;
}

std::size_t argmax(std::span<const float> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

double accuracy(const ProbMatrix& probs, std::span<const std::uint16_t> labels) {
  if (probs.rows != labels.size()) throw ValidationError("accuracy: row/label count mismatch");
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < probs.rows; ++i) hits += argmax(probs.row(i)) == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double evaluate(const nn::Model& model, const LabeledDataset& ds) {
  if (ds.empty()) throw ValidationError("evaluate: empty dataset");
  return accuracy(predict_dataset(model, ds), ds.labels);
}

double ece(std::span<const double> confidences, std::span<const std::uint8_t> correct, std::size_t bins) {
  if (confidences.empty()) throw ValidationError("ece: empty input");
  if (confidences.size() != correct.size()) throw ValidationError("ece: size mismatch");
  if (bins == 0) throw ValidationError("ece: bins must be positive");
  std::vector<double> conf_sum(bins, 0.0), hit_sum(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = confidences[i];
    if (!(c > 0.0 && c <= 1.0)) throw ValidationError("ece: confidence outside (0, 1]");
    const auto b = std::min(bins - 1, static_cast<std::size_t>(std::max(0.0, std::ceil(c * static_cast<double>(bins)) - 1.0)));
    conf_sum[b] += c;
    hit_sum[b] += correct[i] ? 1.0 : 0.0;
    ++count[b];
  }
  double total = 0.0;
  const double n = static_cast<double>(confidences.size());
  for (std::size_t b = 0; b < bins; ++b) {
    if (count[b] == 0) continue;
    const double nb = static_cast<double>(count[b]);
    total += (nb / n) * std::abs(hit_sum[b] / nb - conf_sum[b] / nb);
  }
  return total;
}

double ece(const ProbMatrix& probs, std::span<const std::uint16_t> labels, std::size_t bins) {
  std::vector<double> conf(probs.rows);
  std::vector<std::uint8_t> hit(probs.rows);
  for (std::size_t i = 0; i < probs.rows; ++i) {
    const auto row = probs.row(i);
    const auto k = argmax(row);
    conf[i] = std::clamp(static_cast<double>(row[k]), 1e-12, 1.0);
    hit[i] = k == labels[i];
  }
  return ece(conf, hit, bins);
}

}  // namespace dr
