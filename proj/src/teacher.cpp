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

#include "dr/teacher.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

#include "dr/errors.hpp"

namespace dr {
namespace {

std::atomic<std::uint64_t> g_batch_calls{0};
std::atomic<std::uint64_t> g_image_evals{0};
thread_local int t_predict_depth = 0;

struct DepthGuard {
  DepthGuard() { ++t_predict_depth; }
  ~DepthGuard() { --t_predict_depth; }
};

template <typename T>
DistributionMetrics metrics_of(std::span<const T> row, std::optional<std::size_t> label) {
  DistributionMetrics m;
  for (T p : row) {
    m.confidence = std::max(m.confidence, static_cast<double>(p));
    if (p > 0) m.entropy -= static_cast<double>(p) * std::log(static_cast<double>(p));
  }
  m.entropy = std::max(m.entropy, 0.0);
  if (label) {
    if (*label >= row.size()) throw ValidationError("label " + std::to_string(*label) + " out of range");
    const double py = row[*label];
    if (py > 0) {
      m.loss = -std::log(py);
    } else {
      m.loss = std::numeric_limits<double>::infinity();
      m.loss_infinite = true;
    }
  }
  return m;
}

}  // namespace

ProbMatrix Teacher::predict(std::span<const Image> batch) const {
  const auto want = input_dims();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (dims_of(batch[i]) != want) {
      throw ValidationError("teacher '" + identity() + "': batch image " + std::to_string(i) +
                            " is " + std::to_string(batch[i].height) + "x" + std::to_string(batch[i].width) +
                            "x" + std::to_string(batch[i].channels) + ", expected " +
                            std::to_string(want.height) + "x" + std::to_string(want.width) + "x" +
                            std::to_string(want.channels));
    }
  }
  if (t_predict_depth == 0) {
    g_batch_calls.fetch_add(1, std::memory_order_relaxed);
    g_image_evals.fetch_add(batch.size(), std::memory_order_relaxed);
  }
  DepthGuard guard;
  return predict_batch(batch);
}

std::uint64_t teacher_batch_calls() { return g_batch_calls.load(); }
std::uint64_t teacher_image_evals() { return g_image_evals.load(); }
void reset_teacher_counters() {
  g_batch_calls = 0;
  g_image_evals = 0;
}

EnsembleTeacher::EnsembleTeacher(std::vector<std::shared_ptr<const Teacher>> members)
    : members_(std::move(members)) {
  if (members_.empty()) throw ValidationError("ensemble needs at least one member");
  for (const auto& m : members_) {
    if (!m) throw ValidationError("ensemble member is null");
    if (m->num_classes() != members_.front()->num_classes() || m->input_dims() != members_.front()->input_dims()) {
      throw ValidationError("ensemble members disagree on classes or input dims");
    }
  }
}

std::size_t EnsembleTeacher::num_classes() const { return members_.front()->num_classes(); }
ImageDims EnsembleTeacher::input_dims() const { return members_.front()->input_dims(); }

std::string EnsembleTeacher::identity() const {
  std::string id = "ensemble(";
  for (std::size_t i = 0; i < members_.size(); ++i) {
    if (i) id += ",";
    id += members_[i]->identity();
  }
  return id + ")";
}

ProbMatrix EnsembleTeacher::predict_batch(std::span<const Image> batch) const {
  ProbMatrix out(batch.size(), num_classes());
  std::vector<double> acc(out.values.size(), 0.0);
  for (const auto& m : members_) {
    const auto p = m->predict(batch);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += p.values[i];
  }
  const double inv = 1.0 / static_cast<double>(members_.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out.values[i] = static_cast<float>(acc[i] * inv);
  return out;
}

SparseProbs sparsify(std::span<const float> row, std::size_t k) {
  if (k == 0) throw ValidationError("sparsify: k must be positive");
  if (k > row.size()) {
    throw ValidationError("sparsify: k=" + std::to_string(k) + " exceeds " + std::to_string(row.size()) + " classes");
  }
  std::vector<std::uint32_t> idx(row.size());
  std::iota(idx.begin(), idx.end(), 0u);
  auto before = [&](std::uint32_t a, std::uint32_t b) { return row[a] > row[b] || (row[a] == row[b] && a < b); };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), before);
  SparseProbs sp;
  sp.entries.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (!(row[idx[i]] > 0.f)) break;
    sp.entries.push_back({idx[i], row[idx[i]]});
  }
  return sp;
}

std::vector<double> densify(const SparseProbs& sp, std::size_t num_classes) {
  if (sp.empty()) throw ValidationError("densify: empty support");
  double mass = 0.0;
  for (const auto& e : sp.entries) {
    if (e.index >= num_classes) throw ValidationError("densify: class index " + std::to_string(e.index) + " out of range");
    mass += e.prob;
  }
  if (!(mass > 0.0)) throw ValidationError("densify: support has no mass");
  std::vector<double> row(num_classes, 0.0);
  for (const auto& e : sp.entries) row[e.index] = e.prob / mass;
  return row;
}

DistributionMetrics distribution_metrics(std::span<const float> row, std::optional<std::size_t> label) {
  return metrics_of(row, label);
}

DistributionMetrics distribution_metrics(std::span<const double> row, std::optional<std::size_t> label) {
  return metrics_of(row, label);
}

DistributionMetrics distribution_metrics(const SparseProbs& sp, std::optional<std::size_t> label) {
  DistributionMetrics m;
  for (const auto& e : sp.entries) {
    m.confidence = std::max(m.confidence, static_cast<double>(e.prob));
    if (e.prob > 0.f) m.entropy -= static_cast<double>(e.prob) * std::log(static_cast<double>(e.prob));
  }
  m.entropy = std::max(m.entropy, 0.0);
  if (label) {
    const auto it = std::find_if(sp.entries.begin(), sp.entries.end(), [&](const SparseEntry& e) { return e.index == *label; });
    if (it != sp.entries.end() && it->prob > 0.f) {
      m.loss = -std::log(static_cast<double>(it->prob));
    } else {
      m.loss = std::numeric_limits<double>::infinity();
      m.loss_infinite = true;
    }
  }
  return m;
}

}  // namespace dr
