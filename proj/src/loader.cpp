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

#include "dr/loader.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>
#include <thread>

#include "dr/errors.hpp"

namespace dr {
namespace {

constexpr std::uint64_t kPlanTag = 0x91A2;
constexpr std::uint64_t kOrderTag = 0x0DE5;

std::pair<double, double> preset_window(std::string_view name) {
  if (name == "easy") return {0.0, 10.0};
  if (name == "all") return {0.0, 100.0};
  if (name == "hard") return {90.0, 100.0};
  throw ValidationError("unknown curriculum window '" + std::string(name) + "' (easy, all, hard)");
}

std::vector<float> to_float_row(const SparseProbs& sp, std::size_t num_classes) {
  const auto dense = densify(sp, num_classes);
  return std::vector<float>(dense.begin(), dense.end());
}

}  // namespace

CurriculumSchedule CurriculumSchedule::preset(std::string_view name, double total_epochs) {
  const auto arrow = name.find("->");
  if (arrow == std::string_view::npos) throw ValidationError("curriculum preset must look like 'easy->all'");
  const auto [a0, b0] = preset_window(name.substr(0, arrow));
  const auto [a1, b1] = preset_window(name.substr(arrow + 2));
  CurriculumSchedule s{a0, b0, a1, b1, total_epochs};
  s.check();
  return s;
}

void CurriculumSchedule::check() const {
  for (auto [a, b] : {std::pair{a0, b0}, std::pair{a1, b1}}) {
    if (!(a >= 0.0 && a < b && b <= 100.0)) throw ValidationError("curriculum windows need 0 <= a < b <= 100");
  }
  if (!(total_epochs >= 0.0)) throw ValidationError("curriculum total epochs must be >= 0");
}

Window window_at(const CurriculumSchedule& s, double epoch) {
  if (s.total_epochs <= 0.0) return {s.a1, s.b1};
  const double t = std::clamp(epoch, 0.0, s.total_epochs);
  const double ramp = (1.0 - std::cos(std::numbers::pi * t / s.total_epochs)) / 2.0;
  Window w{s.a0 + (s.a1 - s.a0) * ramp, s.b0 + (s.b1 - s.b0) * ramp};
  if (t == s.total_epochs) w = {s.a1, s.b1};
  if (w.b - w.a < 1.0) {
    w.b = std::min(100.0, w.a + 1.0);
    w.a = w.b - 1.0;
  }
  return w;
}

std::pair<std::size_t, std::size_t> window_indices(const Window& w, std::size_t n) {
  if (n == 0) throw ValidationError("window over an empty group");
  const double N = static_cast<double>(n);
  // Small epsilon keeps exact products such as 90 * 100 / 100 from rounding up.
  auto lo = static_cast<std::size_t>(std::max(0.0, std::ceil(w.a * N / 100.0 - 1e-9)));
  auto hi = static_cast<std::size_t>(std::max(0.0, std::floor(w.b * N / 100.0 + 1e-9)));
  lo = std::min(lo, n - 1);
  hi = std::min(hi, n);
  if (hi <= lo) hi = lo + 1;
  return {lo, hi};
}

std::vector<std::uint32_t> epoch_plan(const ReinforcementStore& store, const std::optional<CurriculumSchedule>& sched,
                                      std::size_t epoch, std::uint64_t seed) {
  const bool pairs = store.header().double_mix();
  const std::size_t slots = pairs ? store.samples_per_image() / 2 : store.samples_per_image();
  const Window w = sched ? window_at(*sched, static_cast<double>(epoch)) : Window{};
  const auto [lo, hi] = window_indices(w, slots);
  const double ideal_hi = std::floor(w.b * static_cast<double>(slots) / 100.0 + 1e-9);
  if (static_cast<double>(hi) > ideal_hi) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true)) {
      std::clog << "epoch_plan: window [" << w.a << ", " << w.b << "] holds no record of " << slots
                << "; widened to index " << lo << "\n";
    }
  }
  SeededRng rng(seed, derive_stream(epoch, kPlanTag));
  std::vector<std::uint32_t> plan(store.num_images());
  for (auto& p : plan) {
    const auto slot = lo + rng.below(hi - lo);
    p = static_cast<std::uint32_t>(pairs ? 2 * slot : slot);
  }
  return plan;
}

// ---- MixLibrary -------------------------------------------------------------

MixLibrary MixLibrary::build(const LabeledDataset& ds, const ReinforcementStore& store, std::size_t size,
                             ImageDims out, std::uint64_t seed) {
  if (size == 0 || size > ds.size()) throw ValidationError("mix library size must be in [1, dataset size]");
  if (store.num_images() != ds.size()) throw ValidationError("store and dataset sizes differ");
  std::vector<std::int32_t> all(ds.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::int32_t>(i);
  SeededRng rng(seed, derive_stream(0x11B, size));
  for (std::size_t i = 0; i < size; ++i) std::swap(all[i], all[i + rng.below(all.size() - i)]);
  MixLibrary lib;
  lib.ids_.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(size));
  std::sort(lib.ids_.begin(), lib.ids_.end());
  for (auto id : lib.ids_) {
    const auto desc = store.record(static_cast<std::size_t>(id), 0).desc;
    lib.images_.push_back(replay_base(desc, ds.images[static_cast<std::size_t>(id)], out.height, out.width));
  }
  return lib;
}

std::int32_t MixLibrary::nearest(std::int32_t id, std::size_t dataset_size) const {
  if (ids_.empty()) throw ValidationError("mix library is empty");
  const auto n = static_cast<std::int64_t>(dataset_size);
  auto dist = [&](std::int32_t a) {
    const std::int64_t d = std::llabs(static_cast<std::int64_t>(a) - id) % n;
    return std::min(d, n - d);
  };
  auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  // Candidates: the neighbours around id, plus both ends for wrap-around.
  std::int32_t best = ids_.front();
  for (auto cand : {it == ids_.end() ? ids_.back() : *it, it == ids_.begin() ? ids_.back() : *(it - 1),
                    ids_.front(), ids_.back()}) {
    if (dist(cand) < dist(best) || (dist(cand) == dist(best) && cand < best)) best = cand;
  }
  return best;
}

const Image& MixLibrary::image_for(std::int32_t id, std::size_t dataset_size) const {
  const auto member = nearest(id, dataset_size);
  const auto it = std::lower_bound(ids_.begin(), ids_.end(), member);
  return images_[static_cast<std::size_t>(it - ids_.begin())];
}

// ---- double mix -------------------------------------------------------------

std::vector<Image> double_mix_expand(const std::vector<DoubleMixInput>& pairs) {
  std::vector<Image> out;
  out.reserve(2 * pairs.size());
  for (const auto& p : pairs) {
    auto a = p.first;
    auto b = p.second;
    if (!a.mixing_applied() || a.partner() != b.partner() || a.mixup_applied() != b.mixup_applied()) {
      throw ValidationError("double-mix input lacks a second set of mixing coefficients");
    }
    b.mixup_lambda = a.mixup_lambda;
    b.cutmix_box = a.cutmix_box;
    if (!(a == b)) throw ValidationError("double-mix descriptors differ outside their mixing coefficients");
    for (const auto* d : {&p.first, &p.second}) {
      Image img = apply_mix(*d, p.primary, p.partner);
      apply_erase(*d, img);
      out.push_back(std::move(img));
    }
  }
  return out;
}

// ---- ReinforcedLoader -------------------------------------------------------

ReinforcedLoader::ReinforcedLoader(const LabeledDataset& ds, const ReinforcementStore& store, LoaderOptions opts)
    : ds_(ds), store_(store), opts_(std::move(opts)) {
  if (store_.num_images() != ds_.size()) {
    throw ValidationError("store holds " + std::to_string(store_.num_images()) + " images, dataset " +
                          std::to_string(ds_.size()));
  }
  if (store_.header().num_classes != ds_.num_classes) throw ValidationError("store and dataset class counts differ");
  if (opts_.schedule) opts_.schedule->check();
  if (opts_.workers == 0) opts_.workers = 1;
  reset(0);
}

void ReinforcedLoader::reset(std::size_t epoch) {
  epoch_ = epoch;
  plan_ = epoch_plan(store_, opts_.schedule, epoch, opts_.seed);
  order_.resize(ds_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<std::uint32_t>(i);
  SeededRng rng(opts_.seed, derive_stream(epoch, kOrderTag));
  for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng.below(i)]);
  cursor_ = 0;
}

std::size_t ReinforcedLoader::samples_per_epoch() const {
  return store_.header().double_mix() ? 2 * ds_.size() : ds_.size();
}

const Image& ReinforcedLoader::partner_image(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= ds_.size()) {
    throw ValidationError("unresolved mix partner " + std::to_string(id) + " (dataset has " +
                          std::to_string(ds_.size()) + " images)");
  }
  partner_loads_.fetch_add(1, std::memory_order_relaxed);
  return ds_.images[static_cast<std::size_t>(id)];
}

void ReinforcedLoader::load_single(std::uint32_t id, Image& out_img, std::vector<float>& row) const {
  const auto rec = store_.record(id, plan_[id]);
  const auto& src = ds_.images[id];
  const auto& d = rec.desc;
  if (opts_.library && d.mixing_applied()) {
    Image img = replay_base(d, src, opts_.out.height, opts_.out.width);
    img = apply_mix(d, img, opts_.library->image_for(d.partner(), ds_.size()));
    apply_erase(d, img);
    out_img = std::move(img);
  } else {
    try {
      out_img = replay(d, src, [this](std::int32_t pid) -> const Image& { return partner_image(pid); },
                       opts_.out.height, opts_.out.width);
    } catch (const ValidationError& e) {
      throw ValidationError("image " + std::to_string(id) + ": " + e.what());
    }
  }
  row = to_float_row(rec.probs, num_classes());
}

void ReinforcedLoader::load_pair(std::uint32_t id, Image& out_a, Image& out_b, std::vector<float>& row_a,
                                 std::vector<float>& row_b) const {
  const auto first = store_.record(id, plan_[id]);
  const auto second = store_.record(id, plan_[id] + 1);
  std::vector<DoubleMixInput> in(1);
  in[0].primary = replay_base(first.desc, ds_.images[id], opts_.out.height, opts_.out.width);
  in[0].first = first.desc;
  in[0].second = second.desc;
  if (first.desc.mixing_applied()) {
    in[0].partner = opts_.library ? opts_.library->image_for(first.desc.partner(), ds_.size())
                                  : replay_base(first.desc, partner_image(first.desc.partner()), opts_.out.height,
                                                opts_.out.width);
  }
  auto outs = double_mix_expand(in);
  out_a = std::move(outs[0]);
  out_b = std::move(outs[1]);
  row_a = to_float_row(first.probs, num_classes());
  row_b = to_float_row(second.probs, num_classes());
}

std::optional<Batch> ReinforcedLoader::next_batch(std::size_t batch_size) {
  if (batch_size == 0) throw ValidationError("batch size must be positive");
  if (cursor_ >= order_.size()) return std::nullopt;
  const bool pairs = store_.header().double_mix();
  const std::size_t per_image = pairs ? 2 : 1;
  const std::size_t images = std::min(order_.size() - cursor_, std::max<std::size_t>(1, batch_size / per_image));
  const std::size_t C = num_classes();

  Batch b;
  b.num_classes = C;
  b.images.resize(images * per_image);
  b.targets.assign(images * per_image * C, 0.f);
  b.labels.resize(images * per_image);
  b.ids.resize(images * per_image);

  auto fill = [&](std::size_t begin, std::size_t end) {
    std::vector<float> ra, rb;
    for (std::size_t s = begin; s < end; ++s) {
      const auto id = order_[cursor_ + s];
      const std::size_t slot = s * per_image;
      if (pairs) {
        load_pair(id, b.images[slot], b.images[slot + 1], ra, rb);
        std::copy(rb.begin(), rb.end(), b.targets.begin() + static_cast<std::ptrdiff_t>((slot + 1) * C));
      } else {
        load_single(id, b.images[slot], ra);
      }
      std::copy(ra.begin(), ra.end(), b.targets.begin() + static_cast<std::ptrdiff_t>(slot * C));
      for (std::size_t k = 0; k < per_image; ++k) {
        b.labels[slot + k] = ds_.labels[id];
        b.ids[slot + k] = id;
      }
    }
  };

  // Workers fill pre-assigned slots, so the batch is identical for any worker count.
  const std::size_t workers = std::min(opts_.workers, images);
  if (workers <= 1) {
    fill(0, images);
  } else {
    std::vector<std::jthread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (images + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          fill(std::min(images, w * chunk), std::min(images, (w + 1) * chunk));
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    pool.clear();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  cursor_ += images;
  samples_emitted_ += b.size();
  return b;
}

}  // namespace dr
