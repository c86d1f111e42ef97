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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "dr/errors.hpp"
#include "dr/loader.hpp"
#include "dr/reinforcer.hpp"
#include "test_util.hpp"

namespace dr {
namespace {

using testing::HashTeacher;

constexpr ImageDims kOut{8, 8, 1};

ReinforcementStore make_store(const LabeledDataset& ds, Variant v, std::size_t n, bool double_mix = false,
                              double mix_p = 0.5) {
  HashTeacher t(ds.num_classes, kOut);
  ReinforceJob job;
  job.dataset = &ds;
  job.teacher = &t;
  job.policy = AugmentationPolicy::for_variant(v);
  job.policy.crop_scale = {0.3, 1.0};
  job.policy.mix_p = mix_p;
  job.samples_per_image = n;
  job.top_k = 3;
  job.seed = 4;
  job.double_mix = double_mix;
  return reinforce(job);
}

// Header-only store for plan tests; the records are never decoded.
ReinforcementStore plain_store(std::size_t images, std::size_t n) {
  StoreHeader h;
  h.num_classes = 2;
  h.top_k = 1;
  h.samples_per_image = static_cast<std::uint16_t>(n);
  h.num_images = images;
  StoreBuilder b(h);
  std::vector<ReinforcementRecord> g(n, ReinforcementRecord{{{{0, 1.f}}}, {}});
  for (std::size_t i = 0; i < images; ++i) b.append_group(g);
  return std::move(b).finish();
}

TEST(Window, EasyToAllEndpointsAndMidpoint) {
  const auto s = CurriculumSchedule::preset("easy->all", 100);
  const auto w0 = window_at(s, 0), w1 = window_at(s, 100), wm = window_at(s, 50);
  EXPECT_NEAR(w0.a, 0.0, 1e-9);
  EXPECT_NEAR(w0.b, 10.0, 1e-9);
  EXPECT_NEAR(w1.a, 0.0, 1e-9);
  EXPECT_NEAR(w1.b, 100.0, 1e-9);
  EXPECT_NEAR(wm.b, 10.0 + 90.0 * 0.5, 1e-9);
}

TEST(Window, AllPresetsEndpointFidelityAndFeasibility) {
  const std::map<std::string, std::pair<double, double>> windows{{"easy", {0, 10}}, {"all", {0, 100}}, {"hard", {90, 100}}};
  for (const auto& [from, wa] : windows) {
    for (const auto& [to, wb] : windows) {
      const double T = 37;
      const auto s = CurriculumSchedule::preset(from + "->" + to, T);
      const auto w0 = window_at(s, 0), wT = window_at(s, T);
      EXPECT_NEAR(w0.a, wa.first, 1e-9);
      EXPECT_NEAR(w0.b, wa.second, 1e-9);
      EXPECT_NEAR(wT.a, wb.first, 1e-9);
      EXPECT_NEAR(wT.b, wb.second, 1e-9);
      for (int k = 0; k <= 370; ++k) {
        const double t = k / 10.0;
        const auto w = window_at(s, t);
        ASSERT_TRUE(0.0 <= w.a && w.a < w.b && w.b <= 100.0) << from << "->" << to << " t=" << t;
        ASSERT_GE(w.b - w.a, 1.0 - 1e-12);
        // Interpolant oracle away from the clamp.
        const double r = (1 - std::cos(std::numbers::pi * t / T)) / 2;
        const double a = wa.first + (wb.first - wa.first) * r, b = wa.second + (wb.second - wa.second) * r;
        if (b - a >= 1.0) {
          ASSERT_NEAR(w.a, a, 1e-9);
          ASSERT_NEAR(w.b, b, 1e-9);
        }
        for (std::size_t n : {1u, 4u, 10u, 50u, 100u}) {
          const auto [lo, hi] = window_indices(w, n);
          ASSERT_LT(lo, hi);
          ASSERT_LE(hi, n);
        }
      }
    }
  }
}

TEST(Window, ZeroEpochsGivesEndWindow) {
  auto s = CurriculumSchedule::preset("hard->easy", 0);
  const auto w = window_at(s, 0);
  EXPECT_EQ(w.a, 0.0);
  EXPECT_EQ(w.b, 10.0);
}

TEST(Window, BadSchedules) {
  EXPECT_THROW(CurriculumSchedule::preset("easy", 10), ValidationError);
  EXPECT_THROW(CurriculumSchedule::preset("easy->medium", 10), ValidationError);
  CurriculumSchedule s{50, 40, 0, 100, 10};
  EXPECT_THROW(s.check(), ValidationError);
}

TEST(Window, IndexMapping) {
  EXPECT_EQ(window_indices({90, 100}, 100), (std::pair<std::size_t, std::size_t>{90, 100}));
  EXPECT_EQ(window_indices({0, 10}, 50), (std::pair<std::size_t, std::size_t>{0, 5}));
  EXPECT_EQ(window_indices({0, 100}, 1), (std::pair<std::size_t, std::size_t>{0, 1}));
  // [0, 10] of 4 records rounds to nothing; widened to one index.
  EXPECT_EQ(window_indices({0, 10}, 4), (std::pair<std::size_t, std::size_t>{0, 1}));
  EXPECT_EQ(window_indices({90, 100}, 4), (std::pair<std::size_t, std::size_t>{3, 4}));
}

TEST(EpochPlan, SingleRecordAlwaysZero) {
  const auto store = plain_store(50, 1);
  for (std::size_t e = 0; e < 5; ++e) {
    for (auto p : epoch_plan(store, std::nullopt, e, 3)) EXPECT_EQ(p, 0u);
  }
}

TEST(EpochPlan, UniformOverFullWindow) {
  const auto store = plain_store(1000, 4);
  std::vector<int> hits(4, 0);
  for (std::size_t e = 0; e < 100; ++e) {
    for (auto p : epoch_plan(store, std::nullopt, e, 11)) ++hits[p];
  }
  for (int h : hits) EXPECT_NEAR(h / 1e5, 0.25, 0.01);
}

TEST(EpochPlan, HardWindowContainment) {
  const auto store = plain_store(200, 100);
  CurriculumSchedule s{90, 100, 90, 100, 10};
  std::vector<int> hits(100, 0);
  for (std::size_t e = 0; e < 10; ++e) {
    for (auto p : epoch_plan(store, s, e, 1)) {
      ASSERT_GE(p, 90u);
      ASSERT_LT(p, 100u);
      ++hits[p];
    }
  }
  for (std::size_t i = 90; i < 100; ++i) EXPECT_GT(hits[i], 0);
}

TEST(EpochPlan, ReproducibleAndEpochDependent) {
  const auto store = plain_store(100, 10);
  EXPECT_EQ(epoch_plan(store, std::nullopt, 3, 5), epoch_plan(store, std::nullopt, 3, 5));
  EXPECT_NE(epoch_plan(store, std::nullopt, 3, 5), epoch_plan(store, std::nullopt, 4, 5));
}

TEST(Loader, SingleImageBatchIsReplayedRecord) {
  const auto ds = testing::random_dataset(1, 12, 12, 1, 4, 1);
  const auto store = make_store(ds, Variant::RrcRaRe, 5);
  ReinforcedLoader loader(ds, store, {kOut, std::nullopt, 2});
  const auto b = loader.next_batch(8);
  ASSERT_TRUE(b);
  ASSERT_EQ(b->size(), 1u);
  const auto rec = store.record(0, loader.plan()[0]);
  auto no_partner = [](std::int32_t) -> const Image& { throw ValidationError("no partner"); };
  EXPECT_EQ(b->images[0], replay(rec.desc, ds.images[0], no_partner, 8, 8));
  const auto dense = densify(rec.probs, 4);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_FLOAT_EQ(b->targets[j], static_cast<float>(dense[j]));
  EXPECT_EQ(b->labels[0], ds.labels[0]);
  EXPECT_FALSE(loader.next_batch(8));
}

TEST(Loader, CoverageTargetsAndZeroTeacherCalls) {
  const auto ds = testing::random_dataset(37, 12, 12, 1, 6, 2);
  const auto store = make_store(ds, Variant::RrcMixRaRe, 6);
  for (auto sched : {std::optional<CurriculumSchedule>{}, std::optional{CurriculumSchedule::preset("hard->all", 3)},
                     std::optional{CurriculumSchedule::preset("easy->easy", 3)}}) {
    ReinforcedLoader loader(ds, store, {kOut, sched, 9, 3});
    reset_teacher_counters();
    for (std::size_t e = 0; e < 3; ++e) {
      loader.reset(e);
      std::vector<std::uint32_t> ids;
      while (auto b = loader.next_batch(8)) {
        for (std::size_t s = 0; s < b->size(); ++s) {
          double sum = 0.0;
          for (std::size_t j = 0; j < 6; ++j) sum += b->targets[s * 6 + j];
          EXPECT_NEAR(sum, 1.0, 1e-6);
          EXPECT_EQ(b->labels[s], ds.labels[b->ids[s]]);
        }
        ids.insert(ids.end(), b->ids.begin(), b->ids.end());
      }
      std::sort(ids.begin(), ids.end());
      ASSERT_EQ(ids.size(), ds.size());
      for (std::size_t i = 0; i < ids.size(); ++i) ASSERT_EQ(ids[i], i);
    }
    EXPECT_EQ(teacher_batch_calls(), 0u);
    EXPECT_EQ(teacher_image_evals(), 0u);
  }
}

TEST(Loader, WorkerCountDoesNotChangeBatches) {
  const auto ds = testing::random_dataset(25, 12, 12, 1, 5, 3);
  const auto store = make_store(ds, Variant::RrcMixRaRe, 4);
  auto run = [&](std::size_t workers) {
    ReinforcedLoader loader(ds, store, {kOut, std::nullopt, 5, workers});
    std::uint64_t h = 1469598103934665603ull;
    while (auto b = loader.next_batch(7)) {
      for (const auto& img : b->images) h = testing::fnv1a(img.data, h);
      h = testing::fnv1a(std::span(reinterpret_cast<const std::uint8_t*>(b->targets.data()), b->targets.size() * 4), h);
    }
    return h;
  };
  const auto ref = run(1);
  EXPECT_EQ(run(2), ref);
  EXPECT_EQ(run(8), ref);
}

TEST(Loader, MismatchedStoreRejected) {
  const auto ds = testing::random_dataset(5, 12, 12, 1, 5, 4);
  const auto store = make_store(ds, Variant::Rrc, 2);
  const auto other = testing::random_dataset(6, 12, 12, 1, 5, 4);
  EXPECT_THROW(ReinforcedLoader(other, store, {}), ValidationError);
}

TEST(Loader, UnresolvedPartnerNamesIds) {
  auto ds = testing::random_dataset(4, 12, 12, 1, 3, 5);
  StoreHeader h;
  h.flags = variant_flags(Variant::RrcMixing);
  h.num_classes = 3;
  h.top_k = 1;
  h.num_images = 4;
  ReinforcementRecord rec{{{{0, 1.f}}}, {}};
  rec.desc.flags = h.flags;
  StoreBuilder b(h);
  for (int i = 0; i < 3; ++i) b.append_group(std::vector{rec});
  rec.desc.mixup_partner = 9;
  rec.desc.mixup_lambda = 0.5f;
  b.append_group(std::vector{rec});
  const auto store = std::move(b).finish();
  ReinforcedLoader loader(ds, store, {kOut});
  try {
    while (loader.next_batch(4)) {
    }
    FAIL();
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("image 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("9"), std::string::npos) << msg;
  }
}

TEST(DoubleMix, LambdaEndpoints) {
  SeededRng rng(1, 1);
  DoubleMixInput in;
  in.primary = testing::random_image(8, 8, 1, rng);
  in.partner = testing::random_image(8, 8, 1, rng);
  in.first.flags = variant_flags(Variant::RrcMixing);
  in.first.mixup_partner = 2;
  std::tie(in.first, in.second) = make_double_mix(in.first, 1.0f);
  in.first.mixup_lambda = 0.f;
  const auto out = double_mix_expand({in});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0], in.partner);
  EXPECT_EQ(out[1], in.primary);
}

TEST(DoubleMix, ConvexOracleFuzz) {
  SeededRng rng(2, 2);
  std::vector<DoubleMixInput> pairs;
  for (int t = 0; t < 200; ++t) {
    DoubleMixInput in;
    in.primary = testing::random_image(6, 5, 3, rng);
    in.partner = testing::random_image(6, 5, 3, rng);
    AugmentationDescriptor d;
    d.flags = variant_flags(Variant::RrcMixing);
    d.mixup_partner = 1;
    d.mixup_lambda = static_cast<float>(rng.uniform());
    std::tie(in.first, in.second) = make_double_mix(d, static_cast<float>(rng.uniform()));
    pairs.push_back(in);
  }
  const auto out = double_mix_expand(pairs);
  ASSERT_EQ(out.size(), 2 * pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    for (int k = 0; k < 2; ++k) {
      const double lam = (k == 0 ? pairs[p].first : pairs[p].second).mixup_lambda;
      const auto& img = out[2 * p + k];
      for (std::size_t i = 0; i < img.data.size(); ++i) {
        const double v = lam * pairs[p].primary.data[i] + (1 - lam) * pairs[p].partner.data[i];
        ASSERT_LE(std::abs(img.data[i] - v), 0.5 + 1e-9) << p << "/" << k;
      }
    }
  }
}

TEST(DoubleMix, RejectsMissingSecondCoefficients) {
  DoubleMixInput in;
  in.primary = in.partner = Image(4, 4, 1);
  EXPECT_THROW(double_mix_expand({in}), ValidationError);
  in.first.mixup_partner = 1;
  in.second.mixup_partner = 2;
  EXPECT_THROW(double_mix_expand({in}), ValidationError);
}

TEST(DoubleMix, HalvesPartnerLoads) {
  const auto ds = testing::random_dataset(30, 12, 12, 1, 5, 6);
  const auto single = make_store(ds, Variant::RrcMixing, 4, false, 1.0);
  const auto doubled = make_store(ds, Variant::RrcMixing, 4, true);
  ReinforcedLoader a(ds, single, {kOut}), b(ds, doubled, {kOut});
  while (a.next_batch(10)) {
  }
  while (b.next_batch(10)) {
  }
  EXPECT_EQ(a.samples_emitted(), 30u);
  EXPECT_EQ(b.samples_emitted(), 60u);
  const double per_a = static_cast<double>(a.partner_loads()) / static_cast<double>(a.samples_emitted());
  const double per_b = static_cast<double>(b.partner_loads()) / static_cast<double>(b.samples_emitted());
  EXPECT_DOUBLE_EQ(per_a, 1.0);
  EXPECT_DOUBLE_EQ(per_b, 0.5);
}

TEST(MixLibrary, NearestModular) {
  const auto ds = testing::random_dataset(20, 12, 12, 1, 5, 7);
  const auto store = make_store(ds, Variant::RrcMixing, 2);
  const auto lib = MixLibrary::build(ds, store, 4, kOut, 3);
  ASSERT_EQ(lib.size(), 4u);
  // Brute-force nearest by modular distance, ties to the smaller id.
  for (std::int32_t id = 0; id < 20; ++id) {
    std::int32_t best = -1;
    int bd = 1 << 30;
    for (auto m : lib.ids()) {
      const int d = std::min(std::abs(m - id), 20 - std::abs(m - id));
      if (d < bd || (d == bd && m < best)) bd = d, best = m;
    }
    EXPECT_EQ(lib.nearest(id, 20), best) << id;
  }
  EXPECT_THROW(MixLibrary::build(ds, store, 0, kOut, 3), ValidationError);
  EXPECT_THROW(MixLibrary::build(ds, store, 21, kOut, 3), ValidationError);
}

TEST(MixLibrary, NoBaseDatasetPartnerLoads) {
  const auto ds = testing::random_dataset(20, 12, 12, 1, 5, 8);
  const auto store = make_store(ds, Variant::RrcMixRaRe, 3, false, 1.0);
  const auto lib = MixLibrary::build(ds, store, 5, kOut, 2);
  LoaderOptions o{kOut};
  o.library = &lib;
  ReinforcedLoader loader(ds, store, o);
  std::size_t n = 0;
  while (auto b = loader.next_batch(6)) n += b->size();
  EXPECT_EQ(n, 20u);
  EXPECT_EQ(loader.partner_loads(), 0u);
}

}  // namespace
}  // namespace dr
