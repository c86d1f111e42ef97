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
#include <filesystem>

#include "dr/bytes.hpp"
#include "dr/errors.hpp"
#include "dr/store.hpp"
#include "test_util.hpp"

namespace dr {
namespace {

constexpr double kGiB = 1024.0 * 1024.0 * 1024.0;
constexpr std::uint64_t kImageNetTrain = 1281167;

TEST(RecordSize, TableRows) {
  EXPECT_EQ(10 * kProbEntryBytes, 80u);  // 10 x (2 x 4)
  EXPECT_EQ(kRrcBlockBytes, 4u * 4 + 1);
  EXPECT_EQ(kRaReBlockBytes, 2u * 2 * 4 + 4 * 4);
  EXPECT_EQ(kMixBlockBytes, 2u * 4 + (1 + 4) * 4);
  EXPECT_EQ(record_size(10, kRrc), 97u);
  EXPECT_EQ(record_size(10, kRrc | kRaRe), 129u);
  EXPECT_EQ(record_size(5, kRrc), 57u);
  EXPECT_EQ(record_size(10, kRrc | kMixing), 125u);
  EXPECT_EQ(record_size(10, kRrc | kRaRe | kMixing), 157u);
}

TEST(RecordSize, EncodedLengthMatchesFormula) {
  for (auto v : {Variant::Rrc, Variant::RrcMixing, Variant::RrcRaRe, Variant::RrcMixRaRe}) {
    const auto flags = variant_flags(v);
    for (std::size_t k : {1u, 5u, 10u}) {
      ReinforcementRecord rec;
      rec.desc.flags = flags;
      rec.probs.entries = {{0, 1.f}};
      std::vector<std::uint8_t> out;
      encode_record(rec, k, flags, out);
      const std::size_t expect = 8 * k + 17 + 32 * ((flags & kRaRe) ? 1 : 0) + 28 * ((flags & kMixing) ? 1 : 0);
      EXPECT_EQ(out.size(), expect) << variant_name(v) << " k=" << k;
      EXPECT_EQ(record_size(k, flags), expect);
    }
  }
}

TEST(TotalSize, ImageNetTable) {
  // Per-row figures in GiB: probabilities, RRC, RA/RE, Mixing.
  const double probs = 400.0 * kImageNetTrain * 80 / kGiB;
  const double rrc = 400.0 * kImageNetTrain * 17 / kGiB;
  const double rare = 400.0 * kImageNetTrain * 32 / kGiB;
  const double mix = 400.0 * kImageNetTrain * 28 / kGiB;
  EXPECT_NEAR(probs, 38.0, 1.0);
  EXPECT_NEAR(rrc, 8.0, 1.0);
  EXPECT_NEAR(rare, 15.0, 1.0);
  EXPECT_NEAR(mix, 13.0, 1.0);
  const auto rrc_total = total_size(kImageNetTrain, 400, 10, kRrc);
  EXPECT_NEAR(static_cast<double>(rrc_total) / kGiB, 46.3, 0.05);
  const auto plus = total_size(kImageNetTrain, 400, 10, kRrc | kRaRe);
  EXPECT_EQ(plus, StoreHeader::header_size(0) + kImageNetTrain * 400 * 129);
  EXPECT_NEAR(static_cast<double>(plus) / kGiB, 61.0, 1.0);
  EXPECT_EQ(total_size(0, 400, 10, kRrc, 5), StoreHeader::header_size(5));
}

TEST(TotalSize, OverflowGuarded) {
  EXPECT_THROW(total_size(~0ull / 2, 400, 10, kRrc), ValidationError);
}

struct FuzzStore {
  StoreHeader header;
  std::vector<std::vector<ReinforcementRecord>> groups;
};

SparseProbs random_probs(std::size_t classes, std::size_t k, SeededRng& rng) {
  std::vector<float> row(classes, 0.f);
  double total = 0.0;
  std::vector<double> raw(classes);
  for (auto& v : raw) total += (v = rng.bernoulli(0.2) ? 0.0 : rng.uniform() + 1e-3);
  if (total == 0.0) {
    raw[0] = 1.0;
    total = 1.0;
  }
  for (std::size_t j = 0; j < classes; ++j) row[j] = static_cast<float>(raw[j] / total);
  return sparsify(row, k);
}

FuzzStore random_store(SeededRng& rng) {
  FuzzStore fs;
  auto& h = fs.header;
  const auto variant = static_cast<Variant>(rng.below(4));
  h.flags = variant_flags(variant);
  h.num_classes = static_cast<std::uint32_t>(1 + rng.below(12));
  h.top_k = static_cast<std::uint8_t>(1 + rng.below(h.num_classes));
  h.samples_per_image = static_cast<std::uint16_t>(1 + rng.below(5));
  h.num_images = rng.below(6);
  if ((h.flags & kMixing) && h.num_images < 2) h.num_images = 2;
  h.teacher_id = std::string(rng.below(12), 't');
  auto policy = AugmentationPolicy::for_variant(variant);
  for (std::size_t i = 0; i < h.num_images; ++i) {
    std::vector<ReinforcementRecord> g;
    for (std::size_t r = 0; r < h.samples_per_image; ++r) {
      ReinforcementRecord rec;
      rec.desc = sample_descriptor(policy, 8, 8, h.num_images, static_cast<std::int64_t>(i), rng);
      rec.probs = random_probs(h.num_classes, h.top_k, rng);
      g.push_back(rec);
    }
    std::stable_sort(g.begin(), g.end(),
                     [](const auto& a, const auto& b) { return a.probs.confidence() > b.probs.confidence(); });
    fs.groups.push_back(std::move(g));
  }
  return fs;
}

ReinforcementStore build(const FuzzStore& fs) {
  StoreBuilder b(fs.header);
  for (const auto& g : fs.groups) b.append_group(g);
  return std::move(b).finish();
}

TEST(Store, FuzzRoundtripBitExact) {
  SeededRng rng(1, 1);
  for (int t = 0; t < 1000; ++t) {
    const auto fs = random_store(rng);
    const auto store = build(fs);
    ASSERT_EQ(store.bytes().size(), total_size(fs.header.num_images, fs.header.samples_per_image,
                                               fs.header.top_k, fs.header.flags, fs.header.teacher_id.size()));
    const auto back = ReinforcementStore::from_bytes(store.bytes());
    ASSERT_EQ(back.bytes(), store.bytes()) << t;
    auto h = back.header();
    h.payload_crc32 = fs.header.payload_crc32;
    ASSERT_EQ(h, fs.header) << t;
    for (std::size_t i = 0; i < fs.groups.size(); ++i) {
      for (std::size_t r = 0; r < fs.groups[i].size(); ++r) ASSERT_EQ(back.record(i, r), fs.groups[i][r]) << t;
    }
    ASSERT_TRUE(validate(back).ok()) << t << ": " << validate(back).violations.front().message;
  }
}

TEST(Store, FileRoundtrip) {
  SeededRng rng(2, 2);
  auto fs = random_store(rng);
  while (fs.header.num_images == 0) fs = random_store(rng);
  const auto path = (std::filesystem::temp_directory_path() / "dr_test_store.drst").string();
  write_store(path, fs.header, fs.groups);
  const auto store = read_store(path);
  EXPECT_EQ(store.bytes(), build(fs).bytes());
  std::filesystem::remove(path);
}

TEST(Store, SeekEqualsSequentialScan) {
  SeededRng rng(3, 3);
  FuzzStore fs;
  do fs = random_store(rng);
  while (fs.header.num_images < 4 || fs.header.samples_per_image < 2);
  fs.header.samples_per_image = 8;
  fs = [&] {
    // Rebuild with 8 records per image.
    FuzzStore big = fs;
    auto policy = AugmentationPolicy::for_variant(Variant::RrcRaRe);
    big.header.flags = variant_flags(Variant::RrcRaRe);
    big.groups.clear();
    for (std::size_t i = 0; i < big.header.num_images; ++i) {
      std::vector<ReinforcementRecord> g;
      for (int r = 0; r < 8; ++r) {
        ReinforcementRecord rec{random_probs(big.header.num_classes, big.header.top_k, rng),
                                sample_descriptor(policy, 8, 8, 10, 0, rng)};
        g.push_back(rec);
      }
      std::stable_sort(g.begin(), g.end(),
                       [](const auto& a, const auto& b) { return a.probs.confidence() > b.probs.confidence(); });
      big.groups.push_back(g);
    }
    return big;
  }();
  const auto store = build(fs);
  // Scan oracle: walk the payload record by record from the end of the header.
  bytes::Reader r(store.bytes());
  r.skip(store.header().encoded_size());
  const auto rec_bytes = record_size(fs.header.top_k, fs.header.flags);
  ReinforcementRecord scanned;
  for (std::size_t i = 0; i <= 3; ++i) {
    for (std::size_t k = 0; k < 8; ++k) {
      const auto pos = r.position();
      const auto raw = r.raw(rec_bytes);
      if (i == 3 && k == 7) {
        scanned = decode_record(raw, fs.header.top_k, fs.header.flags);
        EXPECT_EQ(store.record_offset(3, 7), pos);
      }
    }
  }
  EXPECT_EQ(store.record(3, 7), scanned);
  EXPECT_EQ(store.record(3, 7), fs.groups[3][7]);
  EXPECT_FLOAT_EQ(store.confidence(3, 7), fs.groups[3][7].probs.confidence());
  EXPECT_THROW(store.record(fs.header.num_images, 0), ValidationError);
}

ReinforcementStore small_store(std::uint64_t seed) {
  SeededRng rng(seed, 0);
  FuzzStore fs;
  do fs = random_store(rng);
  while (fs.header.num_images < 3 || fs.header.samples_per_image < 3);
  return build(fs);
}

TEST(Store, TamperDetectedByChecksum) {
  const auto store = small_store(4);
  auto bytes = store.bytes();
  bytes[store.header().encoded_size() + store.record_bytes() + 3] ^= 0x40;
  EXPECT_THROW(ReinforcementStore::from_bytes(bytes), DecodeError);
  EXPECT_NO_THROW(ReinforcementStore::from_bytes(bytes, false));
}

TEST(Store, HeaderErrors) {
  const auto store = small_store(5);
  auto bad = store.bytes();
  bad[0] = 'X';
  EXPECT_THROW(ReinforcementStore::from_bytes(bad), DecodeError);
  bad = store.bytes();
  bad[4] = 9;  // version
  EXPECT_THROW(ReinforcementStore::from_bytes(bad), DecodeError);
  bad = store.bytes();
  bad.pop_back();
  try {
    ReinforcementStore::from_bytes(bad);
    FAIL();
  } catch (const DecodeError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }
  bad = store.bytes();
  bad.push_back(0);
  EXPECT_THROW(ReinforcementStore::from_bytes(bad), DecodeError);
  EXPECT_THROW(ReinforcementStore::from_bytes(std::vector<std::uint8_t>(10, 0)), DecodeError);
}

TEST(Builder, RejectsUnsortedGroupNamingImage) {
  StoreHeader h;
  h.num_classes = 3;
  h.top_k = 2;
  h.samples_per_image = 2;
  h.num_images = 3;
  StoreBuilder b(h);
  ReinforcementRecord hi{{{{0, 0.9f}}}, {}}, lo{{{{1, 0.4f}}}, {}};
  b.append_group(std::vector{hi, lo});
  try {
    b.append_group(std::vector{lo, hi});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("image 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(b.append_group(std::vector{hi}), ValidationError);
}

TEST(Builder, ShortStoreRejectedAtFinish) {
  StoreHeader h;
  h.num_classes = 2;
  h.top_k = 1;
  h.num_images = 2;
  StoreBuilder b(h);
  b.append_group(std::vector{ReinforcementRecord{{{{0, 1.f}}}, {}}});
  EXPECT_THROW(std::move(b).finish(), ValidationError);
}

TEST(Builder, BytesWrittenTracksTotal) {
  SeededRng rng(6, 6);
  FuzzStore fs;
  do fs = random_store(rng);
  while (fs.header.num_images < 2);
  StoreBuilder b(fs.header);
  EXPECT_EQ(b.bytes_written(), fs.header.encoded_size());
  for (const auto& g : fs.groups) b.append_group(g);
  EXPECT_EQ(b.bytes_written(), total_size(fs.header.num_images, fs.header.samples_per_image, fs.header.top_k,
                                          fs.header.flags, fs.header.teacher_id.size()));
}

TEST(Validate, InjectedCropViolation) {
  StoreHeader h;
  h.num_classes = 4;
  h.top_k = 2;
  h.samples_per_image = 2;
  h.num_images = 2;
  ReinforcementRecord good{{{{0, 0.7f}, {1, 0.2f}}}, {}};
  auto bad = good;
  bad.probs.entries[0].prob = 0.6f;
  bad.desc.crop = {0.5f, 0.f, 0.7f, 1.f};  // x + w = 1.2
  StoreBuilder b(h);
  b.append_group(std::vector{good, good});
  b.append_group(std::vector{good, bad});
  const auto report = validate(std::move(b).finish());
  ASSERT_EQ(report.total, 1u);
  EXPECT_EQ(report.violations[0].image, 1u);
  EXPECT_EQ(report.violations[0].index, 1u);
}

TEST(Validate, ShuffledGroupOrdering) {
  const auto store = small_store(7);
  ASSERT_TRUE(validate(store).ok());
  // Move the least confident record to the front of group 1.
  auto bytes = store.bytes();
  const auto n = store.samples_per_image();
  const auto rb = store.record_bytes();
  auto first = bytes.begin() + static_cast<std::ptrdiff_t>(store.record_offset(1, 0));
  std::rotate(first, first + static_cast<std::ptrdiff_t>((n - 1) * rb), first + static_cast<std::ptrdiff_t>(n * rb));
  const auto shuffled = ReinforcementStore::from_bytes(bytes, false);
  const float c0 = shuffled.confidence(1, 0), c1 = shuffled.confidence(1, 1);
  const auto report = validate(shuffled);
  if (c0 < c1) {
    ASSERT_FALSE(report.ok());
    EXPECT_EQ(report.violations[0].image, 1u);
  } else {
    EXPECT_TRUE(report.ok());  // all records of the group tie
  }
}

TEST(Validate, SortednessOracle) {
  SeededRng rng(8, 8);
  for (int t = 0; t < 500; ++t) {
    std::vector<float> conf(1 + rng.below(8));
    for (auto& c : conf) c = static_cast<float>(rng.below(4)) / 4.f;
    bool sorted = true;
    for (std::size_t i = 1; i < conf.size(); ++i) sorted = sorted && conf[i - 1] >= conf[i];
    ASSERT_EQ(group_is_sorted(conf, false), sorted);
  }
  const std::vector<float> pairs{0.9f, 0.2f, 0.8f, 0.85f};
  EXPECT_FALSE(group_is_sorted(pairs, true));  // second pair's first < its second
  const std::vector<float> ok_pairs{0.9f, 0.2f, 0.8f, 0.7f};
  EXPECT_TRUE(group_is_sorted(ok_pairs, true));
  EXPECT_FALSE(group_is_sorted(ok_pairs, false));
}

TEST(Validate, ReportCapsAtMax) {
  StoreHeader h;
  h.num_classes = 4;
  h.top_k = 1;
  h.samples_per_image = 1;
  h.num_images = 150;
  ReinforcementRecord bad{{{{0, 0.5f}}}, {}};
  bad.desc.crop = {0.5f, 0.5f, 0.7f, 0.2f};
  StoreBuilder b(h);
  for (int i = 0; i < 150; ++i) b.append_group(std::vector{bad});
  const auto report = validate(std::move(b).finish());
  EXPECT_EQ(report.total, 150u);
  EXPECT_EQ(report.violations.size(), 100u);
}

}  // namespace
}  // namespace dr
