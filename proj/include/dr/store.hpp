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
#include <span>
#include <string>
#include <vector>

#include "dr/augment.hpp"
#include "dr/teacher.hpp"

namespace dr {

// Header flag (beyond the three variant blocks): records of a group come in
// adjacent double-mix pairs that share everything but the mixing coefficients.
inline constexpr std::uint16_t kDoubleMixPairs = 1u << 3;
inline constexpr std::uint16_t kKnownFlags = kRrc | kRaRe | kMixing | kDoubleMixPairs;
inline constexpr std::uint16_t kStoreVersion = 1;
// Index value of unused probability slots when a teacher row has fewer than
// top_k nonzero entries.
inline constexpr std::uint32_t kPadIndex = 0xFFFFFFFFu;

// DRST header, little-endian:
//   "DRST" | u16 version | u16 flags | u32 num_classes | u8 top_k |
//   u16 samples_per_image | u64 num_images | u32 payload crc32 |
//   u16 id length | teacher id (UTF-8)
struct StoreHeader {
  std::uint16_t version = kStoreVersion;
  std::uint16_t flags = kRrc;
  std::uint32_t num_classes = 0;
  std::uint8_t top_k = 10;
  std::uint16_t samples_per_image = 1;
  std::uint64_t num_images = 0;
  std::uint32_t payload_crc32 = 0;
  std::string teacher_id;

  std::size_t encoded_size() const { return header_size(teacher_id.size()); }
  static constexpr std::size_t header_size(std::size_t id_length) { return 29 + id_length; }
  std::uint16_t variant_bits() const { return flags & (kRrc | kRaRe | kMixing); }
  bool double_mix() const { return (flags & kDoubleMixPairs) != 0; }
  void check() const;

  friend bool operator==(const StoreHeader&, const StoreHeader&) = default;
};

struct ReinforcementRecord {
  SparseProbs probs;
  AugmentationDescriptor desc;
  friend bool operator==(const ReinforcementRecord&, const ReinforcementRecord&) = default;
};

// Byte sizes of the record blocks.
inline constexpr std::size_t kProbEntryBytes = 8;   // u32 index + f32 prob
inline constexpr std::size_t kRrcBlockBytes = 17;   // 4 x f32 crop + u8 flip
inline constexpr std::size_t kRaReBlockBytes = 32;  // 2 x (i32 op, f32 magnitude) + 4 x f32 erase
inline constexpr std::size_t kMixBlockBytes = 28;   // (i32, f32 lambda) + (i32, 4 x f32 box)

std::size_t record_size(std::size_t top_k, std::uint16_t flags);
// Header plus num_images * samples_per_image records. Throws on overflow.
std::uint64_t total_size(std::uint64_t num_images, std::uint64_t samples_per_image, std::size_t top_k,
                         std::uint16_t flags, std::size_t teacher_id_length = 0);

void encode_record(const ReinforcementRecord& rec, std::size_t top_k, std::uint16_t flags,
                   std::vector<std::uint8_t>& out);
ReinforcementRecord decode_record(std::span<const std::uint8_t> bytes, std::size_t top_k, std::uint16_t flags);

// Immutable in-memory store: header plus fixed-size records grouped by image.
// Concurrent readers are safe.
class ReinforcementStore {
 public:
  ReinforcementStore() = default;
  // Parses and checks the header; when verify_checksum is set a payload that does
  // not match the header crc32 is rejected.
  static ReinforcementStore from_bytes(std::vector<std::uint8_t> bytes, bool verify_checksum = true);

  const StoreHeader& header() const { return header_; }
  std::size_t num_images() const { return static_cast<std::size_t>(header_.num_images); }
  std::size_t samples_per_image() const { return header_.samples_per_image; }
  std::size_t record_bytes() const { return record_bytes_; }

  ReinforcementRecord record(std::size_t image, std::size_t index) const;
  std::span<const std::uint8_t> raw_record(std::size_t image, std::size_t index) const;
  std::uint64_t record_offset(std::size_t image, std::size_t index) const;
  // Stored max probability of a record without a full decode.
  float confidence(std::size_t image, std::size_t index) const;

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  void save(const std::string& path) const;

 private:
  StoreHeader header_;
  std::size_t header_bytes_ = 0;
  std::size_t record_bytes_ = 0;
  std::vector<std::uint8_t> bytes_;
};

// Single writer; groups must be appended in image order.
class StoreBuilder {
 public:
  explicit StoreBuilder(StoreHeader header);

  // Throws ValidationError naming the image id if the group has the wrong size
  // or is not sorted by descending confidence.
  void append_group(std::span<const ReinforcementRecord> group);
  std::size_t groups_written() const { return groups_; }
  std::uint64_t bytes_written() const { return payload_.size() + header_.encoded_size(); }
  ReinforcementStore finish() &&;

 private:
  StoreHeader header_;
  std::size_t record_bytes_;
  std::size_t groups_ = 0;
  std::vector<std::uint8_t> payload_;
};

// Ordering rule of one image group: plain groups are non-increasing in
// confidence; double-mix groups are ordered by the first record of each pair and
// each pair's first record is at least as confident as its second.
bool group_is_sorted(std::span<const float> confidences, bool double_mix);

ReinforcementStore read_store(const std::string& path, bool verify_checksum = true);
void write_store(const std::string& path, const StoreHeader& header,
                 const std::vector<std::vector<ReinforcementRecord>>& groups);

struct Violation {
  std::size_t image = 0;
  std::size_t index = 0;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;  // at most max_violations
  std::size_t total = 0;              // all violations found
  bool ok() const { return total == 0; }
};

// Checks every record against the type invariants: class indices, probability
// ranges, boxes inside [0,1], at most one mix partner, partner ids in range and
// confidence ordering.
ValidationReport validate(const ReinforcementStore& store, std::size_t max_violations = 100);

}  // namespace dr
