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

#include "dr/store.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>

#include "dr/bytes.hpp"
#include "dr/errors.hpp"

namespace dr {
namespace {

constexpr char kMagic[4] = {'D', 'R', 'S', 'T'};

std::uint32_t crc32_of(std::span<const std::uint8_t> data) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for payloads over 4 GiB.
  std::size_t pos = 0;
  while (pos < data.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(data.size() - pos, 1u << 30));
    crc = crc32(crc, data.data() + pos, n);
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

void encode_header(const StoreHeader& h, std::vector<std::uint8_t>& out) {
  bytes::Writer w(out);
  w.raw(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(kMagic), 4));
  w.u16(h.version);
  w.u16(h.flags);
  w.u32(h.num_classes);
  w.u8(h.top_k);
  w.u16(h.samples_per_image);
  w.u64(h.num_images);
  w.u32(h.payload_crc32);
  w.str16(h.teacher_id);
}

void put_box(bytes::Writer& w, const Box& b) {
  w.f32(b.x);
  w.f32(b.y);
  w.f32(b.w);
  w.f32(b.h);
}

Box get_box(bytes::Reader& r) {
  Box b;
  b.x = r.f32();
  b.y = r.f32();
  b.w = r.f32();
  b.h = r.f32();
  return b;
}

}  // namespace

void StoreHeader::check() const {
  if (version != kStoreVersion) throw DecodeError("unsupported DRST version " + std::to_string(version));
  if (!(flags & kRrc)) throw DecodeError("store flags must include RRC");
  if (flags & ~kKnownFlags) throw DecodeError("unknown store flag bits " + std::to_string(flags));
  if (top_k == 0 || top_k > num_classes) {
    throw DecodeError("top_k " + std::to_string(top_k) + " must be in [1, num_classes=" + std::to_string(num_classes) + "]");
  }
  if (samples_per_image == 0) throw DecodeError("samples_per_image must be >= 1");
  if (double_mix() && (samples_per_image % 2 != 0 || !(flags & kMixing))) {
    throw DecodeError("double-mix stores need Mixing and an even samples_per_image");
  }
  if (teacher_id.size() > 0xFFFF) throw DecodeError("teacher id too long");
}

std::size_t record_size(std::size_t top_k, std::uint16_t flags) {
  return kProbEntryBytes * top_k + kRrcBlockBytes + ((flags & kRaRe) ? kRaReBlockBytes : 0) +
         ((flags & kMixing) ? kMixBlockBytes : 0);
}

std::uint64_t total_size(std::uint64_t num_images, std::uint64_t samples_per_image, std::size_t top_k,
                         std::uint16_t flags, std::size_t teacher_id_length) {
  std::uint64_t records = 0;
  std::uint64_t payload = 0;
  std::uint64_t total = 0;
  if (__builtin_mul_overflow(num_images, samples_per_image, &records) ||
      __builtin_mul_overflow(records, static_cast<std::uint64_t>(record_size(top_k, flags)), &payload) ||
      __builtin_add_overflow(payload, static_cast<std::uint64_t>(StoreHeader::header_size(teacher_id_length)), &total)) {
    throw ValidationError("store size overflows 64 bits");
  }
  return total;
}

void encode_record(const ReinforcementRecord& rec, std::size_t top_k, std::uint16_t flags,
                   std::vector<std::uint8_t>& out) {
  if (rec.probs.size() > top_k) throw ValidationError("record has more than top_k probabilities");
  bytes::Writer w(out);
  for (std::size_t i = 0; i < top_k; ++i) {
    if (i < rec.probs.size()) {
      w.u32(rec.probs.entries[i].index);
      w.f32(rec.probs.entries[i].prob);
    } else {
      w.u32(kPadIndex);
      w.f32(0.f);
    }
  }
  const auto& d = rec.desc;
  put_box(w, d.crop);
  w.u8(d.flip ? 1 : 0);
  if (flags & kRaRe) {
    for (const auto& slot : d.ra) {
      w.i32(slot.op);
      w.f32(slot.magnitude);
    }
    put_box(w, d.erase);
  }
  if (flags & kMixing) {
    w.i32(d.mixup_partner);
    w.f32(d.mixup_lambda);
    w.i32(d.cutmix_partner);
    put_box(w, d.cutmix_box);
  }
}

ReinforcementRecord decode_record(std::span<const std::uint8_t> data, std::size_t top_k, std::uint16_t flags) {
  bytes::Reader r(data);
  ReinforcementRecord rec;
  for (std::size_t i = 0; i < top_k; ++i) {
    const auto index = r.u32();
    const auto prob = r.f32();
    if (index != kPadIndex) rec.probs.entries.push_back({index, prob});
  }
  auto& d = rec.desc;
  d.flags = flags & (kRrc | kRaRe | kMixing);
  d.crop = get_box(r);
  d.flip = r.u8() != 0;
  if (flags & kRaRe) {
    for (auto& slot : d.ra) {
      slot.op = r.i32();
      slot.magnitude = r.f32();
    }
    d.erase = get_box(r);
  }
  if (flags & kMixing) {
    d.mixup_partner = r.i32();
    d.mixup_lambda = r.f32();
    d.cutmix_partner = r.i32();
    d.cutmix_box = get_box(r);
  }
  return rec;
}

ReinforcementStore ReinforcementStore::from_bytes(std::vector<std::uint8_t> data, bool verify_checksum) {
  ReinforcementStore s;
  bytes::Reader r(data);
  if (data.size() < 4 || !std::equal(data.begin(), data.begin() + 4, kMagic)) {
    throw DecodeError("bad magic at offset 0: expected DRST");
  }
  r.skip(4);
  auto& h = s.header_;
  h.version = r.u16();
  h.flags = r.u16();
  h.num_classes = r.u32();
  h.top_k = r.u8();
  h.samples_per_image = r.u16();
  h.num_images = r.u64();
  h.payload_crc32 = r.u32();
  h.teacher_id = r.str16();
  h.check();
  s.header_bytes_ = r.position();
  s.record_bytes_ = record_size(h.top_k, h.flags);
  const std::uint64_t expect = total_size(h.num_images, h.samples_per_image, h.top_k, h.flags, h.teacher_id.size());
  if (data.size() < expect) {
    throw DecodeError("truncated store: " + std::to_string(data.size()) + " bytes, header implies " +
                      std::to_string(expect) + " (truncation at offset " + std::to_string(data.size()) + ")");
  }
  if (data.size() > expect) {
    throw DecodeError("trailing bytes after offset " + std::to_string(expect));
  }
  if (verify_checksum) {
    const auto crc = crc32_of(std::span<const std::uint8_t>(data).subspan(s.header_bytes_));
    if (crc != h.payload_crc32) throw DecodeError("payload checksum mismatch over offsets " + std::to_string(s.header_bytes_) + ".." +
                        std::to_string(data.size()) + ": store is corrupt");
  }
  s.bytes_ = std::move(data);
  return s;
}

std::uint64_t ReinforcementStore::record_offset(std::size_t image, std::size_t index) const {
  if (image >= num_images() || index >= samples_per_image()) {
    throw ValidationError("record (" + std::to_string(image) + ", " + std::to_string(index) + ") out of range");
  }
  return header_bytes_ + (static_cast<std::uint64_t>(image) * samples_per_image() + index) * record_bytes_;
}

std::span<const std::uint8_t> ReinforcementStore::raw_record(std::size_t image, std::size_t index) const {
  return std::span<const std::uint8_t>(bytes_).subspan(record_offset(image, index), record_bytes_);
}

ReinforcementRecord ReinforcementStore::record(std::size_t image, std::size_t index) const {
  return decode_record(raw_record(image, index), header_.top_k, header_.flags);
}

float ReinforcementStore::confidence(std::size_t image, std::size_t index) const {
  bytes::Reader r(raw_record(image, index));
  r.skip(4);
  return r.f32();
}

void ReinforcementStore::save(const std::string& path) const { bytes::write_file(path, bytes_); }

StoreBuilder::StoreBuilder(StoreHeader header)
    : header_(std::move(header)), record_bytes_(record_size(header_.top_k, header_.flags)) {
  header_.version = kStoreVersion;
  header_.check();
  payload_.reserve(static_cast<std::size_t>(header_.num_images) * header_.samples_per_image * record_bytes_);
}

bool group_is_sorted(std::span<const float> conf, bool double_mix) {
  if (!double_mix) {
    for (std::size_t i = 1; i < conf.size(); ++i) {
      if (conf[i] > conf[i - 1]) return false;
    }
    return true;
  }
  for (std::size_t i = 0; i + 1 < conf.size(); i += 2) {
    if (conf[i + 1] > conf[i]) return false;
    if (i >= 2 && conf[i] > conf[i - 2]) return false;
  }
  return true;
}

void StoreBuilder::append_group(std::span<const ReinforcementRecord> group) {
  const auto image = groups_;
  if (image >= header_.num_images) throw ValidationError("more groups than num_images");
  if (group.size() != header_.samples_per_image) {
    throw ValidationError("image " + std::to_string(image) + ": group has " + std::to_string(group.size()) +
                          " records, expected " + std::to_string(header_.samples_per_image));
  }
  std::vector<float> conf;
  conf.reserve(group.size());
  for (const auto& rec : group) conf.push_back(rec.probs.confidence());
  if (!group_is_sorted(conf, header_.double_mix())) {
    throw ValidationError("integrity error: image " + std::to_string(image) + " group is not confidence-sorted");
  }
  for (const auto& rec : group) encode_record(rec, header_.top_k, header_.flags, payload_);
  ++groups_;
}

ReinforcementStore StoreBuilder::finish() && {
  if (groups_ != header_.num_images) {
    throw ValidationError("store has " + std::to_string(groups_) + " groups, header declares " +
                          std::to_string(header_.num_images));
  }
  header_.payload_crc32 = crc32_of(payload_);
  std::vector<std::uint8_t> out;
  out.reserve(header_.encoded_size() + payload_.size());
  encode_header(header_, out);
  out.insert(out.end(), payload_.begin(), payload_.end());
  payload_.clear();
  payload_.shrink_to_fit();
  return ReinforcementStore::from_bytes(std::move(out), false);
}

ReinforcementStore read_store(const std::string& path, bool verify_checksum) {
  return ReinforcementStore::from_bytes(bytes::read_file(path), verify_checksum);
}

void write_store(const std::string& path, const StoreHeader& header,
                 const std::vector<std::vector<ReinforcementRecord>>& groups) {
  StoreBuilder b(header);
  for (const auto& g : groups) b.append_group(g);
  std::move(b).finish().save(path);
}

ValidationReport validate(const ReinforcementStore& store, std::size_t max_violations) {
  ValidationReport rep;
  auto add = [&](std::size_t image, std::size_t index, std::string msg) {
    ++rep.total;
    if (rep.violations.size() < max_violations) rep.violations.push_back({image, index, std::move(msg)});
  };
  const auto& h = store.header();
  const std::size_t n = store.samples_per_image();
  std::vector<float> conf(n);
  for (std::size_t img = 0; img < store.num_images(); ++img) {
    for (std::size_t k = 0; k < n; ++k) {
      const auto raw = store.raw_record(img, k);
      // Padding must be a tail: check raw slots before decode drops them.
      bytes::Reader r(raw);
      bool seen_pad = false;
      for (std::size_t s = 0; s < h.top_k; ++s) {
        const auto index = r.u32();
        r.skip(4);
        if (index == kPadIndex) {
          seen_pad = true;
        } else if (seen_pad) {
          add(img, k, "probability slot " + std::to_string(s) + " follows padding");
        }
      }
      const auto rec = store.record(img, k);
      conf[k] = rec.probs.confidence();
      if (rec.probs.empty()) add(img, k, "no stored probabilities");
      double mass = 0.0;
      for (std::size_t e = 0; e < rec.probs.size(); ++e) {
        const auto& entry = rec.probs.entries[e];
        if (entry.index >= h.num_classes) add(img, k, "class index " + std::to_string(entry.index) + " >= num_classes");
        if (!(entry.prob > 0.f && entry.prob <= 1.f)) add(img, k, "probability outside (0,1]");
        if (e > 0) {
          const auto& prev = rec.probs.entries[e - 1];
          if (entry.prob > prev.prob || (entry.prob == prev.prob && entry.index <= prev.index)) {
            add(img, k, "probabilities not sorted");
          }
        }
        mass += entry.prob;
      }
      // Teacher rows are stochastic to 1e-5.
      if (mass > 1.0 + 1e-5) add(img, k, "probability mass exceeds 1");
      if (auto v = rec.desc.violation(); !v.empty()) add(img, k, v);
      if (rec.desc.mixing_applied() && static_cast<std::uint64_t>(rec.desc.partner()) >= h.num_images) {
        add(img, k, "mix partner " + std::to_string(rec.desc.partner()) + " out of range");
      }
    }
    if (!group_is_sorted(conf, h.double_mix())) add(img, 0, "group not sorted by descending confidence");
    if (h.double_mix()) {
      for (std::size_t k = 0; k + 1 < n; k += 2) {
        auto a = store.record(img, k).desc;
        auto b = store.record(img, k + 1).desc;
        b.mixup_lambda = a.mixup_lambda;
        b.cutmix_box = a.cutmix_box;
        if (!(a == b)) add(img, k, "double-mix pair differs outside mixing coefficients");
      }
    }
  }
  return rep;
}

}  // namespace dr
