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

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dr/rng.hpp"

namespace dr {

// Row-major interleaved 8-bit image (HWC).
struct Image {
  std::uint16_t height = 0;
  std::uint16_t width = 0;
  std::uint8_t channels = 1;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(std::uint16_t h, std::uint16_t w, std::uint8_t c, std::uint8_t fill = 0);

  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const { return pixel_count() * channels; }
  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) {
    return data[(y * width + x) * channels + c];
  }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return data[(y * width + x) * channels + c];
  }
  bool same_dims(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  // Throws ValidationError if data length or channel count is inconsistent.
  void check() const;

  friend bool operator==(const Image&, const Image&) = default;
};

struct LabeledDataset {
  std::vector<Image> images;
  std::vector<std::uint16_t> labels;
  std::uint16_t num_classes = 0;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
  // Checks uniform dims, label range and equal lengths.
  void check() const;

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

// DIMG packed format: 16-byte header ("DIMG", u8 version=1, u32 count,
// u16 H, u16 W, u8 C, u16 num_classes) followed by count records of
// (u16 label, H*W*C raw pixels). Little-endian.
inline constexpr std::uint8_t kPackedVersion = 1;
inline constexpr std::size_t kPackedHeaderSize = 16;

std::vector<std::uint8_t> encode_packed(const LabeledDataset& ds);
LabeledDataset decode_packed(const std::vector<std::uint8_t>& bytes);

LabeledDataset load_packed(const std::string& path);
// Returns the number of bytes written.
std::size_t write_packed(const LabeledDataset& ds, const std::string& path);

// Shuffles with rng and cuts at floor(train_fraction * n); the remainder goes
// to the second split.
std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, double train_fraction,
                                                double val_fraction, SeededRng& rng);

}  // namespace dr
