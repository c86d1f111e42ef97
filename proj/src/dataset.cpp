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

#include "dr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "dr/bytes.hpp"
#include "dr/errors.hpp"

namespace dr {

Image::Image(std::uint16_t h, std::uint16_t w, std::uint8_t c, std::uint8_t fill)
    : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

void Image::check() const {
  if (channels != 1 && channels != 3) {
    throw ValidationError("image channels must be 1 or 3, got " + std::to_string(channels));
  }
  if (data.size() != size()) {
    throw ValidationError("image data length " + std::to_string(data.size()) + " != " +
                          std::to_string(size()));
  }
}

void LabeledDataset::check() const {
  if (images.size() != labels.size()) {
    throw ValidationError("dataset has " + std::to_string(images.size()) + " images but " +
                          std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < images.size(); ++i) {
    images[i].check();
    if (!images[i].same_dims(images.front())) {
      throw ValidationError("image " + std::to_string(i) + " dims differ from image 0");
    }
    if (labels[i] >= num_classes) {
      throw ValidationError("label " + std::to_string(labels[i]) + " of image " + std::to_string(i) +
                            " >= num_classes " + std::to_string(num_classes));
    }
  }
}

std::vector<std::uint8_t> encode_packed(const LabeledDataset& ds) {
  ds.check();
  const std::uint16_t h = ds.empty() ? 0 : ds.images[0].height;
  const std::uint16_t w = ds.empty() ? 0 : ds.images[0].width;
  const std::uint8_t c = ds.empty() ? 1 : ds.images[0].channels;
  std::vector<std::uint8_t> out;
  out.reserve(kPackedHeaderSize + ds.size() * (2 + static_cast<std::size_t>(h) * w * c));
  bytes::Writer wr(out);
  wr.raw(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>("DIMG"), 4));
  wr.u8(kPackedVersion);
  wr.u32(static_cast<std::uint32_t>(ds.size()));
  wr.u16(h);
  wr.u16(w);
  wr.u8(c);
  wr.u16(ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    wr.u16(ds.labels[i]);
    wr.raw(ds.images[i].data);
  }
  return out;
}

LabeledDataset decode_packed(const std::vector<std::uint8_t>& buf) {
  bytes::Reader rd(buf);
  if (buf.size() < 4 || !std::equal(buf.begin(), buf.begin() + 4, "DIMG")) {
    throw DecodeError("bad magic: expected DIMG");
  }
  rd.skip(4);
  const auto version = rd.u8();
  if (version != kPackedVersion) throw DecodeError("unsupported DIMG version " + std::to_string(version));
  const auto count = rd.u32();
  const auto h = rd.u16();
  const auto w = rd.u16();
  const auto c = rd.u8();
  LabeledDataset ds;
  ds.num_classes = rd.u16();
  if (count > 0 && c != 1 && c != 3) throw DecodeError("bad channel count " + std::to_string(c));
  const std::size_t pixels = static_cast<std::size_t>(h) * w * c;
  ds.images.reserve(count);
  ds.labels.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    if (rd.remaining() < 2 + pixels) {
      throw DecodeError("truncated file at record " + std::to_string(i) + " of " + std::to_string(count));
    }
    const auto label = rd.u16();
    if (label >= ds.num_classes) {
      throw DecodeError("record " + std::to_string(i) + ": label " + std::to_string(label) +
                        " >= num_classes " + std::to_string(ds.num_classes));
    }
    Image img;
    img.height = h;
    img.width = w;
    img.channels = c;
    auto px = rd.raw(pixels);
    img.data.assign(px.begin(), px.end());
    ds.images.push_back(std::move(img));
    ds.labels.push_back(label);
  }
  return ds;
}

LabeledDataset load_packed(const std::string& path) { return decode_packed(bytes::read_file(path)); }

std::size_t write_packed(const LabeledDataset& ds, const std::string& path) {
  const auto buf = encode_packed(ds);
  bytes::write_file(path, buf);
  return buf.size();
}

std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, double train_fraction,
                                                double val_fraction, SeededRng& rng) {
  auto in_range = [](double f) { return f >= 0.0 && f <= 1.0 && std::isfinite(f); };
  if (!in_range(train_fraction) || !in_range(val_fraction) ||
      std::abs(train_fraction + val_fraction - 1.0) > 1e-9) {
    throw ValidationError("split fractions must lie in [0,1] and sum to 1");
  }
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Fisher-Yates with the project RNG; std::shuffle's draw pattern is library-defined.
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(ds.size())));
  std::pair<LabeledDataset, LabeledDataset> out;
  out.first.num_classes = out.second.num_classes = ds.num_classes;
  for (std::size_t k = 0; k < order.size(); ++k) {
    auto& dst = k < n_train ? out.first : out.second;
    dst.images.push_back(ds.images[order[k]]);
    dst.labels.push_back(ds.labels[order[k]]);
  }
  return out;
}

namespace bytes {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  in.seekg(0, std::ios::end);
  const auto n = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::uint8_t> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
  if (!in) throw IoError("short read on " + path);
  return buf;
}

void write_file(const std::string& path, std::span<const std::uint8_t> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed on " + path);
}

}  // namespace bytes
}  // namespace dr
