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

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <utility>

#include "dr/dataset.hpp"
#include "dr/rng.hpp"

namespace dr {

// Blocks of a reinforcement variant. Bit values match the store header flags.
enum VariantFlags : std::uint16_t {
  kRrc = 1u << 0,
  kRaRe = 1u << 1,
  kMixing = 1u << 2,
};

enum class Variant { Rrc, RrcMixing, RrcRaRe, RrcMixRaRe };

std::uint16_t variant_flags(Variant v);
std::string_view variant_name(Variant v);
// Accepts "rrc", "rrc+mixing", "rrc+ra/re", "rrc+m*+r*" (case-insensitive).
Variant parse_variant(std::string_view name);

// Axis-aligned box as fractions of the image, origin top-left.
struct Box {
  float x = 0.f;
  float y = 0.f;
  float w = 0.f;
  float h = 0.f;

  bool inside_unit() const;
  friend bool operator==(const Box&, const Box&) = default;
};

struct RaSlot {
  std::int32_t op = -1;  // -1: empty slot
  float magnitude = 0.f;
  friend bool operator==(const RaSlot&, const RaSlot&) = default;
};

// Everything needed to replay one augmentation chain bit-exactly.
struct AugmentationDescriptor {
  std::uint16_t flags = kRrc;
  Box crop{0.f, 0.f, 1.f, 1.f};
  bool flip = false;
  std::array<RaSlot, 2> ra{};
  Box erase{};  // w == 0: not applied
  std::int32_t mixup_partner = -1;
  float mixup_lambda = 0.f;  // weight of the primary image
  std::int32_t cutmix_partner = -1;
  Box cutmix_box{};

  bool erase_applied() const { return erase.w > 0.f; }
  bool mixup_applied() const { return mixup_partner >= 0; }
  bool cutmix_applied() const { return cutmix_partner >= 0; }
  bool mixing_applied() const { return mixup_applied() || cutmix_applied(); }
  std::int32_t partner() const { return mixup_applied() ? mixup_partner : cutmix_partner; }
  // Empty string when every type invariant holds, otherwise the first violation.
  std::string violation() const;

  friend bool operator==(const AugmentationDescriptor&, const AugmentationDescriptor&) = default;
};

struct AugmentationPolicy {
  Variant variant = Variant::RrcRaRe;
  double flip_p = 0.5;
  double ra_p = 1.0;
  double erase_p = 0.25;
  double mix_p = 0.5;
  double mixup_alpha = 0.2;
  double cutmix_alpha = 1.0;
  std::pair<double, double> crop_scale{0.08, 1.0};
  std::pair<double, double> crop_ratio{3.0 / 4.0, 4.0 / 3.0};
  std::pair<double, double> erase_scale{0.02, 1.0 / 3.0};
  std::pair<double, double> erase_ratio{0.3, 1.0 / 0.3};

  static AugmentationPolicy for_variant(Variant v) {
    AugmentationPolicy p;
    p.variant = v;
    return p;
  }
  void check() const;
};

// Draws one descriptor. Blocks not in the variant are left at their sentinels and
// consume no randomness. image_id is excluded from the mix partner draw.
AugmentationDescriptor sample_descriptor(const AugmentationPolicy& policy, std::uint16_t src_height,
                                         std::uint16_t src_width, std::size_t dataset_size,
                                         std::int64_t image_id, SeededRng& rng);

// RandAugment op table. Magnitudes lie in [0, 10]; every op is the identity at
// magnitude 0 except Posterize and Solarize, whose strength grows from a no-op too.
enum class RaOp : std::int32_t {
  Identity = 0,
  Brightness = 1,
  Contrast = 2,
  Posterize = 3,
  Solarize = 4,
  Rotate = 5,
  TranslateX = 6,
  TranslateY = 7,
  ShearX = 8,
  ShearY = 9,
};
inline constexpr std::int32_t kNumRaOps = 10;
std::string_view ra_op_name(std::int32_t op_id);

Image apply_ra_op(std::int32_t op_id, float magnitude, const Image& img);

// Bilinear resize of a fractional crop box to (out_h, out_w). Degenerate boxes are
// clamped to one source pixel.
Image crop_resize(const Image& src, const Box& crop, std::uint16_t out_h, std::uint16_t out_w);
Image hflip(const Image& img);

// crop -> resize -> flip -> RA ops. Mixing and erasing are not applied.
Image replay_base(const AugmentationDescriptor& desc, const Image& source, std::uint16_t out_h,
                  std::uint16_t out_w);
// MixUp (convex combination) or CutMix (box paste) of two same-size images.
Image apply_mix(const AugmentationDescriptor& desc, const Image& primary, const Image& partner);
// Zero-fills the erase box if applied.
void apply_erase(const AugmentationDescriptor& desc, Image& img);

using PartnerProvider = std::function<const Image&(std::int32_t image_id)>;

// Full replay: crop -> resize -> flip -> RA -> mix -> erase. The mix partner goes
// through the same crop/flip/RA chain as the primary before mixing. Throws
// ValidationError when the partner cannot be resolved.
Image replay(const AugmentationDescriptor& desc, const Image& source, const PartnerProvider& partners,
             std::uint16_t out_h, std::uint16_t out_w);

// Self-mix: partner becomes the image itself.
AugmentationDescriptor make_self_mix(const AugmentationDescriptor& desc, std::int32_t own_id);
// Double-mix: a second descriptor identical except for the mixing coefficients
// (a new lambda for MixUp, a new box for CutMix).
std::pair<AugmentationDescriptor, AugmentationDescriptor> make_double_mix(
    const AugmentationDescriptor& desc, float second_lambda);
std::pair<AugmentationDescriptor, AugmentationDescriptor> make_double_mix(
    const AugmentationDescriptor& desc, const Box& second_box);
// Draws the second coefficient set from rng with the policy's alpha.
std::pair<AugmentationDescriptor, AugmentationDescriptor> make_double_mix(
    const AugmentationDescriptor& desc, const AugmentationPolicy& policy, SeededRng& rng);

}  // namespace dr
