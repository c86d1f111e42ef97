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

#include "dr/augment.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

#include "dr/errors.hpp"

namespace dr {
namespace {

std::uint8_t clamp_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0)); }

// Pulls x (and y) back until the float box fits in the unit square.
Box fit_box(float x, float y, float w, float h) {
  w = std::clamp(w, 0.f, 1.f);
  h = std::clamp(h, 0.f, 1.f);
  x = std::clamp(x, 0.f, 1.f - w);
  y = std::clamp(y, 0.f, 1.f - h);
  while (x + w > 1.f) x = std::nextafter(x, 0.f);
  while (y + h > 1.f) y = std::nextafter(y, 0.f);
  return {x, y, w, h};
}

Box sample_crop(const AugmentationPolicy& p, std::uint16_t height, std::uint16_t width, SeededRng& rng) {
  const double area = static_cast<double>(height) * width;
  const double log_lo = std::log(p.crop_ratio.first);
  const double log_hi = std::log(p.crop_ratio.second);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target_area = area * rng.uniform(p.crop_scale.first, p.crop_scale.second);
    const double ratio = std::exp(rng.uniform(log_lo, log_hi));
    const auto w = static_cast<long>(std::lround(std::sqrt(target_area * ratio)));
    const auto h = static_cast<long>(std::lround(std::sqrt(target_area / ratio)));
    if (w > 0 && h > 0 && w <= width && h <= height) {
      const auto top = static_cast<long>(rng.below(static_cast<std::uint64_t>(height - h + 1)));
      const auto left = static_cast<long>(rng.below(static_cast<std::uint64_t>(width - w + 1)));
      return fit_box(static_cast<float>(left) / width, static_cast<float>(top) / height,
                     static_cast<float>(w) / width, static_cast<float>(h) / height);
    }
  }
  // Center crop at the nearest admissible aspect ratio.
  const double in_ratio = static_cast<double>(width) / height;
  long w = width;
  long h = height;
  if (in_ratio < p.crop_ratio.first) {
    h = std::lround(w / p.crop_ratio.first);
  } else if (in_ratio > p.crop_ratio.second) {
    w = std::lround(h * p.crop_ratio.second);
  }
  return fit_box(static_cast<float>((width - w) / 2) / width, static_cast<float>((height - h) / 2) / height,
                 static_cast<float>(w) / width, static_cast<float>(h) / height);
}

Box sample_erase(const AugmentationPolicy& p, SeededRng& rng) {
  const double log_lo = std::log(p.erase_ratio.first);
  const double log_hi = std::log(p.erase_ratio.second);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double area = rng.uniform(p.erase_scale.first, p.erase_scale.second);
    const double ratio = std::exp(rng.uniform(log_lo, log_hi));
    const double h = std::sqrt(area * ratio);
    const double w = std::sqrt(area / ratio);
    if (w < 1.0 && h < 1.0) {
      const double x = rng.uniform(0.0, 1.0 - w);
      const double y = rng.uniform(0.0, 1.0 - h);
      return fit_box(static_cast<float>(x), static_cast<float>(y), static_cast<float>(w), static_cast<float>(h));
    }
  }
  return {};
}

Box sample_cutmix_box(double alpha, SeededRng& rng) {
  const double lam = rng.beta(alpha, alpha);
  const double cut = std::sqrt(1.0 - lam);
  const double cx = rng.uniform();
  const double cy = rng.uniform();
  const double x0 = std::clamp(cx - cut / 2, 0.0, 1.0);
  const double x1 = std::clamp(cx + cut / 2, 0.0, 1.0);
  const double y0 = std::clamp(cy - cut / 2, 0.0, 1.0);
  const double y1 = std::clamp(cy + cut / 2, 0.0, 1.0);
  return fit_box(static_cast<float>(x0), static_cast<float>(y0), static_cast<float>(x1 - x0),
                 static_cast<float>(y1 - y0));
}

struct PixelBox {
  long x0, y0, x1, y1;
};

PixelBox to_pixels(const Box& b, std::uint16_t height, std::uint16_t width) {
  auto px = [](float f, std::uint16_t n) { return std::clamp<long>(std::lround(static_cast<double>(f) * n), 0, n); };
  return {px(b.x, width), px(b.y, height), px(b.x + b.w, width), px(b.y + b.h, height)};
}

// Nearest-neighbour inverse mapping: src = (a*x + b*y + c, d*x + e*y + f); zero fill.
Image affine_nearest(const Image& img, double a, double b, double c, double d, double e, double f) {
  Image out(img.height, img.width, img.channels, 0);
  for (long y = 0; y < img.height; ++y) {
    for (long x = 0; x < img.width; ++x) {
      const double sx = std::floor(a * x + b * y + c + 0.5);
      const double sy = std::floor(d * x + e * y + f + 0.5);
      if (sx < 0 || sy < 0 || sx >= img.width || sy >= img.height) continue;
      for (std::size_t ch = 0; ch < img.channels; ++ch) {
        out.at(y, x, ch) = img.at(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx), ch);
      }
    }
  }
  return out;
}

template <typename F>
Image map_pixels(const Image& img, F f) {
  Image out = img;
  for (auto& v : out.data) v = f(v);
  return out;
}

}  // namespace

bool Box::inside_unit() const {
  auto ok = [](float v) { return std::isfinite(v) && v >= 0.f && v <= 1.f; };
  return ok(x) && ok(y) && ok(w) && ok(h) && x + w <= 1.f && y + h <= 1.f;
}

std::uint16_t variant_flags(Variant v) {
  switch (v) {
    case Variant::Rrc: return kRrc;
    case Variant::RrcMixing: return kRrc | kMixing;
    case Variant::RrcRaRe: return kRrc | kRaRe;
    case Variant::RrcMixRaRe: return kRrc | kRaRe | kMixing;
  }
  return kRrc;
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::Rrc: return "rrc";
    case Variant::RrcMixing: return "rrc+mixing";
    case Variant::RrcRaRe: return "rrc+ra/re";
    case Variant::RrcMixRaRe: return "rrc+m*+r*";
  }
  return "rrc";
}

Variant parse_variant(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
  for (auto v : {Variant::Rrc, Variant::RrcMixing, Variant::RrcRaRe, Variant::RrcMixRaRe}) {
    if (s == variant_name(v)) return v;
  }
  throw ValidationError("unknown variant '" + std::string(name) + "'");
}

std::string AugmentationDescriptor::violation() const {
  if (!(flags & kRrc)) return "RRC flag not set";
  if (!crop.inside_unit() || crop.w <= 0.f || crop.h <= 0.f) return "crop box outside [0,1]";
  for (const auto& slot : ra) {
    if (slot.op < -1 || slot.op >= kNumRaOps) return "RA op id out of range";
    if (slot.op >= 0 && !(slot.magnitude >= 0.f && slot.magnitude <= 10.f)) return "RA magnitude outside [0,10]";
  }
  if (erase_applied() && !erase.inside_unit()) return "erase box outside [0,1]";
  if (mixup_applied() && cutmix_applied()) return "both mixup and cutmix applied";
  if (mixup_applied() && !(mixup_lambda >= 0.f && mixup_lambda <= 1.f)) return "mixup lambda outside [0,1]";
  if (cutmix_applied() && !cutmix_box.inside_unit()) return "cutmix box outside [0,1]";
  if (!(flags & kRaRe) && (ra[0].op >= 0 || ra[1].op >= 0 || erase_applied())) return "RA/RE block set without flag";
  if (!(flags & kMixing) && mixing_applied()) return "mixing block set without flag";
  return {};
}

void AugmentationPolicy::check() const {
  for (double p : {flip_p, ra_p, erase_p, mix_p}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("apply probability outside [0,1]");
  }
  if (!(mixup_alpha > 0.0) || !(cutmix_alpha > 0.0)) throw ValidationError("mixing alpha must be > 0");
  if (!(crop_scale.first > 0.0 && crop_scale.first <= crop_scale.second && crop_scale.second <= 1.0)) {
    throw ValidationError("crop scale range must satisfy 0 < lo <= hi <= 1");
  }
  if (!(crop_ratio.first > 0.0 && crop_ratio.first <= crop_ratio.second)) {
    throw ValidationError("crop aspect range must satisfy 0 < lo <= hi");
  }
}

AugmentationDescriptor sample_descriptor(const AugmentationPolicy& policy, std::uint16_t src_height,
                                         std::uint16_t src_width, std::size_t dataset_size,
                                         std::int64_t image_id, SeededRng& rng) {
  AugmentationDescriptor d;
  d.flags = variant_flags(policy.variant);
  if ((d.flags & kMixing) && dataset_size < 2) {
    throw ValidationError("mixing needs a dataset of at least 2 images");
  }
  if (src_height == 0 || src_width == 0) throw ValidationError("source image has zero size");

  d.crop = sample_crop(policy, src_height, src_width, rng);
  d.flip = rng.bernoulli(policy.flip_p);

  if (d.flags & kRaRe) {
    for (auto& slot : d.ra) {
      if (rng.bernoulli(policy.ra_p)) {
        slot.op = static_cast<std::int32_t>(rng.below(kNumRaOps));
        slot.magnitude = static_cast<float>(rng.uniform(0.0, 10.0));
      }
    }
    if (rng.bernoulli(policy.erase_p)) d.erase = sample_erase(policy, rng);
  }

  if ((d.flags & kMixing) && rng.bernoulli(policy.mix_p)) {
    const bool self_in_range = image_id >= 0 && static_cast<std::size_t>(image_id) < dataset_size;
    auto partner = static_cast<std::int64_t>(rng.below(dataset_size - (self_in_range ? 1 : 0)));
    if (self_in_range && partner >= image_id) ++partner;
    if (rng.bernoulli(0.5)) {
      d.mixup_partner = static_cast<std::int32_t>(partner);
      d.mixup_lambda = static_cast<float>(rng.beta(policy.mixup_alpha, policy.mixup_alpha));
    } else {
      d.cutmix_partner = static_cast<std::int32_t>(partner);
      d.cutmix_box = sample_cutmix_box(policy.cutmix_alpha, rng);
    }
  }
  return d;
}

std::string_view ra_op_name(std::int32_t op_id) {
  static constexpr std::string_view kNames[kNumRaOps] = {
      "Identity", "Brightness", "Contrast", "Posterize", "Solarize",
      "Rotate",   "TranslateX", "TranslateY", "ShearX",  "ShearY"};
  if (op_id < 0 || op_id >= kNumRaOps) return "None";
  return kNames[op_id];
}

Image apply_ra_op(std::int32_t op_id, float magnitude, const Image& img) {
  if (op_id < 0 || op_id >= kNumRaOps) throw ValidationError("unknown RA op id " + std::to_string(op_id));
  if (!(magnitude >= 0.f && magnitude <= 10.f)) throw ValidationError("RA magnitude outside [0,10]");
  const double m = magnitude / 10.0;
  const double cx = (img.width - 1) / 2.0;
  const double cy = (img.height - 1) / 2.0;
  switch (static_cast<RaOp>(op_id)) {
    case RaOp::Identity:
      return img;
    case RaOp::Brightness: {
      const double factor = 1.0 + 0.9 * m;
      return map_pixels(img, [factor](std::uint8_t v) { return clamp_u8(v * factor); });
    }
    case RaOp::Contrast: {
      const double factor = 1.0 + 0.9 * m;
      double sum = 0.0;
      for (auto v : img.data) sum += v;
      const double mean = img.data.empty() ? 0.0 : std::floor(sum / img.data.size() + 0.5);
      return map_pixels(img, [=](std::uint8_t v) { return clamp_u8(mean + (v - mean) * factor); });
    }
    case RaOp::Posterize: {
      const int bits = 8 - static_cast<int>(4.0 * m);
      const auto mask = static_cast<std::uint8_t>(0xFFu << (8 - bits));
      return map_pixels(img, [mask](std::uint8_t v) { return static_cast<std::uint8_t>(v & mask); });
    }
    case RaOp::Solarize: {
      const double threshold = 256.0 - 25.6 * magnitude;
      return map_pixels(img, [threshold](std::uint8_t v) {
        return v >= threshold ? static_cast<std::uint8_t>(255 - v) : v;
      });
    }
    case RaOp::Rotate: {
      const double theta = 30.0 * m * std::numbers::pi / 180.0;
      const double c = std::cos(theta);
      const double s = std::sin(theta);
      // Output pixel p maps to source R(-theta)(p - center) + center.
      return affine_nearest(img, c, s, cx - c * cx - s * cy, -s, c, cy + s * cx - c * cy);
    }
    case RaOp::TranslateX:
      return affine_nearest(img, 1, 0, -0.3 * img.width * m, 0, 1, 0);
    case RaOp::TranslateY:
      return affine_nearest(img, 1, 0, 0, 0, 1, -0.3 * img.height * m);
    case RaOp::ShearX: {
      const double s = 0.3 * m;
      return affine_nearest(img, 1, s, -s * cy, 0, 1, 0);
    }
    case RaOp::ShearY: {
      const double s = 0.3 * m;
      return affine_nearest(img, 1, 0, 0, s, 1, -s * cx);
    }
  }
  return img;
}

Image crop_resize(const Image& src, const Box& crop, std::uint16_t out_h, std::uint16_t out_w) {
  const long W = src.width;
  const long H = src.height;
  const long cw = std::clamp<long>(std::lround(static_cast<double>(crop.w) * W), 1, W);
  const long ch = std::clamp<long>(std::lround(static_cast<double>(crop.h) * H), 1, H);
  const long left = std::clamp<long>(std::lround(static_cast<double>(crop.x) * W), 0, W - cw);
  const long top = std::clamp<long>(std::lround(static_cast<double>(crop.y) * H), 0, H - ch);

  Image out(out_h, out_w, src.channels);
  const double sx_scale = static_cast<double>(cw) / out_w;
  const double sy_scale = static_cast<double>(ch) / out_h;
  for (long oy = 0; oy < out_h; ++oy) {
    const double sy = std::clamp((oy + 0.5) * sy_scale - 0.5, 0.0, static_cast<double>(ch - 1));
    const long y0 = static_cast<long>(sy);
    const long y1 = std::min(y0 + 1, ch - 1);
    const double fy = sy - y0;
    for (long ox = 0; ox < out_w; ++ox) {
      const double sx = std::clamp((ox + 0.5) * sx_scale - 0.5, 0.0, static_cast<double>(cw - 1));
      const long x0 = static_cast<long>(sx);
      const long x1 = std::min(x0 + 1, cw - 1);
      const double fx = sx - x0;
      for (std::size_t c = 0; c < src.channels; ++c) {
        const double v00 = src.at(top + y0, left + x0, c);
        const double v01 = src.at(top + y0, left + x1, c);
        const double v10 = src.at(top + y1, left + x0, c);
        const double v11 = src.at(top + y1, left + x1, c);
        const double v = (v00 * (1 - fx) + v01 * fx) * (1 - fy) + (v10 * (1 - fx) + v11 * fx) * fy;
        out.at(oy, ox, c) = clamp_u8(v);
      }
    }
  }
  return out;
}

Image hflip(const Image& img) {
  Image out(img.height, img.width, img.channels);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < img.channels; ++c) out.at(y, img.width - 1 - x, c) = img.at(y, x, c);
    }
  }
  return out;
}

Image replay_base(const AugmentationDescriptor& desc, const Image& source, std::uint16_t out_h,
                  std::uint16_t out_w) {
  Image img = crop_resize(source, desc.crop, out_h, out_w);
  if (desc.flip) img = hflip(img);
  for (const auto& slot : desc.ra) {
    if (slot.op >= 0) img = apply_ra_op(slot.op, slot.magnitude, img);
  }
  return img;
}

Image apply_mix(const AugmentationDescriptor& desc, const Image& primary, const Image& partner) {
  if (!desc.mixing_applied()) return primary;
  if (!primary.same_dims(partner)) throw ValidationError("mix partner dims differ from primary");
  Image out = primary;
  if (desc.mixup_applied()) {
    const double lam = desc.mixup_lambda;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      out.data[i] = clamp_u8(lam * primary.data[i] + (1.0 - lam) * partner.data[i]);
    }
  } else {
    const auto b = to_pixels(desc.cutmix_box, out.height, out.width);
    for (long y = b.y0; y < b.y1; ++y) {
      for (long x = b.x0; x < b.x1; ++x) {
        for (std::size_t c = 0; c < out.channels; ++c) out.at(y, x, c) = partner.at(y, x, c);
      }
    }
  }
  return out;
}

void apply_erase(const AugmentationDescriptor& desc, Image& img) {
  if (!desc.erase_applied()) return;
  const auto b = to_pixels(desc.erase, img.height, img.width);
  for (long y = b.y0; y < b.y1; ++y) {
    for (long x = b.x0; x < b.x1; ++x) {
      for (std::size_t c = 0; c < img.channels; ++c) img.at(y, x, c) = 0;
    }
  }
}

Image replay(const AugmentationDescriptor& desc, const Image& source, const PartnerProvider& partners,
             std::uint16_t out_h, std::uint16_t out_w) {
  Image img = replay_base(desc, source, out_h, out_w);
  if (desc.mixing_applied()) {
    if (!partners) throw ValidationError("mix partner " + std::to_string(desc.partner()) + " has no provider");
    const Image& partner = partners(desc.partner());
    img = apply_mix(desc, img, replay_base(desc, partner, out_h, out_w));
  }
  apply_erase(desc, img);
  return img;
}

AugmentationDescriptor make_self_mix(const AugmentationDescriptor& desc, std::int32_t own_id) {
  if (!(desc.flags & kMixing)) throw ValidationError("self-mix requires the Mixing block");
  AugmentationDescriptor out = desc;
  if (out.cutmix_applied()) {
    out.cutmix_partner = own_id;
  } else {
    if (!out.mixup_applied()) out.mixup_lambda = 1.f;
    out.mixup_partner = own_id;
  }
  return out;
}

std::pair<AugmentationDescriptor, AugmentationDescriptor> make_double_mix(const AugmentationDescriptor& desc,
                                                                          float second_lambda) {
  if (!(desc.flags & kMixing) || !desc.mixup_applied()) throw ValidationError("double-mix by lambda requires an applied MixUp");
  if (!(second_lambda >= 0.f && second_lambda <= 1.f)) throw ValidationError("lambda outside [0,1]");
  auto second = desc;
  second.mixup_lambda = second_lambda;
  return {desc, second};
}

std::pair<AugmentationDescriptor, AugmentationDescriptor> make_double_mix(const AugmentationDescriptor& desc,
                                                                          const Box& second_box) {
  if (!(desc.flags & kMixing) || !desc.cutmix_applied()) throw ValidationError("double-mix by box requires an applied CutMix");
  if (!second_box.inside_unit()) throw ValidationError("cutmix box outside [0,1]");
  auto second = desc;
  second.cutmix_box = second_box;
  return {desc, second};
}

std::pair<AugmentationDescriptor, AugmentationDescriptor> make_double_mix(const AugmentationDescriptor& desc,
                                                                          const AugmentationPolicy& policy,
                                                                          SeededRng& rng) {
  if (!(desc.flags & kMixing)) throw ValidationError("double-mix requires the Mixing block");
  if (desc.mixup_applied()) {
    return make_double_mix(desc, static_cast<float>(rng.beta(policy.mixup_alpha, policy.mixup_alpha)));
  }
  if (desc.cutmix_applied()) return make_double_mix(desc, sample_cutmix_box(policy.cutmix_alpha, rng));
  throw ValidationError("double-mix requires an applied MixUp or CutMix");
}

}  // namespace dr
