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

#include <cmath>
#include <functional>

#include "dr/augment.hpp"
#include "dr/errors.hpp"
#include "test_util.hpp"

namespace dr {
namespace {

using testing::random_dataset;
using testing::random_image;

Image constant_image(std::uint16_t h, std::uint16_t w, std::uint8_t c, std::uint8_t v) { return Image(h, w, c, v); }

std::uint8_t round_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0)); }

// 3-sigma binomial band.
void expect_frequency(int hits, int n, double p, const char* what) {
  const double sigma = std::sqrt(n * p * (1 - p));
  EXPECT_NEAR(hits, n * p, 3.0 * sigma + 1e-9) << what;
}

TEST(Variant, NamesRoundtrip) {
  for (auto v : {Variant::Rrc, Variant::RrcMixing, Variant::RrcRaRe, Variant::RrcMixRaRe}) {
    EXPECT_EQ(parse_variant(variant_name(v)), v);
  }
  EXPECT_EQ(parse_variant("RRC+RA/RE"), Variant::RrcRaRe);
  EXPECT_THROW(parse_variant("rrc+everything"), ValidationError);
  EXPECT_EQ(variant_flags(Variant::RrcMixRaRe), kRrc | kRaRe | kMixing);
}

TEST(Sample, RrcVariantLeavesOtherBlocksEmpty) {
  const auto policy = AugmentationPolicy::for_variant(Variant::Rrc);
  for (std::uint64_t s = 0; s < 1000; ++s) {
    SeededRng rng(s, 1);
    const auto d = sample_descriptor(policy, 16, 16, 100, 3, rng);
    ASSERT_EQ(d.ra[0].op, -1);
    ASSERT_EQ(d.ra[1].op, -1);
    ASSERT_FALSE(d.erase_applied());
    ASSERT_FALSE(d.mixing_applied());
    ASSERT_EQ(d.violation(), "");
  }
}

TEST(Sample, FlipFrequencyRrc) {
  const auto policy = AugmentationPolicy::for_variant(Variant::Rrc);
  int flips = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    SeededRng rng(7, derive_stream(i, 0));
    flips += sample_descriptor(policy, 16, 16, 10, 0, rng).flip;
  }
  EXPECT_GE(flips, 4800);
  EXPECT_LE(flips, 5200);
  expect_frequency(flips, n, 0.5, "flip");
}

TEST(Sample, ApplyProbabilitiesFullVariant) {
  const auto policy = AugmentationPolicy::for_variant(Variant::RrcMixRaRe);
  const int n = 10000;
  int erase = 0, mix = 0, mixup = 0, ra0 = 0, ra1 = 0, flips = 0;
  for (int i = 0; i < n; ++i) {
    SeededRng rng(11, derive_stream(i, 1));
    const auto d = sample_descriptor(policy, 16, 16, 50, i % 50, rng);
    ASSERT_EQ(d.violation(), "") << i;
    erase += d.erase_applied();
    mix += d.mixing_applied();
    mixup += d.mixup_applied();
    ra0 += d.ra[0].op >= 0;
    ra1 += d.ra[1].op >= 0;
    flips += d.flip;
    if (d.mixing_applied()) {
      ASSERT_NE(d.partner(), i % 50);
    }
  }
  EXPECT_GE(erase, 2300);
  EXPECT_LE(erase, 2700);
  EXPECT_GE(mix, 4700);
  EXPECT_LE(mix, 5300);
  expect_frequency(erase, n, 0.25, "erase");
  expect_frequency(mix, n, 0.5, "mix");
  expect_frequency(mixup, n, 0.25, "mixup");
  expect_frequency(flips, n, 0.5, "flip");
  EXPECT_EQ(ra0, n);
  EXPECT_EQ(ra1, n);
}

TEST(Sample, RaOpsAndMagnitudesUniform) {
  auto policy = AugmentationPolicy::for_variant(Variant::RrcRaRe);
  const int n = 10000;
  std::array<int, kNumRaOps> ops{};
  double mag = 0.0;
  for (int i = 0; i < n; ++i) {
    SeededRng rng(3, derive_stream(i, 2));
    const auto d = sample_descriptor(policy, 16, 16, 1, 0, rng);
    ops[d.ra[0].op]++;
    mag += d.ra[0].magnitude;
  }
  for (int c : ops) expect_frequency(c, n, 0.1, "ra op");
  EXPECT_NEAR(mag / n, 5.0, 3.0 * std::sqrt(100.0 / 12.0 / n));
}

TEST(Sample, MixingNeedsTwoImages) {
  SeededRng rng(1, 1);
  EXPECT_THROW(sample_descriptor(AugmentationPolicy::for_variant(Variant::RrcMixing), 8, 8, 1, 0, rng),
               ValidationError);
  EXPECT_NO_THROW(sample_descriptor(AugmentationPolicy::for_variant(Variant::RrcRaRe), 8, 8, 1, 0, rng));
}

TEST(Sample, CropAreaWithinScaleRange) {
  const auto policy = AugmentationPolicy::for_variant(Variant::Rrc);
  for (int i = 0; i < 2000; ++i) {
    SeededRng rng(5, derive_stream(i, 3));
    const auto d = sample_descriptor(policy, 32, 32, 1, 0, rng);
    ASSERT_TRUE(d.crop.inside_unit());
    const double area = static_cast<double>(d.crop.w) * d.crop.h;
    // Pixel rounding can move the area a little outside the nominal range.
    ASSERT_GE(area, 0.08 * 0.7);
    ASSERT_LE(area, 1.0 + 1e-6);
  }
}

TEST(Policy, CheckRejectsBadValues) {
  auto p = AugmentationPolicy::for_variant(Variant::Rrc);
  p.flip_p = 1.5;
  EXPECT_THROW(p.check(), ValidationError);
  p = AugmentationPolicy::for_variant(Variant::Rrc);
  p.mixup_alpha = 0.0;
  EXPECT_THROW(p.check(), ValidationError);
  p = AugmentationPolicy::for_variant(Variant::Rrc);
  p.crop_scale = {0.5, 0.2};
  EXPECT_THROW(p.check(), ValidationError);
}

TEST(Replay, IdentityDescriptorKeepsImage) {
  SeededRng rng(1, 2);
  const auto img = random_image(9, 7, 3, rng);
  AugmentationDescriptor d;
  EXPECT_EQ(replay(d, img, {}, 9, 7), img);
}

TEST(Replay, FlipIsInvolution) {
  SeededRng rng(1, 3);
  const auto img = random_image(5, 8, 3, rng);
  EXPECT_NE(hflip(img), img);
  EXPECT_EQ(hflip(hflip(img)), img);
  AugmentationDescriptor d;
  d.flip = true;
  EXPECT_EQ(replay(d, replay(d, img, {}, 5, 8), {}, 5, 8), img);
}

TEST(Replay, MixupOfConstantImages) {
  const auto a = constant_image(4, 4, 1, 100);
  const auto b = constant_image(4, 4, 1, 200);
  AugmentationDescriptor d;
  d.flags = kRrc | kMixing;
  d.mixup_partner = 1;
  d.mixup_lambda = 0.3f;
  const auto out = replay(d, a, [&](std::int32_t) -> const Image& { return b; }, 4, 4);
  EXPECT_EQ(out, constant_image(4, 4, 1, 170));
}

TEST(Replay, UnresolvedPartnerThrows) {
  AugmentationDescriptor d;
  d.flags = kRrc | kMixing;
  d.cutmix_partner = 3;
  d.cutmix_box = {0.f, 0.f, 0.5f, 0.5f};
  const auto a = constant_image(4, 4, 1, 1);
  EXPECT_THROW(replay(d, a, {}, 4, 4), ValidationError);
}

TEST(Replay, DegenerateCropClampsToOnePixel) {
  SeededRng rng(2, 2);
  const auto img = random_image(6, 6, 1, rng);
  AugmentationDescriptor d;
  d.crop = {0.5f, 0.5f, 0.001f, 0.001f};
  const auto out = replay(d, img, {}, 4, 4);
  EXPECT_EQ(out, constant_image(4, 4, 1, img.at(3, 3, 0)));
}

TEST(Replay, CropResizeSelectsPixels) {
  SeededRng rng(2, 3);
  const auto img = random_image(8, 8, 1, rng);
  // Half-size crop at scale 1: bilinear samples land on pixel centres.
  const auto out = crop_resize(img, {0.25f, 0.5f, 0.5f, 0.5f}, 4, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) ASSERT_EQ(out.at(y, x, 0), img.at(4 + y, 2 + x, 0));
  }
  // Downscale by 2: each output averages a 2x2 block.
  const auto half = crop_resize(img, {0.f, 0.f, 1.f, 1.f}, 4, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      const double avg = (img.at(2 * y, 2 * x, 0) + img.at(2 * y, 2 * x + 1, 0) + img.at(2 * y + 1, 2 * x, 0) +
                          img.at(2 * y + 1, 2 * x + 1, 0)) / 4.0;
      ASSERT_EQ(half.at(y, x, 0), round_u8(avg));
    }
  }
}

TEST(RaOps, ZeroMagnitudeIsIdentity) {
  SeededRng rng(4, 4);
  const auto img = random_image(9, 11, 3, rng);
  for (std::int32_t op = 0; op < kNumRaOps; ++op) EXPECT_EQ(apply_ra_op(op, 0.f, img), img) << ra_op_name(op);
  EXPECT_EQ(apply_ra_op(0, 7.f, img), img);
}

TEST(RaOps, SolarizeFullInverts) {
  SeededRng rng(4, 5);
  const auto img = random_image(6, 6, 1, rng);
  const auto out = apply_ra_op(static_cast<std::int32_t>(RaOp::Solarize), 10.f, img);
  for (std::size_t i = 0; i < img.data.size(); ++i) ASSERT_EQ(out.data[i], 255 - img.data[i]);
}

TEST(RaOps, TranslateShiftsWithZeroFill) {
  SeededRng rng(4, 6);
  const auto img = random_image(10, 10, 1, rng);
  // 0.3 * 10 * m pixels; m = 1/3 gives exactly one pixel.
  const auto out = apply_ra_op(static_cast<std::int32_t>(RaOp::TranslateX), 10.f / 3.f, img);
  for (int y = 0; y < 10; ++y) {
    EXPECT_EQ(out.at(y, 0, 0), 0);
    for (int x = 1; x < 10; ++x) ASSERT_EQ(out.at(y, x, 0), img.at(y, x - 1, 0));
  }
}

TEST(RaOps, PosterizeMasksLowBits) {
  const auto img = constant_image(2, 2, 1, 0xB7);
  EXPECT_EQ(apply_ra_op(static_cast<std::int32_t>(RaOp::Posterize), 10.f, img), constant_image(2, 2, 1, 0xB0));
}

TEST(RaOps, RejectsBadArguments) {
  const auto img = constant_image(2, 2, 1, 1);
  EXPECT_THROW(apply_ra_op(10, 1.f, img), ValidationError);
  EXPECT_THROW(apply_ra_op(-1, 1.f, img), ValidationError);
  EXPECT_THROW(apply_ra_op(1, 11.f, img), ValidationError);
}

TEST(RaOps, GeometryFuzzStaysInBounds) {
  SeededRng rng(8, 8);
  for (int i = 0; i < 500; ++i) {
    const auto h = static_cast<std::uint16_t>(1 + rng.below(12));
    const auto w = static_cast<std::uint16_t>(1 + rng.below(12));
    const auto img = random_image(h, w, rng.bernoulli(0.5) ? 1 : 3, rng);
    const auto op = static_cast<std::int32_t>(rng.below(kNumRaOps));
    const auto out = apply_ra_op(op, static_cast<float>(rng.uniform(0.0, 10.0)), img);
    ASSERT_TRUE(out.same_dims(img));
  }
}

TEST(Replay, BorderCropsFuzz) {
  SeededRng rng(9, 9);
  for (int i = 0; i < 1000; ++i) {
    const auto h = static_cast<std::uint16_t>(1 + rng.below(10));
    const auto w = static_cast<std::uint16_t>(1 + rng.below(10));
    const auto img = random_image(h, w, 1, rng);
    AugmentationDescriptor d;
    const float cw = static_cast<float>(rng.uniform(0.0, 1.0));
    const float ch = static_cast<float>(rng.uniform(0.0, 1.0));
    switch (i % 4) {  // touch each border in turn
      case 0: d.crop = {0.f, static_cast<float>(rng.uniform(0.0, 1.0 - ch)), cw, ch}; break;
      case 1: d.crop = {1.f - cw, 0.f, cw, ch}; break;
      case 2: d.crop = {0.f, 1.f - ch, cw, ch}; break;
      default: d.crop = {1.f - cw, 1.f - ch, cw, ch}; break;
    }
    const auto oh = static_cast<std::uint16_t>(1 + rng.below(12));
    const auto ow = static_cast<std::uint16_t>(1 + rng.below(12));
    const auto out = replay(d, img, {}, oh, ow);
    ASSERT_EQ(out.height, oh);
    ASSERT_EQ(out.width, ow);
  }
}

LabeledDataset fuzz_pool(std::uint64_t seed) { return random_dataset(6, 12, 10, 3, 4, seed); }

TEST(Replay, DeterministicOnFuzzedDescriptors) {
  const auto ds = fuzz_pool(1);
  const auto policy = AugmentationPolicy::for_variant(Variant::RrcMixRaRe);
  auto provider = [&](std::int32_t id) -> const Image& { return ds.images.at(id); };
  for (int i = 0; i < 1000; ++i) {
    SeededRng rng(21, derive_stream(i, 4));
    const std::size_t id = i % ds.size();
    const auto d = sample_descriptor(policy, 12, 10, ds.size(), id, rng);
    const auto a = replay(d, ds.images[id], provider, 8, 8);
    const auto b = replay(d, ds.images[id], provider, 8, 8);
    ASSERT_EQ(a, b) << i;
  }
}

// ---- Online oracle -----------------------------------------------------------
// Draws the same random stream as sample_descriptor but transforms the image as
// each parameter is drawn, working in pixel units.

Box pixel_box(long left, long top, long w, long h, long W, long H) {
  return {static_cast<float>(left) / W, static_cast<float>(top) / H, static_cast<float>(w) / W,
          static_cast<float>(h) / H};
}

struct PixRect {
  long x0, y0, x1, y1;
};

PixRect to_rect(double x0, double y0, double x1, double y1, long W, long H) {
  auto px = [](double f, long n) { return std::clamp<long>(std::lround(f * n), 0, n); };
  return {px(x0, W), px(y0, H), px(x1, W), px(y1, H)};
}

Image online_augment(const AugmentationPolicy& p, const LabeledDataset& ds, std::size_t id, SeededRng& rng,
                     std::uint16_t oh, std::uint16_t ow) {
  const auto flags = variant_flags(p.variant);
  const auto& src = ds.images[id];
  const long W = src.width, H = src.height;
  std::vector<std::function<Image(const Image&)>> chain;

  // Random resized crop.
  Box crop;
  bool found = false;
  for (int attempt = 0; attempt < 10 && !found; ++attempt) {
    const double target = static_cast<double>(W * H) * rng.uniform(p.crop_scale.first, p.crop_scale.second);
    const double ratio = std::exp(rng.uniform(std::log(p.crop_ratio.first), std::log(p.crop_ratio.second)));
    const long w = std::lround(std::sqrt(target * ratio));
    const long h = std::lround(std::sqrt(target / ratio));
    if (w > 0 && h > 0 && w <= W && h <= H) {
      const long top = static_cast<long>(rng.below(H - h + 1));
      const long left = static_cast<long>(rng.below(W - w + 1));
      crop = pixel_box(left, top, w, h, W, H);
      found = true;
    }
  }
  if (!found) {
    long w = W, h = H;
    const double r = static_cast<double>(W) / H;
    if (r < p.crop_ratio.first) h = std::lround(w / p.crop_ratio.first);
    else if (r > p.crop_ratio.second) w = std::lround(h * p.crop_ratio.second);
    crop = pixel_box((W - w) / 2, (H - h) / 2, w, h, W, H);
  }
  chain.push_back([=](const Image& im) { return crop_resize(im, crop, oh, ow); });
  Image img = chain.back()(src);
  if (rng.bernoulli(p.flip_p)) {
    chain.push_back([](const Image& im) { return hflip(im); });
    img = chain.back()(img);
  }

  std::optional<PixRect> erase;
  if (flags & kRaRe) {
    for (int slot = 0; slot < 2; ++slot) {
      if (!rng.bernoulli(p.ra_p)) continue;
      const auto op = static_cast<std::int32_t>(rng.below(kNumRaOps));
      const auto mag = static_cast<float>(rng.uniform(0.0, 10.0));
      chain.push_back([=](const Image& im) { return apply_ra_op(op, mag, im); });
      img = chain.back()(img);
    }
    if (rng.bernoulli(p.erase_p)) {
      for (int attempt = 0; attempt < 10; ++attempt) {
        const double area = rng.uniform(p.erase_scale.first, p.erase_scale.second);
        const double ratio = std::exp(rng.uniform(std::log(p.erase_ratio.first), std::log(p.erase_ratio.second)));
        const double h = std::sqrt(area * ratio), w = std::sqrt(area / ratio);
        if (w < 1.0 && h < 1.0) {
          const double x = rng.uniform(0.0, 1.0 - w), y = rng.uniform(0.0, 1.0 - h);
          erase = to_rect(x, y, x + w, y + h, ow, oh);
          break;
        }
      }
    }
  }

  if ((flags & kMixing) && rng.bernoulli(p.mix_p)) {
    auto partner_id = static_cast<std::size_t>(rng.below(ds.size() - 1));
    if (partner_id >= id) ++partner_id;
    Image partner = ds.images[partner_id];
    for (const auto& step : chain) partner = step(partner);
    if (rng.bernoulli(0.5)) {
      const double lam = static_cast<float>(rng.beta(p.mixup_alpha, p.mixup_alpha));
      for (std::size_t i = 0; i < img.data.size(); ++i) {
        img.data[i] = round_u8(lam * img.data[i] + (1.0 - lam) * partner.data[i]);
      }
    } else {
      const double lam = rng.beta(p.cutmix_alpha, p.cutmix_alpha);
      const double cut = std::sqrt(1.0 - lam);
      const double cx = rng.uniform(), cy = rng.uniform();
      const auto r = to_rect(std::clamp(cx - cut / 2, 0.0, 1.0), std::clamp(cy - cut / 2, 0.0, 1.0),
                             std::clamp(cx + cut / 2, 0.0, 1.0), std::clamp(cy + cut / 2, 0.0, 1.0), ow, oh);
      for (long y = r.y0; y < r.y1; ++y) {
        for (long x = r.x0; x < r.x1; ++x) {
          for (std::size_t c = 0; c < img.channels; ++c) img.at(y, x, c) = partner.at(y, x, c);
        }
      }
    }
  }
  if (erase) {
    for (long y = erase->y0; y < erase->y1; ++y) {
      for (long x = erase->x0; x < erase->x1; ++x) {
        for (std::size_t c = 0; c < img.channels; ++c) img.at(y, x, c) = 0;
      }
    }
  }
  return img;
}

TEST(Replay, MatchesOnlineAugmentation) {
  const auto ds = fuzz_pool(2);
  auto provider = [&](std::int32_t id) -> const Image& { return ds.images.at(id); };
  int mixed = 0;
  for (int i = 0; i < 1000; ++i) {
    auto policy = AugmentationPolicy::for_variant(static_cast<Variant>(i % 4));
    if (i % 8 >= 4) policy.crop_scale = {0.3, 1.0};
    const std::size_t id = i % ds.size();
    const std::uint16_t oh = 8 + i % 3, ow = 8 + i % 5;
    SeededRng a(31, derive_stream(i, 5)), b(31, derive_stream(i, 5));
    const auto d = sample_descriptor(policy, 12, 10, ds.size(), id, a);
    mixed += d.mixing_applied();
    const auto replayed = replay(d, ds.images[id], provider, oh, ow);
    const auto online = online_augment(policy, ds, id, b, oh, ow);
    ASSERT_EQ(replayed, online) << "case " << i;
    ASSERT_EQ(a.position(), b.position()) << "case " << i;
  }
  EXPECT_GT(mixed, 200);
}

// ---- Mixing pixel oracles ----------------------------------------------------

TEST(Mixing, MixupConvexCombinationFuzz) {
  SeededRng rng(41, 0);
  for (int i = 0; i < 1000; ++i) {
    const auto h = static_cast<std::uint16_t>(1 + rng.below(9));
    const auto w = static_cast<std::uint16_t>(1 + rng.below(9));
    const std::uint8_t c = rng.bernoulli(0.5) ? 1 : 3;
    const auto a = random_image(h, w, c, rng), b = random_image(h, w, c, rng);
    AugmentationDescriptor d;
    d.flags = kRrc | kMixing;
    d.mixup_partner = 1;
    d.mixup_lambda = static_cast<float>(rng.uniform());
    const auto out = apply_mix(d, a, b);
    const double lam = d.mixup_lambda;
    for (std::size_t k = 0; k < out.data.size(); ++k) {
      const double expect = lam * a.data[k] + (1 - lam) * b.data[k];
      ASSERT_LE(std::abs(out.data[k] - expect), 0.5 + 1e-9) << i;
      ASSERT_EQ(out.data[k], round_u8(expect)) << i;
    }
  }
}

TEST(Mixing, CutmixBoxPasteFuzz) {
  SeededRng rng(42, 0);
  for (int i = 0; i < 1000; ++i) {
    const auto h = static_cast<std::uint16_t>(1 + rng.below(12));
    const auto w = static_cast<std::uint16_t>(1 + rng.below(12));
    const auto a = random_image(h, w, 1, rng), b = random_image(h, w, 1, rng);
    AugmentationDescriptor d;
    d.flags = kRrc | kMixing;
    d.cutmix_partner = 1;
    // Boxes on the pixel grid so the oracle's pixel set is unambiguous.
    const long x0 = rng.below(w + 1), x1 = x0 + rng.below(w - x0 + 1);
    const long y0 = rng.below(h + 1), y1 = y0 + rng.below(h - y0 + 1);
    d.cutmix_box = {static_cast<float>(x0) / w, static_cast<float>(y0) / h, static_cast<float>(x1 - x0) / w,
                    static_cast<float>(y1 - y0) / h};
    const auto out = apply_mix(d, a, b);
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        const bool inside = x >= x0 && x < x1 && y >= y0 && y < y1;
        ASSERT_EQ(out.at(y, x, 0), inside ? b.at(y, x, 0) : a.at(y, x, 0)) << i;
      }
    }
  }
}

TEST(Mixing, SelfMixOfIdentityIsOriginal) {
  SeededRng rng(5, 5);
  const auto img = random_image(6, 6, 3, rng);
  AugmentationDescriptor d;
  d.flags = kRrc | kMixing;
  d.mixup_partner = 4;
  d.mixup_lambda = 0.5f;
  const auto self = make_self_mix(d, 2);
  EXPECT_EQ(self.mixup_partner, 2);
  EXPECT_EQ(replay(self, img, [&](std::int32_t) -> const Image& { return img; }, 6, 6), img);
}

TEST(Mixing, SelfMixPartnerIsOwnIdFuzz) {
  const auto policy = AugmentationPolicy::for_variant(Variant::RrcMixing);
  for (int i = 0; i < 100; ++i) {
    SeededRng rng(6, derive_stream(i, 6));
    const auto d = sample_descriptor(policy, 8, 8, 20, i % 20, rng);
    const auto s = make_self_mix(d, i % 20);
    ASSERT_EQ(s.partner(), i % 20);
    ASSERT_EQ(s.violation(), "");
    ASSERT_EQ(s.crop, d.crop);
  }
  AugmentationDescriptor plain;
  EXPECT_THROW(make_self_mix(plain, 0), ValidationError);
}

TEST(Mixing, DoubleMixSharesAllButCoefficients) {
  const auto policy = AugmentationPolicy::for_variant(Variant::RrcMixRaRe);
  auto forced = policy;
  forced.mix_p = 1.0;
  for (int i = 0; i < 200; ++i) {
    SeededRng rng(7, derive_stream(i, 7));
    const auto d = sample_descriptor(forced, 8, 8, 20, 0, rng);
    ASSERT_TRUE(d.mixing_applied());
    auto [first, second] = make_double_mix(d, forced, rng);
    EXPECT_EQ(first, d);
    EXPECT_EQ(first.crop, second.crop);
    EXPECT_EQ(first.flip, second.flip);
    EXPECT_EQ(first.ra, second.ra);
    EXPECT_EQ(first.erase, second.erase);
    EXPECT_EQ(first.partner(), second.partner());
    EXPECT_EQ(first.mixup_applied(), second.mixup_applied());
    EXPECT_EQ(second.violation(), "");
  }
  AugmentationDescriptor mixup;
  mixup.flags = kRrc | kMixing;
  mixup.mixup_partner = 1;
  mixup.mixup_lambda = 0.2f;
  const auto [a, b] = make_double_mix(mixup, 0.9f);
  EXPECT_FLOAT_EQ(a.mixup_lambda, 0.2f);
  EXPECT_FLOAT_EQ(b.mixup_lambda, 0.9f);
  EXPECT_THROW(make_double_mix(AugmentationDescriptor{}, 0.5f), ValidationError);
}

TEST(Descriptor, ViolationsDetected) {
  AugmentationDescriptor d;
  d.crop = {0.5f, 0.f, 0.7f, 1.f};
  EXPECT_NE(d.violation(), "");
  d = {};
  d.flags = kRrc | kMixing;
  d.mixup_partner = 1;
  d.cutmix_partner = 2;
  EXPECT_NE(d.violation(), "");
  d = {};
  d.ra[0] = {3, 1.f};
  EXPECT_NE(d.violation(), "");  // RA set without its flag
}

}  // namespace
}  // namespace dr
