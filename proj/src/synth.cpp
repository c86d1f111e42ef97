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

#include "dr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dr/errors.hpp"

namespace dr {
namespace {

double segment_distance(double px, double py, const Stroke& s) {
  const double vx = s.x1 - s.x0, vy = s.y1 - s.y0;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((px - s.x0) * vx + (py - s.y0) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (s.x0 + t * vx), dy = py - (s.y0 + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

Stroke random_stroke(SeededRng& rng, double h, double w) {
  Stroke s;
  do {
    s = {rng.uniform(2.0, w - 3.0), rng.uniform(2.0, h - 3.0), rng.uniform(2.0, w - 3.0), rng.uniform(2.0, h - 3.0)};
  } while (std::hypot(s.x1 - s.x0, s.y1 - s.y0) < 0.35 * std::min(h, w));
  return s;
}

void draw(std::vector<double>& canvas, std::size_t h, std::size_t w, const Stroke& s, double amplitude) {
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double d = segment_distance(static_cast<double>(x), static_cast<double>(y), s);
      const double v = amplitude * std::exp(-0.5 * d * d / 0.64);
      canvas[y * w + x] = std::max(canvas[y * w + x], v);
    }
  }
}

}  // namespace

SynthGenerator::SynthGenerator(SynthSpec spec) : spec_(spec) {
  if (spec_.num_classes == 0 || spec_.height < 8 || spec_.width < 8) throw ValidationError("synthetic spec too small");
  if (spec_.channels != 1 && spec_.channels != 3) throw ValidationError("channels must be 1 or 3");
  SeededRng rng(spec_.seed, 0x5EED);
  std::vector<Stroke> shared;
  prototypes_.resize(spec_.num_classes);
  for (std::size_t c = 0; c < spec_.num_classes; ++c) {
    if (c % 2 == 0) shared.assign(1, random_stroke(rng, spec_.height, spec_.width));
    prototypes_[c].push_back(shared.front());
    prototypes_[c].push_back(random_stroke(rng, spec_.height, spec_.width));
  }
}

std::vector<double> SynthGenerator::render(std::size_t cls, double dx, double dy, double amplitude) const {
  std::vector<double> canvas(static_cast<std::size_t>(spec_.height) * spec_.width, 0.0);
  for (auto s : prototypes_.at(cls)) {
    s.x0 += dx;
    s.x1 += dx;
    s.y0 += dy;
    s.y1 += dy;
    draw(canvas, spec_.height, spec_.width, s, amplitude);
  }
  return canvas;
}

Image SynthGenerator::sample(std::size_t cls, SeededRng& rng) const {
  const double dx = rng.uniform(-spec_.max_shift, spec_.max_shift);
  const double dy = rng.uniform(-spec_.max_shift, spec_.max_shift);
  const double amp = rng.uniform(0.6, 1.0);
  auto canvas = render(cls, dx, dy, amp);
  if (rng.bernoulli(spec_.distractor_p)) {
    draw(canvas, spec_.height, spec_.width, random_stroke(rng, spec_.height, spec_.width), rng.uniform(0.4, 0.8));
  }
  std::normal_distribution<double> noise(0.0, spec_.noise);
  Image img(spec_.height, spec_.width, spec_.channels);
  // Colour images tint each class differently but keep luminance informative.
  const double tint[3] = {1.0, 0.6 + 0.4 * ((cls % 3) / 2.0), 0.6 + 0.4 * (((cls + 1) % 3) / 2.0)};
  for (std::size_t p = 0; p < canvas.size(); ++p) {
    for (std::size_t c = 0; c < spec_.channels; ++c) {
      const double v = canvas[p] * (spec_.channels == 3 ? tint[c] : 1.0) + (spec_.noise > 0 ? noise(rng) : 0.0);
      img.data[p * spec_.channels + c] = static_cast<std::uint8_t>(std::clamp(std::floor(v * 255.0 + 0.5), 0.0, 255.0));
    }
  }
  return img;
}

LabeledDataset SynthGenerator::make_dataset(std::size_t count, std::uint64_t sample_seed) const {
  LabeledDataset ds;
  ds.num_classes = spec_.num_classes;
  ds.images.reserve(count);
  ds.labels.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SeededRng rng(sample_seed, i);
    const auto cls = static_cast<std::uint16_t>(i % spec_.num_classes);
    ds.images.push_back(sample(cls, rng));
    std::uint16_t label = cls;
    if (spec_.label_noise > 0 && rng.bernoulli(spec_.label_noise)) {
      label = static_cast<std::uint16_t>(rng.below(spec_.num_classes));
    }
    ds.labels.push_back(label);
  }
  return ds;
}

OracleTeacher::OracleTeacher(const SynthGenerator& gen, double temperature) : gen_(gen), temperature_(temperature) {
  if (!(temperature_ > 0)) throw ValidationError("oracle temperature must be positive");
  const double step = 0.5;
  const double ms = gen_.spec().max_shift;
  templates_.resize(gen_.spec().num_classes);
  for (std::size_t c = 0; c < templates_.size(); ++c) {
    for (double dy = -ms; dy <= ms + 1e-9; dy += step) {
      for (double dx = -ms; dx <= ms + 1e-9; dx += step) {
        auto t = gen_.render(c, dx, dy, 1.0);
        double mean = 0.0;
        for (double v : t) mean += v;
        mean /= static_cast<double>(t.size());
        double norm = 0.0;
        for (double& v : t) {
          v -= mean;
          norm += v * v;
        }
        norm = std::sqrt(norm);
        for (double& v : t) v /= norm;
        templates_[c].push_back(std::move(t));
      }
    }
  }
}

std::string OracleTeacher::identity() const {
  return "oracle:seed=" + std::to_string(gen_.spec().seed) + ":T=" + std::to_string(temperature_);
}

ProbMatrix OracleTeacher::predict_batch(std::span<const Image> batch) const {
  const std::size_t K = num_classes();
  ProbMatrix out(batch.size(), K);
  std::vector<double> x;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Image& img = batch[i];
    const std::size_t hw = img.pixel_count();
    x.assign(hw, 0.0);
    for (std::size_t p = 0; p < hw; ++p) {
      for (std::size_t c = 0; c < img.channels; ++c) x[p] += img.data[p * img.channels + c];
    }
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(hw);
    double norm = 0.0;
    for (double& v : x) {
      v -= mean;
      norm += v * v;
    }
    norm = std::sqrt(norm);
    std::vector<double> score(K, 0.0);
    for (std::size_t c = 0; c < K; ++c) {
      double best = -1.0;
      if (norm > 0) {
        for (const auto& t : templates_[c]) {
          double dot = 0.0;
          for (std::size_t p = 0; p < hw; ++p) dot += x[p] * t[p];
          best = std::max(best, dot / norm);
        }
      } else {
        best = 0.0;
      }
      score[c] = best / temperature_;
    }
    const double mx = *std::max_element(score.begin(), score.end());
    double sum = 0.0;
    for (double& s : score) sum += (s = std::exp(s - mx));
    auto row = out.row(i);
    for (std::size_t c = 0; c < K; ++c) row[c] = static_cast<float>(score[c] / sum);
  }
  return out;
}

}  // namespace dr
