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
#include <vector>

#include "dr/dataset.hpp"
#include "dr/teacher.hpp"

namespace dr {

// Class-conditional generator for the desk dataset. Each class is a fixed set of
// line strokes; neighbouring classes (2k, 2k+1) share one stroke so that some
// pairs are genuinely confusable. A sample is its class prototype, randomly
// shifted and dimmed, plus Gaussian pixel noise and an optional distractor stroke.
struct SynthSpec {
  std::uint16_t num_classes = 10;
  std::uint16_t height = 16;
  std::uint16_t width = 16;
  std::uint8_t channels = 1;
  double noise = 0.2;          // pixel noise sigma, in units of full scale
  double max_shift = 2.0;      // pixels
  double distractor_p = 0.5;   // probability of one random extra stroke
  double label_noise = 0.0;    // fraction of labels replaced uniformly at random
  std::uint64_t seed = 1;      // prototype seed
};

struct Stroke {
  double x0, y0, x1, y1;
};

class SynthGenerator {
 public:
  explicit SynthGenerator(SynthSpec spec);

  const SynthSpec& spec() const { return spec_; }
  const std::vector<Stroke>& strokes(std::size_t cls) const { return prototypes_[cls]; }

  // Renders class cls with the given shift/intensity; used by both sampling and
  // the oracle teacher's templates. Values in [0,1].
  std::vector<double> render(std::size_t cls, double dx, double dy, double amplitude) const;

  Image sample(std::size_t cls, SeededRng& rng) const;
  // count samples with balanced classes (i % num_classes), stream = sample index.
  LabeledDataset make_dataset(std::size_t count, std::uint64_t sample_seed) const;

 private:
  SynthSpec spec_;
  std::vector<std::vector<Stroke>> prototypes_;
};

// Teacher that knows the generator: scores each class by the best normalized
// correlation over a grid of shifts and turns scores into probabilities with a
// softmax at the given temperature.
class OracleTeacher final : public Teacher {
 public:
  OracleTeacher(const SynthGenerator& gen, double temperature = 0.05);

  std::size_t num_classes() const override { return gen_.spec().num_classes; }
  ImageDims input_dims() const override {
    return {gen_.spec().height, gen_.spec().width, gen_.spec().channels};
  }
  std::string identity() const override;

 protected:
  ProbMatrix predict_batch(std::span<const Image> batch) const override;

 private:
  SynthGenerator gen_;
  double temperature_;
  // templates_[cls][shift] zero-mean unit-norm vectors.
  std::vector<std::vector<std::vector<double>>> templates_;
};

}  // namespace dr
