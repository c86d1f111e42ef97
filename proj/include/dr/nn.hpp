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
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dr/dataset.hpp"
#include "dr/rng.hpp"
#include "dr/teacher.hpp"

namespace dr::nn {

// Dense NCHW float tensor. Fully-connected activations use h = w = 1.
struct Tensor {
  std::size_t n = 0, c = 0, h = 0, w = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_, float fill = 0.f)
      : n(n_), c(c_), h(h_), w(w_), data(n_ * c_ * h_ * w_, fill) {}
  std::size_t sample_size() const { return c * h * w; }
  float* sample(std::size_t i) { return data.data() + i * sample_size(); }
  const float* sample(std::size_t i) const { return data.data() + i * sample_size(); }
};

// Pixel v in [0,255] maps to (v/255 - 0.5) / 0.25.
Tensor images_to_tensor(std::span<const Image> images);
Tensor images_to_tensor(std::span<const Image* const> images);

struct Param {
  std::string name;
  std::vector<float> value;
  std::vector<float> grad;
  bool decay = true;  // weight decay applies to weights, not biases

  Param() = default;
  Param(std::string n, std::size_t size, bool d) : name(std::move(n)), value(size, 0.f), grad(size, 0.f), decay(d) {}
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  virtual Tensor forward(const Tensor& x) const = 0;
  // Accumulates parameter gradients and returns dL/dx. y is forward(x).
  virtual Tensor backward(const Tensor& x, const Tensor& y, const Tensor& dy) = 0;
  virtual std::vector<Param*> params() { return {}; }
};

class Conv3x3 final : public Layer {
 public:
  Conv3x3(std::size_t in_channels, std::size_t out_channels);
  std::string kind() const override { return "conv3x3"; }
  Tensor forward(const Tensor& x) const override;
  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& dy) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }

 private:
  std::vector<float> im2col(const Tensor& x) const;

  std::size_t in_, out_;
  Param weight_;  // [out][in][3][3]
  Param bias_;
};

class Dense final : public Layer {
 public:
  Dense(std::size_t in_features, std::size_t out_features);
  std::string kind() const override { return "dense"; }
  Tensor forward(const Tensor& x) const override;
  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& dy) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }

 private:
  std::size_t in_, out_;
  Param weight_;  // [out][in]
  Param bias_;
};

class Relu final : public Layer {
 public:
  std::string kind() const override { return "relu"; }
  Tensor forward(const Tensor& x) const override;
  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& dy) override;
};

// 2x2 average pooling, stride 2 (odd trailing rows/cols dropped).
class AvgPool2 final : public Layer {
 public:
  std::string kind() const override { return "avgpool2"; }
  Tensor forward(const Tensor& x) const override;
  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& dy) override;
};

class GlobalAvgPool final : public Layer {
 public:
  std::string kind() const override { return "gap"; }
  Tensor forward(const Tensor& x) const override;
  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& dy) override;
};

// Architecture description; parameter count is a pure function of it.
struct ModelSpec {
  std::string arch = "student-s";  // linear | mlp | student-s | teacher-l
  ImageDims input{16, 16, 1};
  std::uint16_t num_classes = 10;
  std::uint16_t width = 8;  // hidden units (mlp) or base channel count (conv nets)

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// Layer stack ending in class logits; softmax lives in the losses and predict().
// forward/logits/predict_probs are const and thread-safe; backward is not.
class Model {
 public:
  Model(ModelSpec spec, std::uint64_t init_seed);

  const ModelSpec& spec() const { return spec_; }
  Tensor logits(const Tensor& x) const;
  ProbMatrix predict_probs(const Tensor& x) const;

  // Forward pass keeping every activation for backward.
  std::vector<Tensor> forward_trace(const Tensor& x) const;
  // Accumulates gradients given dL/dlogits.
  void backward(const std::vector<Tensor>& trace, const Tensor& dlogits);
  void zero_grad();

  std::vector<Param*> params();
  std::vector<const Param*> params() const;
  std::size_t parameter_count() const;

  void save(const std::string& path) const;
  static Model load(const std::string& path);
  std::vector<std::uint8_t> encode() const;
  static Model decode(const std::vector<std::uint8_t>& bytes);

 private:
  ModelSpec spec_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

std::size_t parameter_count(const ModelSpec& spec);

void softmax_rows(std::span<const float> logits, std::size_t cols, std::span<float> out);

struct LossResult {
  double value = 0.0;       // mean over rows
  std::vector<float> grad;  // dL/dlogits, same shape as the logits
};

// KL(target || softmax(student)) averaged over rows. student holds logits;
// log-probabilities are accepted as-is. log q is floored at ln(1e-12).
LossResult kl_divergence(std::span<const float> student, std::span<const float> targets, std::size_t cols);
// -sum t log softmax(logits), averaged over rows (soft or smoothed hard targets).
LossResult soft_cross_entropy(std::span<const float> logits, std::span<const float> targets, std::size_t cols);

class SgdMomentum {
 public:
  SgdMomentum(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}
  void step(const std::vector<Param*>& params, double lr);

 private:
  double momentum_;
  double weight_decay_;
  std::vector<std::vector<float>> velocity_;
};

// Serves a trained model as a teacher.
class ModelTeacher final : public Teacher {
 public:
  ModelTeacher(std::shared_ptr<const Model> model, std::string name);

  std::size_t num_classes() const override { return model_->spec().num_classes; }
  ImageDims input_dims() const override { return model_->spec().input; }
  std::string identity() const override { return name_; }

 protected:
  ProbMatrix predict_batch(std::span<const Image> batch) const override;

 private:
  std::shared_ptr<const Model> model_;
  std::string name_;
};

}  // namespace dr::nn
