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

#include "dr/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dr/bytes.hpp"
#include "dr/errors.hpp"

namespace dr::nn {
namespace {

constexpr char kCheckpointMagic[4] = {'D', 'R', 'C', 'K'};
constexpr std::uint16_t kCheckpointVersion = 1;

void init_uniform(Param& p, double bound, SeededRng& rng) {
  for (auto& v : p.value) v = static_cast<float>(rng.uniform(-bound, bound));
}

}  // namespace

Tensor images_to_tensor(std::span<const Image* const> images) {
  if (images.empty()) return {};
  const auto& first = *images.front();
  Tensor t(images.size(), first.channels, first.height, first.width);
  const std::size_t hw = first.pixel_count();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& img = *images[i];
    if (!img.same_dims(first)) throw ValidationError("batch images differ in size");
    float* dst = t.sample(i);
    for (std::size_t p = 0; p < hw; ++p) {
      for (std::size_t c = 0; c < img.channels; ++c) {
        dst[c * hw + p] = (static_cast<float>(img.data[p * img.channels + c]) / 255.f - 0.5f) * 4.f;
      }
    }
  }
  return t;
}

Tensor images_to_tensor(std::span<const Image> images) {
  std::vector<const Image*> ptrs;
  ptrs.reserve(images.size());
  for (const auto& img : images) ptrs.push_back(&img);
  return images_to_tensor(std::span<const Image* const>(ptrs));
}

// ---- Conv3x3 ---------------------------------------------------------------

Conv3x3::Conv3x3(std::size_t in_channels, std::size_t out_channels)
    : in_(in_channels), out_(out_channels), weight_("weight", out_channels * in_channels * 9, true),
      bias_("bias", out_channels, false) {}

// Column matrix [in * 9][n * H * W] of a zero-padded 3x3 neighbourhood.
std::vector<float> Conv3x3::im2col(const Tensor& x) const {
  const std::size_t H = x.h, W = x.w, HW = H * W, cols = x.n * HW;
  std::vector<float> col(in_ * 9 * cols, 0.f);
  for (std::size_t ci = 0; ci < in_; ++ci) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        float* row = col.data() + ((ci * 9) + ky * 3 + kx) * cols;
        const long dy = ky - 1, dx = kx - 1;
        const std::size_t x_lo = dx < 0 ? 1 : 0;
        const std::size_t x_hi = dx > 0 ? W - 1 : W;
        for (std::size_t n = 0; n < x.n; ++n) {
          const float* src = x.sample(n) + ci * HW;
          float* dst = row + n * HW;
          for (std::size_t yy = 0; yy < H; ++yy) {
            const long sy = static_cast<long>(yy) + dy;
            if (sy < 0 || sy >= static_cast<long>(H)) continue;
            const float* srow = src + sy * W + dx;
            float* drow = dst + yy * W;
            for (std::size_t xx = x_lo; xx < x_hi; ++xx) drow[xx] = srow[xx];
          }
        }
      }
    }
  }
  return col;
}

Tensor Conv3x3::forward(const Tensor& x) const {
  if (x.c != in_) throw ValidationError("conv3x3: expected " + std::to_string(in_) + " input channels");
  const std::size_t HW = x.h * x.w, cols = x.n * HW, K = in_ * 9;
  const auto col = im2col(x);
  std::vector<float> acc(cols);
  Tensor y(x.n, out_, x.h, x.w);
  for (std::size_t co = 0; co < out_; ++co) {
    std::fill(acc.begin(), acc.end(), bias_.value[co]);
    const float* wrow = &weight_.value[co * K];
    for (std::size_t r = 0; r < K; ++r) {
      const float wv = wrow[r];
      const float* crow = col.data() + r * cols;
      for (std::size_t j = 0; j < cols; ++j) acc[j] += wv * crow[j];
    }
    for (std::size_t n = 0; n < x.n; ++n) std::copy_n(acc.data() + n * HW, HW, y.sample(n) + co * HW);
  }
  return y;
}

Tensor Conv3x3::backward(const Tensor& x, const Tensor&, const Tensor& dy) {
  const std::size_t H = x.h, W = x.w, HW = H * W, cols = x.n * HW, K = in_ * 9;
  const auto col = im2col(x);
  // dy regrouped as [out][n * HW].
  std::vector<float> g(out_ * cols);
  for (std::size_t n = 0; n < x.n; ++n) {
    for (std::size_t co = 0; co < out_; ++co) std::copy_n(dy.sample(n) + co * HW, HW, g.data() + co * cols + n * HW);
  }
  std::vector<float> dcol(K * cols, 0.f);
  for (std::size_t co = 0; co < out_; ++co) {
    const float* grow = g.data() + co * cols;
    double bsum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) bsum += grow[j];
    bias_.grad[co] += static_cast<float>(bsum);
    const float* wrow = &weight_.value[co * K];
    float* gk = &weight_.grad[co * K];
    for (std::size_t r = 0; r < K; ++r) {
      const float* crow = col.data() + r * cols;
      float part[8] = {};
      std::size_t j = 0;
      for (; j + 8 <= cols; j += 8) {
        for (int q = 0; q < 8; ++q) part[q] += grow[j + q] * crow[j + q];
      }
      double dot = 0.0;
      for (; j < cols; ++j) dot += static_cast<double>(grow[j]) * crow[j];
      for (float v : part) dot += v;
      gk[r] += static_cast<float>(dot);
      const float wv = wrow[r];
      float* drow = dcol.data() + r * cols;
      for (std::size_t jj = 0; jj < cols; ++jj) drow[jj] += wv * grow[jj];
    }
  }
  Tensor dx(x.n, x.c, H, W);
  for (std::size_t ci = 0; ci < in_; ++ci) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const float* row = dcol.data() + ((ci * 9) + ky * 3 + kx) * cols;
        const long dyo = ky - 1, dxo = kx - 1;
        const std::size_t x_lo = dxo < 0 ? 1 : 0;
        const std::size_t x_hi = dxo > 0 ? W - 1 : W;
        for (std::size_t n = 0; n < x.n; ++n) {
          float* dst = dx.sample(n) + ci * HW;
          const float* src = row + n * HW;
          for (std::size_t yy = 0; yy < H; ++yy) {
            const long sy = static_cast<long>(yy) + dyo;
            if (sy < 0 || sy >= static_cast<long>(H)) continue;
            float* drow = dst + sy * W + dxo;
            const float* srow = src + yy * W;
            for (std::size_t xx = x_lo; xx < x_hi; ++xx) drow[xx] += srow[xx];
          }
        }
      }
    }
  }
  return dx;
}

// ---- Dense -----------------------------------------------------------------

Dense::Dense(std::size_t in_features, std::size_t out_features)
    : in_(in_features), out_(out_features), weight_("weight", in_features * out_features, true),
      bias_("bias", out_features, false) {}

Tensor Dense::forward(const Tensor& x) const {
  if (x.sample_size() != in_) {
    throw ValidationError("dense: expected " + std::to_string(in_) + " features, got " + std::to_string(x.sample_size()));
  }
  Tensor y(x.n, out_, 1, 1);
  for (std::size_t n = 0; n < x.n; ++n) {
    const float* in = x.sample(n);
    float* out = y.sample(n);
    for (std::size_t o = 0; o < out_; ++o) {
      const float* wrow = &weight_.value[o * in_];
      float acc = 0.f;
      for (std::size_t i = 0; i < in_; ++i) acc += wrow[i] * in[i];
      out[o] = acc + bias_.value[o];
    }
  }
  return y;
}

Tensor Dense::backward(const Tensor& x, const Tensor&, const Tensor& dy) {
  Tensor dx(x.n, x.c, x.h, x.w);
  for (std::size_t n = 0; n < x.n; ++n) {
    const float* in = x.sample(n);
    const float* g = dy.sample(n);
    float* din = dx.sample(n);
    for (std::size_t o = 0; o < out_; ++o) {
      const float go = g[o];
      bias_.grad[o] += go;
      const float* wrow = &weight_.value[o * in_];
      float* gw = &weight_.grad[o * in_];
      for (std::size_t i = 0; i < in_; ++i) {
        gw[i] += go * in[i];
        din[i] += go * wrow[i];
      }
    }
  }
  return dx;
}

// ---- Elementwise and pooling ------------------------------------------------

Tensor Relu::forward(const Tensor& x) const {
  Tensor y = x;
  for (auto& v : y.data) v = v > 0.f ? v : 0.f;
  return y;
}

Tensor Relu::backward(const Tensor& x, const Tensor&, const Tensor& dy) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.data.size(); ++i) {
    if (!(x.data[i] > 0.f)) dx.data[i] = 0.f;
  }
  return dx;
}

Tensor AvgPool2::forward(const Tensor& x) const {
  const std::size_t oh = x.h / 2, ow = x.w / 2;
  Tensor y(x.n, x.c, oh, ow);
  for (std::size_t n = 0; n < x.n; ++n) {
    for (std::size_t c = 0; c < x.c; ++c) {
      const float* in = x.sample(n) + c * x.h * x.w;
      float* out = y.sample(n) + c * oh * ow;
      for (std::size_t yy = 0; yy < oh; ++yy) {
        for (std::size_t xx = 0; xx < ow; ++xx) {
          const float* p = in + 2 * yy * x.w + 2 * xx;
          out[yy * ow + xx] = 0.25f * (p[0] + p[1] + p[x.w] + p[x.w + 1]);
        }
      }
    }
  }
  return y;
}

Tensor AvgPool2::backward(const Tensor& x, const Tensor& y, const Tensor& dy) {
  Tensor dx(x.n, x.c, x.h, x.w);
  for (std::size_t n = 0; n < x.n; ++n) {
    for (std::size_t c = 0; c < x.c; ++c) {
      const float* g = dy.sample(n) + c * y.h * y.w;
      float* d = dx.sample(n) + c * x.h * x.w;
      for (std::size_t yy = 0; yy < y.h; ++yy) {
        for (std::size_t xx = 0; xx < y.w; ++xx) {
          const float v = 0.25f * g[yy * y.w + xx];
          float* p = d + 2 * yy * x.w + 2 * xx;
          p[0] += v;
          p[1] += v;
          p[x.w] += v;
          p[x.w + 1] += v;
        }
      }
    }
  }
  return dx;
}

Tensor GlobalAvgPool::forward(const Tensor& x) const {
  Tensor y(x.n, x.c, 1, 1);
  const std::size_t hw = x.h * x.w;
  for (std::size_t n = 0; n < x.n; ++n) {
    for (std::size_t c = 0; c < x.c; ++c) {
      const float* in = x.sample(n) + c * hw;
      double acc = 0.0;
      for (std::size_t i = 0; i < hw; ++i) acc += in[i];
      y.sample(n)[c] = static_cast<float>(acc / static_cast<double>(hw));
    }
  }
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& x, const Tensor&, const Tensor& dy) {
  Tensor dx(x.n, x.c, x.h, x.w);
  const std::size_t hw = x.h * x.w;
  for (std::size_t n = 0; n < x.n; ++n) {
    for (std::size_t c = 0; c < x.c; ++c) {
      const float v = dy.sample(n)[c] / static_cast<float>(hw);
      float* d = dx.sample(n) + c * hw;
      std::fill(d, d + hw, v);
    }
  }
  return dx;
}

// ---- Model -----------------------------------------------------------------

namespace {

std::vector<std::unique_ptr<Layer>> build_layers(const ModelSpec& s) {
  std::vector<std::unique_ptr<Layer>> layers;
  const std::size_t C = s.input.channels, H = s.input.height, W = s.input.width;
  const std::size_t K = s.num_classes, w = s.width;
  if (K == 0 || H == 0 || W == 0 || w == 0) throw ValidationError("model spec has a zero dimension");
  if (s.arch == "linear") {
    layers.push_back(std::make_unique<Dense>(C * H * W, K));
  } else if (s.arch == "mlp") {
    layers.push_back(std::make_unique<Dense>(C * H * W, w));
    layers.push_back(std::make_unique<Relu>());
    layers.push_back(std::make_unique<Dense>(w, K));
  } else if (s.arch == "student-s") {
    // One conv layer and a dense head: deliberately low capacity.
    layers.push_back(std::make_unique<Conv3x3>(C, w));
    layers.push_back(std::make_unique<Relu>());
    layers.push_back(std::make_unique<AvgPool2>());
    layers.push_back(std::make_unique<Dense>(w * (H / 2) * (W / 2), K));
  } else if (s.arch == "teacher-l") {
    layers.push_back(std::make_unique<Conv3x3>(C, w));
    layers.push_back(std::make_unique<Relu>());
    layers.push_back(std::make_unique<AvgPool2>());
    layers.push_back(std::make_unique<Conv3x3>(w, 2 * w));
    layers.push_back(std::make_unique<Relu>());
    layers.push_back(std::make_unique<AvgPool2>());
    layers.push_back(std::make_unique<Conv3x3>(2 * w, 4 * w));
    layers.push_back(std::make_unique<Relu>());
    layers.push_back(std::make_unique<Dense>(4 * w * (H / 4) * (W / 4), K));
  } else {
    throw ValidationError("unknown architecture '" + s.arch + "'");
  }
  return layers;
}

}  // namespace

Model::Model(ModelSpec spec, std::uint64_t init_seed) : spec_(std::move(spec)), layers_(build_layers(spec_)) {
  SeededRng rng(init_seed, 0x1417);
  for (auto& layer : layers_) {
    auto ps = layer->params();
    if (ps.empty()) continue;
    // Kaiming-uniform on fan-in; biases start at zero.
    const std::size_t fan_in = ps[0]->value.size() / ps[1]->value.size();
    init_uniform(*ps[0], std::sqrt(6.0 / static_cast<double>(fan_in)), rng);
  }
}

Tensor Model::logits(const Tensor& x) const {
  Tensor cur = x;
  for (const auto& layer : layers_) cur = layer->forward(cur);
  return cur;
}

ProbMatrix Model::predict_probs(const Tensor& x) const {
  const Tensor z = logits(x);
  ProbMatrix p(z.n, spec_.num_classes);
  softmax_rows(z.data, spec_.num_classes, p.values);
  return p;
}

std::vector<Tensor> Model::forward_trace(const Tensor& x) const {
  std::vector<Tensor> trace;
  trace.reserve(layers_.size() + 1);
  trace.push_back(x);
  for (const auto& layer : layers_) trace.push_back(layer->forward(trace.back()));
  return trace;
}

void Model::backward(const std::vector<Tensor>& trace, const Tensor& dlogits) {
  Tensor g = dlogits;
  for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(trace[i], trace[i + 1], g);
}

void Model::zero_grad() {
  for (auto* p : params()) std::fill(p->grad.begin(), p->grad.end(), 0.f);
}

std::vector<Param*> Model::params() {
  std::vector<Param*> out;
  for (auto& layer : layers_) {
    for (auto* p : layer->params()) out.push_back(p);
  }
  return out;
}

std::vector<const Param*> Model::params() const {
  std::vector<const Param*> out;
  for (const auto& layer : layers_) {
    for (auto* p : const_cast<Layer&>(*layer).params()) out.push_back(p);
  }
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : params()) n += p->value.size();
  return n;
}

std::size_t parameter_count(const ModelSpec& spec) { return Model(spec, 0).parameter_count(); }

std::vector<std::uint8_t> Model::encode() const {
  std::vector<std::uint8_t> out;
  bytes::Writer w(out);
  w.raw(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(kCheckpointMagic), 4));
  w.u16(kCheckpointVersion);
  w.str16(spec_.arch);
  w.u16(spec_.input.height);
  w.u16(spec_.input.width);
  w.u8(spec_.input.channels);
  w.u16(spec_.num_classes);
  w.u16(spec_.width);
  const auto ps = params();
  w.u32(static_cast<std::uint32_t>(ps.size()));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    w.str16(std::to_string(i) + "." + ps[i]->name);
    w.u32(static_cast<std::uint32_t>(ps[i]->value.size()));
    for (float v : ps[i]->value) w.f32(v);
  }
  return out;
}

Model Model::decode(const std::vector<std::uint8_t>& data) {
  bytes::Reader r(data);
  if (data.size() < 4 || !std::equal(data.begin(), data.begin() + 4, kCheckpointMagic)) {
    throw DecodeError("bad checkpoint magic");
  }
  r.skip(4);
  if (r.u16() != kCheckpointVersion) throw DecodeError("unsupported checkpoint version");
  ModelSpec spec;
  spec.arch = r.str16();
  spec.input.height = r.u16();
  spec.input.width = r.u16();
  spec.input.channels = r.u8();
  spec.num_classes = r.u16();
  spec.width = r.u16();
  Model m(spec, 0);
  auto ps = m.params();
  if (r.u32() != ps.size()) throw DecodeError("checkpoint tensor count does not match architecture");
  for (auto* p : ps) {
    const auto name = r.str16();
    const auto numel = r.u32();
    if (numel != p->value.size()) throw DecodeError("checkpoint tensor '" + name + "' has wrong size");
    for (auto& v : p->value) v = r.f32();
  }
  if (r.remaining() != 0) throw DecodeError("trailing bytes in checkpoint");
  return m;
}

void Model::save(const std::string& path) const { bytes::write_file(path, encode()); }
Model Model::load(const std::string& path) { return decode(bytes::read_file(path)); }

// ---- Losses and optimizer ---------------------------------------------------

void softmax_rows(std::span<const float> logits, std::size_t cols, std::span<float> out) {
  for (std::size_t r = 0; r * cols < logits.size(); ++r) {
    const float* z = logits.data() + r * cols;
    float* p = out.data() + r * cols;
    const float mx = *std::max_element(z, z + cols);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) sum += std::exp(static_cast<double>(z[j] - mx));
    for (std::size_t j = 0; j < cols; ++j) p[j] = static_cast<float>(std::exp(static_cast<double>(z[j] - mx)) / sum);
  }
}

namespace {

// Row-wise log-softmax in double.
std::vector<double> log_softmax(std::span<const float> z, std::size_t cols) {
  std::vector<double> out(z.size());
  for (std::size_t r = 0; r * cols < z.size(); ++r) {
    const float* row = z.data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) sum += std::exp(row[j] - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = row[j] - lse;
  }
  return out;
}

}  // namespace

LossResult kl_divergence(std::span<const float> student, std::span<const float> targets, std::size_t cols) {
  if (student.size() != targets.size() || cols == 0 || student.size() % cols != 0) {
    throw ValidationError("kl_divergence: shape mismatch");
  }
  const std::size_t rows = student.size() / cols;
  constexpr double kLogFloor = -27.631021115928547;  // ln(1e-12)
  const auto logq = log_softmax(student, cols);
  LossResult res;
  res.grad.resize(student.size());
  double total = 0.0;
  for (std::size_t i = 0; i < student.size(); ++i) {
    const double t = targets[i];
    if (t > 0.0) total += t * (std::log(t) - std::max(logq[i], kLogFloor));
    res.grad[i] = static_cast<float>((std::exp(logq[i]) - t) / static_cast<double>(rows));
  }
  res.value = total / static_cast<double>(rows);
  return res;
}

LossResult soft_cross_entropy(std::span<const float> logits, std::span<const float> targets, std::size_t cols) {
  if (logits.size() != targets.size() || cols == 0 || logits.size() % cols != 0) {
    throw ValidationError("soft_cross_entropy: shape mismatch");
  }
  const std::size_t rows = logits.size() / cols;
  const auto logq = log_softmax(logits, cols);
  LossResult res;
  res.grad.resize(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    total -= targets[i] * logq[i];
    res.grad[i] = static_cast<float>((std::exp(logq[i]) - targets[i]) / static_cast<double>(rows));
  }
  res.value = total / static_cast<double>(rows);
  return res;
}

void SgdMomentum::step(const std::vector<Param*>& params, double lr) {
  if (velocity_.size() != params.size()) {
    velocity_.clear();
    for (const auto* p : params) velocity_.emplace_back(p->value.size(), 0.f);
  }
  const auto mu = static_cast<float>(momentum_);
  const auto step = static_cast<float>(lr);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    auto& v = velocity_[k];
    const float wd = p.decay ? static_cast<float>(weight_decay_) : 0.f;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      v[i] = mu * v[i] + p.grad[i] + wd * p.value[i];
      p.value[i] -= step * v[i];
    }
  }
}

ModelTeacher::ModelTeacher(std::shared_ptr<const Model> model, std::string name)
    : model_(std::move(model)), name_(std::move(name)) {
  if (!model_) throw ValidationError("model teacher needs a model");
}

ProbMatrix ModelTeacher::predict_batch(std::span<const Image> batch) const {
  return model_->predict_probs(images_to_tensor(batch));
}

}  // namespace dr::nn
