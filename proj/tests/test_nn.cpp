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
#include <filesystem>
#include <functional>
#include <memory>

#include "dr/errors.hpp"
#include "dr/nn.hpp"
#include "test_util.hpp"

namespace dr::nn {
namespace {

Tensor random_tensor(std::size_t n, std::size_t c, std::size_t h, std::size_t w, SeededRng& rng, float margin = 0.f) {
  Tensor t(n, c, h, w);
  for (auto& v : t.data) {
    float x = static_cast<float>(rng.uniform() * 2.0 - 1.0);
    // Keep relu inputs off the kink so finite differences stay smooth.
    if (margin > 0.f && std::abs(x) < margin) x = x < 0 ? -margin : margin;
    v = x;
  }
  return t;
}

// Scalar probe L = sum r_i y_i in double.
double probe(const Tensor& y, const std::vector<double>& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.data.size(); ++i) s += r[i] * y.data[i];
  return s;
}

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-30});
}

// Central differences of the probe w.r.t. every entry of `values`.
std::vector<double> numeric_grad(std::vector<float>& values, const std::function<double()>& f, float eps) {
  std::vector<double> g(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float keep = values[i];
    values[i] = keep + eps;
    const double up = f();
    values[i] = keep - eps;
    const double down = f();
    values[i] = keep;
    g[i] = (up - down) / (2.0 * static_cast<double>(eps));
  }
  return g;
}

void check_layer(Layer& layer, Tensor x, float eps = 1e-2f) {
  SeededRng rng(5, 5);
  const Tensor y = layer.forward(x);
  std::vector<double> r(y.data.size());
  for (auto& v : r) v = rng.uniform() * 2.0 - 1.0;
  Tensor dy = y;
  for (std::size_t i = 0; i < r.size(); ++i) dy.data[i] = static_cast<float>(r[i]);
  for (auto* p : layer.params()) std::fill(p->grad.begin(), p->grad.end(), 0.f);
  const Tensor dx = layer.backward(x, y, dy);

  auto f = [&] { return probe(layer.forward(x), r); };
  const auto ndx = numeric_grad(x.data, f, eps);
  std::vector<double> adx(dx.data.begin(), dx.data.end());
  EXPECT_LT(rel_err(adx, ndx), 1e-4) << layer.kind() << " dx";
  for (auto* p : layer.params()) {
    const auto np = numeric_grad(p->value, f, eps);
    std::vector<double> ap(p->grad.begin(), p->grad.end());
    EXPECT_LT(rel_err(ap, np), 1e-4) << layer.kind() << " " << p->name;
  }
}

void randomize(Layer& layer, SeededRng& rng) {
  for (auto* p : layer.params()) {
    for (auto& v : p->value) v = static_cast<float>(rng.uniform() - 0.5);
  }
}

TEST(GradCheck, Conv3x3) {
  SeededRng rng(1, 1);
  for (auto [n, ci, co, h, w] : {std::array<std::size_t, 5>{2, 3, 4, 5, 6}, {1, 1, 2, 3, 3}, {3, 2, 3, 1, 4}}) {
    Conv3x3 conv(ci, co);
    randomize(conv, rng);
    check_layer(conv, random_tensor(n, ci, h, w, rng));
  }
}

TEST(GradCheck, Dense) {
  SeededRng rng(2, 2);
  Dense d(7, 5);
  randomize(d, rng);
  check_layer(d, random_tensor(4, 7, 1, 1, rng));
  Dense flat(12, 3);  // consumes a flattened [c][h][w] sample
  randomize(flat, rng);
  check_layer(flat, random_tensor(2, 3, 2, 2, rng));
}

TEST(GradCheck, Relu) {
  SeededRng rng(3, 3);
  Relu relu;
  check_layer(relu, random_tensor(3, 2, 4, 4, rng, 0.05f));
}

TEST(GradCheck, AvgPool2) {
  SeededRng rng(4, 4);
  AvgPool2 pool;
  check_layer(pool, random_tensor(2, 3, 4, 6, rng));
  check_layer(pool, random_tensor(1, 2, 5, 3, rng));  // odd sizes
}

TEST(GradCheck, GlobalAvgPool) {
  SeededRng rng(6, 6);
  GlobalAvgPool gap;
  check_layer(gap, random_tensor(3, 4, 3, 5, rng));
}

TEST(GradCheck, WholeModelsThroughKl) {
  for (const char* arch : {"linear", "mlp", "student-s", "teacher-l"}) {
    Model m({arch, {8, 8, 1}, 4, 4}, 3);
    SeededRng rng(7, 7);
    Tensor x = random_tensor(3, 1, 8, 8, rng);
    std::vector<float> targets(3 * 4);
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0.0;
      std::vector<double> raw(4);
      for (auto& v : raw) s += (v = rng.uniform() + 0.1);
      for (std::size_t j = 0; j < 4; ++j) targets[i * 4 + j] = static_cast<float>(raw[j] / s);
    }
    auto loss = [&] {
      const auto lg = m.logits(x);
      return kl_divergence(lg.data, targets, 4).value;
    };
    m.zero_grad();
    const auto trace = m.forward_trace(x);
    const auto lr = kl_divergence(trace.back().data, targets, 4);
    Tensor dl = trace.back();
    dl.data = lr.grad;
    m.backward(trace, dl);
    // Wiring check. Float activations through stacked relus limit this to 1e-3;
    // the per-layer checks above carry the tight bound.
    for (auto* p : m.params()) {
      const auto np = numeric_grad(p->value, loss, 5e-4f);
      std::vector<double> ap(p->grad.begin(), p->grad.end());
      EXPECT_LT(rel_err(ap, np), 1e-3) << arch << " " << p->name;
    }
  }
}

TEST(Kl, Example) {
  // Logits whose softmax is [0.9, 0.1].
  const std::vector<float> student{std::log(0.9f), std::log(0.1f)};
  const std::vector<float> target{0.5f, 0.5f};
  const double expect = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
  EXPECT_NEAR(kl_divergence(student, target, 2).value, expect, 1e-6);
  EXPECT_NEAR(expect, 0.5108, 1e-4);
}

TEST(Kl, NonNegativeAndZeroAtEquality) {
  SeededRng rng(8, 8);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t C = 2 + rng.below(9);
    std::vector<float> logits(C), target(C);
    for (auto& v : logits) v = static_cast<float>(rng.uniform() * 8 - 4);
    double s = 0.0;
    for (auto& v : target) s += (v = static_cast<float>(rng.uniform()));
    for (auto& v : target) v = static_cast<float>(v / s);
    ASSERT_GE(kl_divergence(logits, target, C).value, -1e-9);
    std::vector<float> p(C);
    softmax_rows(logits, C, p);
    ASSERT_NEAR(kl_divergence(logits, p, C).value, 0.0, 1e-6);
  }
}

TEST(Kl, GradientMatchesFiniteDifferences) {
  SeededRng rng(9, 9);
  std::vector<float> logits(2 * 5), target(2 * 5);
  for (auto& v : logits) v = static_cast<float>(rng.uniform() * 2 - 1);
  for (std::size_t i = 0; i < 2; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 5; ++j) s += (target[i * 5 + j] = static_cast<float>(rng.uniform()));
    for (std::size_t j = 0; j < 5; ++j) target[i * 5 + j] = static_cast<float>(target[i * 5 + j] / s);
  }
  const auto res = kl_divergence(logits, target, 5);
  const auto num = numeric_grad(logits, [&] { return kl_divergence(logits, target, 5).value; }, 1e-2f);
  EXPECT_LT(rel_err(std::vector<double>(res.grad.begin(), res.grad.end()), num), 1e-4);
  const auto ce = soft_cross_entropy(logits, target, 5);
  const auto cnum = numeric_grad(logits, [&] { return soft_cross_entropy(logits, target, 5).value; }, 1e-2f);
  EXPECT_LT(rel_err(std::vector<double>(ce.grad.begin(), ce.grad.end()), cnum), 1e-4);
}

TEST(Kl, UnderflowIsFinite) {
  const std::vector<float> logits{200.f, -200.f};
  const std::vector<float> target{0.5f, 0.5f};
  const auto r = kl_divergence(logits, target, 2);
  EXPECT_TRUE(std::isfinite(r.value));
  // Floor at 1e-12: 0.5 ln(0.5) - 0.5 ln(1e-12) + 0.5 ln 0.5 - 0.5 ln 1
  EXPECT_NEAR(r.value, std::log(0.5) - 0.5 * std::log(1e-12), 1e-4);
}

TEST(Softmax, RowsSumToOne) {
  SeededRng rng(10, 10);
  Model m({"student-s", {8, 8, 3}, 7, 4}, 1);
  const auto p = m.predict_probs(random_tensor(5, 3, 8, 8, rng));
  for (std::size_t i = 0; i < p.rows; ++i) {
    double s = 0.0;
    for (float v : p.row(i)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-5);
  }
}

TEST(ModelSpecTest, ParameterCountIsPure) {
  for (const char* arch : {"linear", "mlp", "student-s", "teacher-l"}) {
    ModelSpec spec{arch, {16, 16, 1}, 10, 8};
    Model a(spec, 1), b(spec, 2);
    EXPECT_EQ(a.parameter_count(), b.parameter_count());
    EXPECT_EQ(a.parameter_count(), parameter_count(spec));
  }
  EXPECT_EQ(parameter_count({"linear", {16, 16, 1}, 10, 8}), 256u * 10 + 10);
  EXPECT_EQ(parameter_count({"mlp", {4, 4, 1}, 3, 5}), 16u * 5 + 5 + 5 * 3 + 3);
  EXPECT_LT(parameter_count({"student-s", {16, 16, 1}, 10, 8}), parameter_count({"teacher-l", {16, 16, 1}, 10, 8}));
  EXPECT_THROW(Model({"resnet", {16, 16, 1}, 10, 8}, 1), ValidationError);
}

TEST(Checkpoint, RoundtripBitExact) {
  Model m({"teacher-l", {8, 8, 3}, 5, 4}, 9);
  const auto path = (std::filesystem::temp_directory_path() / "dr_test_model.ckpt").string();
  m.save(path);
  const auto back = Model::load(path);
  EXPECT_EQ(back.spec(), m.spec());
  const auto pa = m.params();
  const auto pb = back.params();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value) << pa[i]->name;
  EXPECT_EQ(back.encode(), m.encode());
  std::filesystem::remove(path);
  auto bytes = m.encode();
  bytes.resize(bytes.size() - 3);
  EXPECT_THROW(Model::decode(bytes), DecodeError);
}

TEST(Sgd, MomentumAndDecayOracle) {
  Param w("w", 2, true), b("b", 1, false);
  w.value = {1.f, -2.f};
  b.value = {0.5f};
  SgdMomentum opt(0.9, 0.1);
  double v0 = 0, v1 = 0, vb = 0, x0 = 1, x1 = -2, xb = 0.5;
  for (int step = 0; step < 3; ++step) {
    w.grad = {0.3f, -0.1f};
    b.grad = {0.2f};
    opt.step({&w, &b}, 0.5);
    v0 = 0.9 * v0 + 0.3 + 0.1 * x0;
    v1 = 0.9 * v1 - 0.1 + 0.1 * x1;
    vb = 0.9 * vb + 0.2;
    x0 -= 0.5 * v0;
    x1 -= 0.5 * v1;
    xb -= 0.5 * vb;
  }
  EXPECT_NEAR(w.value[0], x0, 1e-6);
  EXPECT_NEAR(w.value[1], x1, 1e-6);
  EXPECT_NEAR(b.value[0], xb, 1e-6);
}

TEST(ModelTeacherTest, PredictsModelProbs) {
  auto m = std::make_shared<Model>(ModelSpec{"mlp", {6, 6, 1}, 3, 4}, 2);
  ModelTeacher t(m, "mlp-teacher");
  SeededRng rng(3, 3);
  std::vector<Image> imgs{testing::random_image(6, 6, 1, rng), testing::random_image(6, 6, 1, rng)};
  const auto got = t.predict(imgs);
  const auto expect = m->predict_probs(images_to_tensor(imgs));
  EXPECT_EQ(got.values, expect.values);
  EXPECT_EQ(t.identity(), "mlp-teacher");
}

}  // namespace
}  // namespace dr::nn
