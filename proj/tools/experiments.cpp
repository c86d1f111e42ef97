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

#include "experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <thread>

#include "dr/errors.hpp"
#include "dr/reinforcer.hpp"

namespace dr::exp {
namespace {

using clock_type = std::chrono::steady_clock;

constexpr ImageDims kDims{16, 16, 1};
constexpr std::uint64_t kProtoSeed = 7;
constexpr std::uint64_t kTeacherSeed = 99;
constexpr std::uint64_t kStoreSeed = 5;
constexpr double kCropScaleMin = 0.35;
constexpr std::uint16_t kCurriculumWidth = 4;

CriterionResult criterion(int id, std::string title) {
  CriterionResult r;
  r.id = id;
  r.title = std::move(title);
  return r;
}

LoaderOptions loader_options(ImageDims out) {
  LoaderOptions o;
  o.out = out;
  return o;
}

double since(clock_type::time_point t0) { return std::chrono::duration<double>(clock_type::now() - t0).count(); }

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string pct(double v) { return fmt(100.0 * v, 2); }

std::string yes_no(bool b) { return b ? "yes" : "no"; }

Metric metric(std::string name, double value, std::string threshold, bool pass) {
  return {std::move(name), value, std::move(threshold), pass};
}

void finish(CriterionResult& r, clock_type::time_point t0) {
  r.pass = std::all_of(r.metrics.begin(), r.metrics.end(), [](const Metric& m) { return m.pass; });
  r.seconds = since(t0);
}

}  // namespace

std::string fmt(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

DeskOptions DeskOptions::full() {
  DeskOptions o;
  o.workers = std::max(1u, std::thread::hardware_concurrency());
  return o;
}

DeskOptions DeskOptions::quick_run() {
  DeskOptions o = full();
  o.quick = true;
  o.train_size = 1000;
  o.val_size = 500;
  o.teacher_epochs = 12;
  o.student_epochs = 8;
  o.timing_epochs = 5;
  o.seeds = 2;
  o.samples = 8;
  o.samples_large = 32;
  o.library_size = 20;
  return o;
}

std::string RunKey::str() const {
  std::ostringstream s;
  s << objective_name(objective) << "/seed=" << seed << "/n=" << samples << "/cur=" << curriculum << "/w=" << width
    << "/mix=" << mixing << "/lib=" << library << "/ep=" << epochs;
  return s.str();
}

Desk::Desk(DeskOptions opts, std::ostream* log) : opts_(std::move(opts)), log_(log), gen_([] {
  SynthSpec s;
  s.seed = kProtoSeed;
  return s;
}()) {
  train_ = gen_.make_dataset(opts_.train_size, 1);
  val_ = gen_.make_dataset(opts_.val_size, 2);
}

AugmentationPolicy Desk::policy(bool mixing) const {
  auto p = AugmentationPolicy::for_variant(mixing ? Variant::RrcMixing : Variant::Rrc);
  p.crop_scale.first = kCropScaleMin;
  return p;
}

const nn::ModelTeacher& Desk::teacher() {
  if (teacher_) return *teacher_;
  const std::string tag = "teacher-" + std::to_string(opts_.train_size) + "-" + std::to_string(opts_.teacher_epochs);
  const auto path = opts_.cache_dir.empty() ? std::string{} : opts_.cache_dir + "/" + tag + ".ckpt";
  if (!path.empty() && std::filesystem::exists(path)) {
    teacher_model_ = std::make_shared<nn::Model>(nn::Model::load(path));
    if (log_) *log_ << "teacher: loaded " << path << "\n";
  } else {
    const auto t0 = clock_type::now();
    teacher_model_ = std::make_shared<nn::Model>(nn::ModelSpec{"teacher-l", kDims, 10, 8}, kTeacherSeed);
    TrainConfig cfg;
    cfg.epochs = opts_.teacher_epochs;
    cfg.label_smoothing = 0.0;
    cfg.eval_every_epoch = false;
    ErmSource src(train_, policy(), kDims, kTeacherSeed, cfg.label_smoothing);
    train(*teacher_model_, src, cfg);
    if (log_) *log_ << "teacher: trained " << opts_.teacher_epochs << " epochs in " << fmt(since(t0), 1) << " s\n";
    if (!path.empty()) {
      std::filesystem::create_directories(opts_.cache_dir);
      teacher_model_->save(path);
    }
  }
  teacher_ = std::make_unique<nn::ModelTeacher>(teacher_model_, "desk-teacher-l");
  return *teacher_;
}

double Desk::teacher_accuracy() { return (teacher(), evaluate(*teacher_model_, val_)); }

const ReinforcementStore& Desk::store(std::size_t samples, bool mixing) {
  const std::string tag = "store-" + std::to_string(opts_.train_size) + "-" + std::to_string(opts_.teacher_epochs) +
                          "-n" + std::to_string(samples) + (mixing ? "-mix" : "");
  if (auto it = stores_.find(tag); it != stores_.end()) return *it->second;
  const auto path = opts_.cache_dir.empty() ? std::string{} : opts_.cache_dir + "/" + tag + ".drst";
  auto& slot = stores_[tag];
  if (!path.empty() && std::filesystem::exists(path)) {
    slot = std::make_unique<ReinforcementStore>(read_store(path));
    if (log_) *log_ << "store: loaded " << path << "\n";
    return *slot;
  }
  ReinforceJob job;
  job.dataset = &train_;
  job.teacher = &teacher();
  job.policy = policy(mixing);
  job.samples_per_image = samples;
  job.seed = kStoreSeed;
  job.workers = opts_.workers;
  ReinforceStats stats;
  slot = std::make_unique<ReinforcementStore>(reinforce(job, nullptr, &stats));
  if (log_) {
    *log_ << "store: N=" << samples << (mixing ? " mixing" : "") << " " << stats.bytes << " bytes in "
          << fmt(stats.seconds, 1) << " s\n";
  }
  if (!path.empty()) {
    std::filesystem::create_directories(opts_.cache_dir);
    slot->save(path);
  }
  return *slot;
}

RunResult Desk::run(const RunKey& key) {
  const auto id = key.str();
  if (auto it = runs_.find(id); it != runs_.end()) return it->second;
  TrainConfig cfg;
  cfg.epochs = key.epochs ? key.epochs : opts_.student_epochs;
  cfg.objective = key.objective;
  cfg.seed = key.seed;
  cfg.eval_every_epoch = false;
  nn::Model model({"student-s", kDims, 10, key.width}, key.seed);

  std::unique_ptr<DataSource> src;
  std::unique_ptr<ReinforcedLoader> loader;
  switch (key.objective) {
    case Objective::Erm:
      src = std::make_unique<ErmSource>(train_, policy(), kDims, key.seed, cfg.label_smoothing);
      break;
    case Objective::OnlineKdImitation:
      src = std::make_unique<OnlineKdSource>(train_, policy(), kDims, teacher(), KdMode::Imitation, key.seed);
      break;
    case Objective::OnlineKdInvariance:
      src = std::make_unique<OnlineKdSource>(train_, policy(), kDims, teacher(), KdMode::Invariance, key.seed);
      break;
    case Objective::Reinforced: {
      const auto& st = store(key.samples, key.mixing);
      auto lo = loader_options(kDims);
      lo.seed = key.seed;
      if (key.curriculum != "none") lo.schedule = CurriculumSchedule::preset(key.curriculum, static_cast<double>(cfg.epochs));
      if (key.library) {
        if (!library_) library_ = std::make_unique<MixLibrary>(MixLibrary::build(train_, st, opts_.library_size, kDims, 3));
        lo.library = library_.get();
      }
      loader = std::make_unique<ReinforcedLoader>(train_, st, lo);
      src = std::make_unique<ReinforcedSource>(*loader);
      break;
    }
  }
  const auto t0 = clock_type::now();
  const auto hist = train(model, *src, cfg, &val_);
  RunResult r;
  r.accuracy = hist.epochs.back().val_acc;
  r.ece = hist.epochs.back().val_ece;
  r.mean_step_seconds = hist.mean_step_seconds();
  r.median_step_seconds = hist.median_step_seconds();
  r.steps = hist.steps;
  r.teacher_calls = hist.teacher_calls;
  r.seconds = since(t0);
  if (log_) *log_ << "run " << id << ": acc " << fmt(r.accuracy) << " ece " << fmt(r.ece) << " (" << fmt(r.seconds, 1) << " s)\n";
  runs_[id] = r;
  return r;
}

// 1. Storage arithmetic of the ImageNet+ variants.
CriterionResult storage_table() {
  const auto t0 = clock_type::now();
  auto r = criterion(1, "Storage table");
  constexpr std::uint64_t images = 1281167, samples = 400;
  constexpr double gib = 1024.0 * 1024.0 * 1024.0;
  r.metrics.push_back(metric("probabilities block bytes (top-10)", 10.0 * kProbEntryBytes, "== 80", 10 * kProbEntryBytes == 80));
  r.metrics.push_back(metric("RRC block bytes", kRrcBlockBytes, "== 17", kRrcBlockBytes == 17));
  r.metrics.push_back(metric("RA/RE block bytes", kRaReBlockBytes, "== 32", kRaReBlockBytes == 32));
  r.metrics.push_back(metric("mixing block bytes", kMixBlockBytes, "== 28", kMixBlockBytes == 28));
  const auto rec = record_size(10, kRrc | kRaRe);
  r.metrics.push_back(metric("RRC+RA/RE record bytes", static_cast<double>(rec), "== 129", rec == 129));
  const double total = static_cast<double>(total_size(images, samples, 10, kRrc | kRaRe)) / gib;
  r.metrics.push_back(metric("ImageNet+ total GB", total, "61 +- 1", std::abs(total - 61.0) <= 1.0));
  Table t{"Per-block storage at 1,281,167 images x 400 samples", {"block", "bytes/record", "GB", "expected GB", "ok"}, {}};
  const std::vector<std::tuple<std::string, std::size_t, double>> blocks{
      {"probabilities", 10 * kProbEntryBytes, 38}, {"RRC", kRrcBlockBytes, 8}, {"RA/RE", kRaReBlockBytes, 15}, {"mixing", kMixBlockBytes, 13}};
  for (const auto& [name, bytes, expect] : blocks) {
    const double gb = static_cast<double>(images * samples * bytes) / gib;
    const bool ok = std::abs(gb - expect) <= 1.0;
    t.rows.push_back({name, std::to_string(bytes), fmt(gb, 2), fmt(expect, 0), yes_no(ok)});
    r.metrics.push_back(metric(name + " GB", gb, fmt(expect, 0) + " +- 1", ok));
  }
  Table v{"Record size by variant (top_k = 10)", {"variant", "record bytes", "total GB"}, {}};
  for (auto var : {Variant::Rrc, Variant::RrcMixing, Variant::RrcRaRe, Variant::RrcMixRaRe}) {
    const auto f = variant_flags(var);
    v.rows.push_back({std::string(variant_name(var)), std::to_string(record_size(10, f)),
                      fmt(static_cast<double>(total_size(images, samples, 10, f)) / gib, 2)});
  }
  r.tables = {t, v};
  r.notes.push_back("GB is 2^30 bytes; totals include the store header.");
  finish(r, t0);
  return r;
}

// 2. Teacher-free training and per-step cost.
CriterionResult training_overhead(Desk& desk) {
  const auto t0 = clock_type::now();
  auto r = criterion(2, "Zero training overhead");
  const auto ep = desk.options().timing_epochs;
  desk.store(desk.options().samples);  // build outside the timed runs
  // Single short runs swing by 20% on a shared core; warm up once, then
  // interleave the objectives and average every timed step.
  desk.run({Objective::Erm, 100, 0, "none", 8, false, false, 1});
  constexpr std::uint64_t kReps = 5;
  struct Acc {
    double mean = 0.0, median = 0.0;
    std::size_t steps = 0;
    std::uint64_t calls = 0;
  };
  Acc erm, rf, kd;
  Table t{std::to_string(kReps) + " interleaved repetitions of " + std::to_string(ep) + " epochs, batch 128, student-s",
          {"rep", "objective", "steps", "teacher calls", "mean step ms", "median step ms"}, {}};
  for (std::uint64_t rep = 1; rep <= kReps; ++rep) {
    const std::pair<const char*, RunKey> keys[] = {
        {"erm", {Objective::Erm, rep, 0, "none", 8, false, false, ep}},
        {"reinforced", {Objective::Reinforced, rep, desk.options().samples, "none", 8, false, false, ep}},
        {"online-kd-imitation", {Objective::OnlineKdImitation, rep, 0, "none", 8, false, false, ep}}};
    Acc* accs[] = {&erm, &rf, &kd};
    for (std::size_t i = 0; i < 3; ++i) {
      const auto res = desk.run(keys[i].second);
      accs[i]->mean += res.mean_step_seconds / kReps;
      accs[i]->median += res.median_step_seconds / kReps;
      accs[i]->steps = res.steps;
      accs[i]->calls += res.teacher_calls;
      t.rows.push_back({std::to_string(rep), keys[i].first, std::to_string(res.steps), std::to_string(res.teacher_calls),
                        fmt(1e3 * res.mean_step_seconds, 3), fmt(1e3 * res.median_step_seconds, 3)});
    }
  }
  const double ratio = rf.mean / erm.mean;
  const double kd_ratio = kd.mean / erm.mean;
  r.metrics.push_back(metric("reinforced teacher calls", static_cast<double>(rf.calls), "== 0", rf.calls == 0));
  r.metrics.push_back(metric("reinforced / ERM step time", ratio, "<= 1.15", ratio <= 1.15));
  r.metrics.push_back(metric("online KD / ERM step time", kd_ratio, ">= 1.3", kd_ratio >= 1.3));
  r.metrics.push_back(metric("reinforced steps == ERM steps", static_cast<double>(rf.steps), "== " + std::to_string(erm.steps),
                             rf.steps == erm.steps));
  r.notes.push_back("median-based ratios: reinforced / ERM " + fmt(rf.median / erm.median, 3) + ", online KD / ERM " +
                    fmt(kd.median / erm.median, 3));
  r.tables = {t};
  finish(r, t0);
  return r;
}

namespace {

struct SeedRow {
  double erm, imitation, invariance, reinforced;
};

std::vector<SeedRow> ordering_runs(Desk& desk, bool with_kd) {
  std::vector<SeedRow> rows;
  for (std::uint64_t s = 1; s <= desk.options().seeds; ++s) {
    SeedRow row{};
    row.erm = desk.run({Objective::Erm, s}).accuracy;
    row.reinforced = desk.run({Objective::Reinforced, s, desk.options().samples}).accuracy;
    if (with_kd) {
      row.imitation = desk.run({Objective::OnlineKdImitation, s}).accuracy;
      row.invariance = desk.run({Objective::OnlineKdInvariance, s}).accuracy;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

// 3. Accuracy ordering of the objectives.
CriterionResult accuracy_ordering(Desk& desk) {
  const auto t0 = clock_type::now();
  auto r = criterion(3, "Desk-scale accuracy ordering");
  const auto rows = ordering_runs(desk, true);
  std::vector<double> erm, imi, inv, rf;
  Table t{"Validation accuracy (%) per seed, " + std::to_string(desk.options().student_epochs) + " epochs",
          {"seed", "erm", "online-kd-imitation", "online-kd-invariance", "reinforced", "reinforced - erm"}, {}};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    erm.push_back(row.erm);
    imi.push_back(row.imitation);
    inv.push_back(row.invariance);
    rf.push_back(row.reinforced);
    t.rows.push_back({std::to_string(i + 1), pct(row.erm), pct(row.imitation), pct(row.invariance), pct(row.reinforced),
                      pct(row.reinforced - row.erm)});
  }
  t.rows.push_back({"mean", pct(mean(erm)), pct(mean(imi)), pct(mean(inv)), pct(mean(rf)), pct(mean(rf) - mean(erm))});
  const double gain = 100 * (mean(rf) - mean(erm));
  const double gap = 100 * std::abs(mean(rf) - mean(imi));
  const double order = 100 * (mean(imi) - mean(inv));
  r.metrics.push_back(metric("reinforced - ERM (points)", gain, ">= 0.5", gain >= 0.5));
  r.metrics.push_back(metric("|reinforced - imitation| (points)", gap, "<= 1.5", gap <= 1.5));
  r.metrics.push_back(metric("imitation - invariance (points)", order, ">= 0", order >= 0.0));
  r.tables = {t};
  r.notes.push_back("Teacher-L validation accuracy: " + pct(desk.teacher_accuracy()) + "%.");
  finish(r, t0);
  return r;
}

// 4. N small versus N large.
CriterionResult sample_count(Desk& desk) {
  const auto t0 = clock_type::now();
  auto r = criterion(4, "Sample-count sufficiency");
  const auto n = desk.options().samples, big = desk.options().samples_large;
  std::vector<double> a, b;
  Table t{"Reinforced validation accuracy (%)", {"seed", "N=" + std::to_string(n), "N=" + std::to_string(big)}, {}};
  for (std::uint64_t s = 1; s <= desk.options().seeds; ++s) {
    a.push_back(desk.run({Objective::Reinforced, s, n}).accuracy);
    b.push_back(desk.run({Objective::Reinforced, s, big}).accuracy);
    t.rows.push_back({std::to_string(s), pct(a.back()), pct(b.back())});
  }
  t.rows.push_back({"mean", pct(mean(a)), pct(mean(b))});
  const double diff = 100 * std::abs(mean(a) - mean(b));
  r.metrics.push_back(metric("|acc(N=" + std::to_string(n) + ") - acc(N=" + std::to_string(big) + ")| (points)", diff, "<= 1.0",
                             diff <= 1.0));
  r.tables = {t};
  finish(r, t0);
  return r;
}

namespace {

// Scans bins (b/B, (b+1)/B] directly.
double brute_ece(const std::vector<double>& c, const std::vector<std::uint8_t>& hit, std::size_t bins) {
  double total = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    const double lo = static_cast<double>(b) / static_cast<double>(bins), hi = static_cast<double>(b + 1) / static_cast<double>(bins);
    double n = 0, acc = 0, conf = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (c[i] > lo && c[i] <= hi) ++n, acc += hit[i], conf += c[i];
    }
    if (n > 0) total += n / static_cast<double>(c.size()) * std::abs(acc / n - conf / n);
  }
  return total;
}

}  // namespace

// 5. Calibration.
CriterionResult calibration(Desk& desk) {
  const auto t0 = clock_type::now();
  auto r = criterion(5, "Calibration");
  std::vector<double> e_erm, e_rf;
  Table t{"Validation ECE (15 bins)", {"seed", "erm", "reinforced"}, {}};
  for (std::uint64_t s = 1; s <= desk.options().seeds; ++s) {
    e_erm.push_back(desk.run({Objective::Erm, s}).ece);
    e_rf.push_back(desk.run({Objective::Reinforced, s, desk.options().samples}).ece);
    t.rows.push_back({std::to_string(s), fmt(e_erm.back()), fmt(e_rf.back())});
  }
  t.rows.push_back({"mean", fmt(mean(e_erm)), fmt(mean(e_rf))});
  r.metrics.push_back(metric("ECE reinforced - ECE ERM", mean(e_rf) - mean(e_erm), "<= 0", mean(e_rf) <= mean(e_erm)));

  SeededRng rng(2024, 5);
  const std::size_t n = 100000;
  std::vector<double> c(n);
  std::vector<std::uint8_t> hit(n);
  for (std::size_t i = 0; i < n; ++i) {
    c[i] = 1.0 - rng.uniform();
    hit[i] = rng.bernoulli(c[i] * c[i]);
  }
  const double err = std::abs(ece(c, hit) - brute_ece(c, hit, 15));
  r.metrics.push_back(metric("|ece - brute-force binning| on 1e5 points", err, "<= 1e-12", err <= 1e-12));
  r.tables = {t};
  finish(r, t0);
  return r;
}

// 6. Curriculum with a light student.
CriterionResult curriculum(Desk& desk) {
  const auto t0 = clock_type::now();
  auto r = criterion(6, "Curriculum tradeoff");
  r.blocking = false;
  const std::vector<std::string> names{"easy->all", "hard->all", "all->all"};
  std::map<std::string, std::vector<double>> acc;
  Table t{"Reinforced accuracy (%), student-s width " + std::to_string(kCurriculumWidth), {"seed", "easy->all", "hard->all", "all->all"}, {}};
  for (std::uint64_t s = 1; s <= desk.options().seeds; ++s) {
    std::vector<std::string> row{std::to_string(s)};
    for (const auto& c : names) {
      acc[c].push_back(desk.run({Objective::Reinforced, s, desk.options().samples, c, kCurriculumWidth}).accuracy);
      row.push_back(pct(acc[c].back()));
    }
    t.rows.push_back(row);
  }
  t.rows.push_back({"mean", pct(mean(acc["easy->all"])), pct(mean(acc["hard->all"])), pct(mean(acc["all->all"]))});
  const double d = 100 * (mean(acc["easy->all"]) - mean(acc["hard->all"]));
  r.metrics.push_back(metric("easy->all - hard->all (points)", d, ">= 0", d >= 0));
  r.tables = {t};
  finish(r, t0);
  return r;
}

namespace {

struct Check {
  std::string name;
  bool pass;
  std::string detail;
};

Image random_image(std::uint16_t h, std::uint16_t w, std::uint8_t c, SeededRng& rng) {
  Image img(h, w, c);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

SparseProbs random_probs(std::size_t classes, std::size_t k, SeededRng& rng) {
  std::vector<float> row(classes);
  double total = 0.0;
  for (auto& v : row) total += (v = static_cast<float>(rng.uniform() + 1e-3));
  for (auto& v : row) v = static_cast<float>(v / total);
  return sparsify(row, k);
}

Check codec_fuzz() {
  SeededRng rng(71, 1);
  for (int t = 0; t < 1000; ++t) {
    const auto v = static_cast<Variant>(rng.below(4));
    StoreHeader h;
    h.flags = variant_flags(v);
    h.num_classes = static_cast<std::uint32_t>(2 + rng.below(10));
    h.top_k = static_cast<std::uint8_t>(1 + rng.below(h.num_classes));
    h.samples_per_image = static_cast<std::uint16_t>(1 + rng.below(4));
    h.num_images = 2 + rng.below(4);
    h.teacher_id = "fuzz";
    const auto policy = AugmentationPolicy::for_variant(v);
    std::vector<std::vector<ReinforcementRecord>> groups;
    StoreBuilder b(h);
    for (std::size_t i = 0; i < h.num_images; ++i) {
      std::vector<ReinforcementRecord> g;
      for (std::size_t k = 0; k < h.samples_per_image; ++k) {
        g.push_back({random_probs(h.num_classes, h.top_k, rng),
                     sample_descriptor(policy, 8, 8, h.num_images, static_cast<std::int64_t>(i), rng)});
      }
      std::stable_sort(g.begin(), g.end(), [](const auto& x, const auto& y) { return x.probs.confidence() > y.probs.confidence(); });
      b.append_group(g);
      groups.push_back(g);
    }
    const auto store = std::move(b).finish();
    const auto back = ReinforcementStore::from_bytes(store.bytes());
    if (back.bytes() != store.bytes()) return {"codec roundtrip fuzz (1000 stores)", false, "bytes differ at store " + std::to_string(t)};
    for (std::size_t i = 0; i < groups.size(); ++i) {
      for (std::size_t k = 0; k < groups[i].size(); ++k) {
        if (!(back.record(i, k) == groups[i][k])) {
          return {"codec roundtrip fuzz (1000 stores)", false, "record mismatch at store " + std::to_string(t)};
        }
      }
    }
  }
  return {"codec roundtrip fuzz (1000 stores)", true, "bit-exact"};
}

// Replays every stored descriptor twice and re-asks the teacher; the stored
// probabilities must match exactly.
Check replay_checks(const SynthGenerator& gen) {
  const auto ds = gen.make_dataset(100, 9);
  OracleTeacher teacher(gen);
  ReinforceJob job;
  job.dataset = &ds;
  job.teacher = &teacher;
  job.policy = AugmentationPolicy::for_variant(Variant::RrcMixRaRe);
  job.samples_per_image = 10;
  job.top_k = 5;
  job.seed = 3;
  const auto store = reinforce(job);
  auto partners = [&](std::int32_t id) -> const Image& { return ds.images.at(static_cast<std::size_t>(id)); };
  std::size_t cases = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t k = 0; k < job.samples_per_image; ++k, ++cases) {
      const auto rec = store.record(i, k);
      const auto a = replay(rec.desc, ds.images[i], partners, 16, 16);
      const auto b = replay(rec.desc, ds.images[i], partners, 16, 16);
      if (!(a == b)) return {"replay determinism and replay/online equivalence (1000 cases)", false, "replay not deterministic"};
      const auto row = teacher.predict(std::span<const Image>(&a, 1));
      if (!(sparsify(row.row(0), job.top_k) == rec.probs)) {
        return {"replay determinism and replay/online equivalence (1000 cases)", false,
                "image " + std::to_string(i) + " record " + std::to_string(k) + " differs from the teacher on its replay"};
      }
    }
  }
  return {"replay determinism and replay/online equivalence (" + std::to_string(cases) + " cases)", true, "byte-identical"};
}

Check worker_invariance(const SynthGenerator& gen) {
  const auto ds = gen.make_dataset(60, 10);
  OracleTeacher teacher(gen);
  ReinforceJob job;
  job.dataset = &ds;
  job.teacher = &teacher;
  job.policy = AugmentationPolicy::for_variant(Variant::RrcMixRaRe);
  job.samples_per_image = 6;
  job.teacher_batch = 30;
  job.workers = 1;
  const auto one = reinforce(job).bytes();
  job.workers = 8;
  const auto eight = reinforce(job).bytes();
  return {"reinforce worker-count invariance (1 vs 8)", one == eight, one == eight ? "identical store bytes" : "stores differ"};
}

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]), na += a[i] * a[i], nb += b[i] * b[i];
  return std::sqrt(d) / std::max({std::sqrt(na), std::sqrt(nb), 1e-30});
}

double layer_grad_error(nn::Layer& layer, nn::Tensor x, SeededRng& rng) {
  for (auto* p : layer.params()) {
    for (auto& v : p->value) v = static_cast<float>(rng.uniform() - 0.5);
    std::fill(p->grad.begin(), p->grad.end(), 0.f);
  }
  const auto y = layer.forward(x);
  std::vector<double> w(y.data.size());
  for (auto& v : w) v = rng.uniform() * 2 - 1;
  auto dy = y;
  for (std::size_t i = 0; i < w.size(); ++i) dy.data[i] = static_cast<float>(w[i]);
  const auto dx = layer.backward(x, y, dy);
  auto probe = [&] {
    const auto out = layer.forward(x);
    double s = 0;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * out.data[i];
    return s;
  };
  auto numeric = [&](std::vector<float>& vals) {
    std::vector<double> g(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const float keep = vals[i];
      vals[i] = keep + 1e-2f;
      const double up = probe();
      vals[i] = keep - 1e-2f;
      g[i] = (up - probe()) / 2e-2;
      vals[i] = keep;
    }
    return g;
  };
  double worst = rel_err(std::vector<double>(dx.data.begin(), dx.data.end()), numeric(x.data));
  for (auto* p : layer.params()) worst = std::max(worst, rel_err(std::vector<double>(p->grad.begin(), p->grad.end()), numeric(p->value)));
  return worst;
}

Check gradient_checks() {
  SeededRng rng(81, 1);
  auto input = [&](std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    nn::Tensor t(n, c, h, w);
    for (auto& v : t.data) {
      const float x = static_cast<float>(rng.uniform() * 2 - 1);
      v = std::abs(x) < 0.05f ? (x < 0 ? -0.05f : 0.05f) : x;  // off the relu kink
    }
    return t;
  };
  nn::Conv3x3 conv(2, 3);
  nn::Dense dense(12, 4);
  nn::Relu relu;
  nn::AvgPool2 pool;
  nn::GlobalAvgPool gap;
  const double worst = std::max({layer_grad_error(conv, input(2, 2, 4, 5), rng), layer_grad_error(dense, input(3, 3, 2, 2), rng),
                                 layer_grad_error(relu, input(2, 2, 3, 3), rng), layer_grad_error(pool, input(2, 2, 4, 6), rng),
                                 layer_grad_error(gap, input(2, 3, 3, 4), rng)});
  return {"gradient checks on every layer", worst < 1e-4, "max relative error " + fmt(worst * 1e6, 3) + "e-6"};
}

Check kl_checks() {
  SeededRng rng(91, 1);
  double min_kl = 1e9, max_self = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t C = 2 + rng.below(9);
    std::vector<float> logits(C), target(C), p(C);
    for (auto& v : logits) v = static_cast<float>(rng.uniform() * 8 - 4);
    double s = 0;
    for (auto& v : target) s += (v = static_cast<float>(rng.uniform()));
    for (auto& v : target) v = static_cast<float>(v / s);
    min_kl = std::min(min_kl, nn::kl_divergence(logits, target, C).value);
    nn::softmax_rows(logits, C, p);
    max_self = std::max(max_self, std::abs(nn::kl_divergence(logits, p, C).value));
  }
  const bool ok = min_kl >= -1e-9 && max_self <= 1e-6;
  return {"KL non-negativity and zero at equality (1000 pairs)", ok,
          "min KL " + fmt(min_kl, 6) + ", max KL(p||p) " + fmt(max_self * 1e9, 3) + "e-9"};
}

Check epoch_coverage(const SynthGenerator& gen) {
  const auto ds = gen.make_dataset(97, 11);
  OracleTeacher teacher(gen);
  ReinforceJob job;
  job.dataset = &ds;
  job.teacher = &teacher;
  job.policy = AugmentationPolicy::for_variant(Variant::RrcMixRaRe);
  job.samples_per_image = 10;
  const auto store = reinforce(job);
  for (const char* cur : {"none", "easy->all", "hard->all", "easy->easy", "hard->hard"}) {
    auto lo = loader_options({16, 16, 1});
    if (std::string(cur) != "none") lo.schedule = CurriculumSchedule::preset(cur, 4);
    ReinforcedLoader loader(ds, store, lo);
    for (std::size_t e = 0; e < 5; ++e) {
      loader.reset(e);
      std::vector<int> seen(ds.size(), 0);
      while (auto b = loader.next_batch(16)) {
        for (auto id : b->ids) ++seen[id];
      }
      if (std::any_of(seen.begin(), seen.end(), [](int c) { return c != 1; })) {
        return {"epoch coverage", false, std::string(cur) + " epoch " + std::to_string(e) + " misses or repeats an image"};
      }
    }
  }
  return {"epoch coverage (every image once per epoch)", true, "5 schedules x 5 epochs"};
}

Check apply_frequencies() {
  auto policy = AugmentationPolicy::for_variant(Variant::RrcMixRaRe);
  policy.flip_p = 0.5;
  policy.erase_p = 0.25;
  policy.mix_p = 0.5;
  policy.ra_p = 0.7;
  const int n = 10000;
  int flips = 0, erases = 0, mixes = 0, ra = 0;
  for (int i = 0; i < n; ++i) {
    SeededRng rng(101, derive_stream(i, 1));
    const auto d = sample_descriptor(policy, 16, 16, 50, i % 50, rng);
    flips += d.flip;
    erases += d.erase_applied();
    mixes += d.mixing_applied();
    ra += d.ra[0].op >= 0;
  }
  std::string worst;
  bool ok = true;
  for (auto [name, count, p] : {std::tuple{"flip", flips, 0.5}, std::tuple{"erase", erases, 0.25}, std::tuple{"mix", mixes, 0.5},
                                std::tuple{"ra slot", ra, 0.7}}) {
    const double z = std::abs(count - n * p) / std::sqrt(n * p * (1 - p));
    ok = ok && z <= 3.0;
    worst += std::string(name) + " z=" + fmt(z, 2) + " ";
  }
  return {"apply-probability frequencies within 3 sigma (n=1e4)", ok, worst};
}

Check curriculum_endpoints() {
  double worst = 0;
  for (const char* from : {"easy", "all", "hard"}) {
    for (const char* to : {"easy", "all", "hard"}) {
      const auto s = CurriculumSchedule::preset(std::string(from) + "->" + to, 100);
      const auto w0 = window_at(s, 0), w1 = window_at(s, 100);
      worst = std::max({worst, std::abs(w0.a - s.a0), std::abs(w0.b - s.b0), std::abs(w1.a - s.a1), std::abs(w1.b - s.b1)});
    }
  }
  return {"curriculum endpoint fidelity (9 presets)", worst <= 1e-9, "max endpoint error " + fmt(worst, 12)};
}

}  // namespace

// 7. Property suites.
CriterionResult property_suites() {
  const auto t0 = clock_type::now();
  auto r = criterion(7, "Property suites");
  SynthSpec spec;
  spec.seed = kProtoSeed;
  const SynthGenerator gen(spec);
  Table t{"Checks", {"property", "pass", "detail"}, {}};
  for (const auto& c : {codec_fuzz(), replay_checks(gen), worker_invariance(gen), gradient_checks(), kl_checks(), epoch_coverage(gen),
                        apply_frequencies(), curriculum_endpoints()}) {
    t.rows.push_back({c.name, yes_no(c.pass), c.detail});
    r.metrics.push_back(metric(c.name, c.pass ? 1.0 : 0.0, "pass", c.pass));
  }
  r.tables = {t};
  finish(r, t0);
  return r;
}

namespace {

Check mixup_oracle() {
  SeededRng rng(111, 1);
  for (int i = 0; i < 1000; ++i) {
    const auto h = static_cast<std::uint16_t>(1 + rng.below(12)), w = static_cast<std::uint16_t>(1 + rng.below(12));
    const auto a = random_image(h, w, 3, rng), b = random_image(h, w, 3, rng);
    AugmentationDescriptor d;
    d.flags = kRrc | kMixing;
    d.mixup_partner = 1;
    d.mixup_lambda = static_cast<float>(rng.uniform());
    const auto out = apply_mix(d, a, b);
    for (std::size_t k = 0; k < out.data.size(); ++k) {
      const double expect = d.mixup_lambda * a.data[k] + (1.0 - d.mixup_lambda) * b.data[k];
      if (std::abs(out.data[k] - expect) > 0.5 + 1e-9) return {"mixup convex-combination oracle (1000 cases)", false, "case " + std::to_string(i)};
    }
  }
  return {"mixup convex-combination oracle (1000 cases)", true, "within rounding"};
}

Check cutmix_oracle() {
  SeededRng rng(112, 1);
  for (int i = 0; i < 1000; ++i) {
    const auto h = static_cast<std::uint16_t>(1 + rng.below(12)), w = static_cast<std::uint16_t>(1 + rng.below(12));
    const auto a = random_image(h, w, 1, rng), b = random_image(h, w, 1, rng);
    const long x0 = static_cast<long>(rng.below(w + 1u)), x1 = x0 + static_cast<long>(rng.below(w - x0 + 1));
    const long y0 = static_cast<long>(rng.below(h + 1u)), y1 = y0 + static_cast<long>(rng.below(h - y0 + 1));
    AugmentationDescriptor d;
    d.flags = kRrc | kMixing;
    d.cutmix_partner = 1;
    d.cutmix_box = {static_cast<float>(x0) / w, static_cast<float>(y0) / h, static_cast<float>(x1 - x0) / w, static_cast<float>(y1 - y0) / h};
    const auto out = apply_mix(d, a, b);
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        const bool inside = x >= x0 && x < x1 && y >= y0 && y < y1;
        if (out.at(y, x, 0) != (inside ? b : a).at(y, x, 0)) return {"cutmix box-paste oracle (1000 cases)", false, "case " + std::to_string(i)};
      }
    }
  }
  return {"cutmix box-paste oracle (1000 cases)", true, "exact"};
}

}  // namespace

// 8. Mixing mechanics.
CriterionResult mixing_mechanics(Desk& desk) {
  const auto t0 = clock_type::now();
  auto r = criterion(8, "Mixing mechanics");
  Table checks{"Checks", {"check", "pass", "detail"}, {}};
  for (const auto& c : {mixup_oracle(), cutmix_oracle()}) {
    checks.rows.push_back({c.name, yes_no(c.pass), c.detail});
    r.metrics.push_back(metric(c.name, c.pass ? 1.0 : 0.0, "pass", c.pass));
  }

  // Partner loads per emitted sample: plain mixing vs double-mix, every record mixed.
  {
    const auto ds = desk.generator().make_dataset(300, 12);
    OracleTeacher teacher(desk.generator());
    ReinforceJob job;
    job.dataset = &ds;
    job.teacher = &teacher;
    job.policy = AugmentationPolicy::for_variant(Variant::RrcMixing);
    job.policy.mix_p = 1.0;
    job.samples_per_image = 4;
    const auto plain = reinforce(job);
    job.double_mix = true;
    const auto doubled = reinforce(job);
    ReinforcedLoader a(ds, plain, loader_options(kDims)), b(ds, doubled, loader_options(kDims));
    while (a.next_batch(64)) {
    }
    while (b.next_batch(64)) {
    }
    const double pa = static_cast<double>(a.partner_loads()) / static_cast<double>(a.samples_emitted());
    const double pb = static_cast<double>(b.partner_loads()) / static_cast<double>(b.samples_emitted());
    const bool ok = std::abs(pb - 0.5 * pa) < 1e-12;
    checks.rows.push_back({"double-mix halves partner loads per sample", yes_no(ok), fmt(pa, 3) + " -> " + fmt(pb, 3)});
    r.metrics.push_back(metric("double-mix partner loads per sample / plain", pb / pa, "== 0.5", ok));
  }

  // Library mode versus full mixing: reported, not gated.
  std::vector<double> full, lib;
  Table t{"Reinforced accuracy (%) with a mixing store, library size " + std::to_string(desk.options().library_size),
          {"seed", "full mixing", "mix library", "delta"}, {}};
  for (std::uint64_t s = 1; s <= desk.options().seeds; ++s) {
    full.push_back(desk.run({Objective::Reinforced, s, desk.options().samples, "none", 8, true, false}).accuracy);
    lib.push_back(desk.run({Objective::Reinforced, s, desk.options().samples, "none", 8, true, true}).accuracy);
    t.rows.push_back({std::to_string(s), pct(full.back()), pct(lib.back()), pct(lib.back() - full.back())});
  }
  t.rows.push_back({"mean", pct(mean(full)), pct(mean(lib)), pct(mean(lib) - mean(full))});
  r.tables = {checks, t};
  r.notes.push_back("Library delta (points, expected <= 0, not gated): " + pct(mean(lib) - mean(full)) + ".");
  finish(r, t0);
  return r;
}

std::vector<CriterionResult> run_criteria(Desk& desk, const std::vector<int>& ids, std::ostream* log) {
  std::vector<CriterionResult> out;
  const std::vector<std::function<CriterionResult()>> all{
      [] { return storage_table(); },          [&] { return training_overhead(desk); },
      [&] { return accuracy_ordering(desk); }, [&] { return sample_count(desk); },
      [&] { return calibration(desk); },       [&] { return curriculum(desk); },
      [] { return property_suites(); },        [&] { return mixing_mechanics(desk); },
  };
  for (int id = 1; id <= static_cast<int>(all.size()); ++id) {
    if (!ids.empty() && std::find(ids.begin(), ids.end(), id) == ids.end()) continue;
    if (log) *log << "criterion " << id << " ...\n";
    out.push_back(all[static_cast<std::size_t>(id - 1)]());
    if (log) *log << "criterion " << id << ": " << (out.back().pass ? "pass" : "FAIL") << " (" << fmt(out.back().seconds, 1) << " s)\n";
  }
  return out;
}

namespace {

void table_markdown(std::ostream& out, const Table& t) {
  if (!t.caption.empty()) out << "*" << t.caption << "*\n\n";
  out << "|";
  for (const auto& h : t.header) out << " " << h << " |";
  out << "\n|";
  for (std::size_t i = 0; i < t.header.size(); ++i) out << " --- |";
  out << "\n";
  for (const auto& row : t.rows) {
    out << "|";
    for (const auto& c : row) out << " " << c << " |";
    out << "\n";
  }
  out << "\n";
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

}  // namespace

std::string to_markdown(const std::vector<CriterionResult>& results, const DeskOptions& opts) {
  std::ostringstream out;
  out << "# Acceptance report\n\n";
  out << "Mode: " << (opts.quick ? "quick (reduced sizes; numbers are indicative only)" : "full") << ". Desk dataset "
      << opts.train_size << " train / " << opts.val_size << " val, 10 classes, 16x16x1. Teacher-L " << opts.teacher_epochs
      << " epochs; students " << opts.student_epochs << " epochs x " << opts.seeds << " seeds; N = " << opts.samples << ".\n\n";
  out << "| # | criterion | blocking | result | seconds |\n| --- | --- | --- | --- | --- |\n";
  for (const auto& r : results) {
    out << "| " << r.id << " | " << r.title << " | " << yes_no(r.blocking) << " | " << (r.pass ? "PASS" : "FAIL") << " | "
        << fmt(r.seconds, 1) << " |\n";
  }
  out << "\n";
  for (const auto& r : results) {
    out << "## " << r.id << ". " << r.title << ": " << (r.pass ? "PASS" : "FAIL") << (r.blocking ? "" : " (non-blocking)") << "\n\n";
    table_markdown(out, Table{"", {"metric", "value", "threshold", "pass"}, [&] {
                                std::vector<std::vector<std::string>> rows;
                                for (const auto& m : r.metrics) rows.push_back({m.name, fmt(m.value, 4), m.threshold, yes_no(m.pass)});
                                return rows;
                              }()});
    for (const auto& t : r.tables) table_markdown(out, t);
    for (const auto& n : r.notes) out << n << "\n\n";
  }
  return out.str();
}

void write_csv(const std::vector<CriterionResult>& results, std::ostream& out) {
  out << "criterion,title,blocking,metric,value,threshold,pass\n";
  for (const auto& r : results) {
    for (const auto& m : r.metrics) {
      out << r.id << ',' << csv_field(r.title) << ',' << r.blocking << ',' << csv_field(m.name) << ',' << std::setprecision(10)
          << m.value << ',' << csv_field(m.threshold) << ',' << m.pass << '\n';
    }
  }
}

}  // namespace dr::exp
