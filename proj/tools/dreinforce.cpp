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

// dreinforce: reinforce a dataset, train under each objective, inspect stores
// and produce the experiment report.

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "dr/config.hpp"
#include "dr/errors.hpp"
#include "dr/reinforcer.hpp"
#include "dr/synth.hpp"
#include "experiments.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace dr {
namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

RunConfig load_config(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : RunConfig::load(c.config_path);
  cfg.apply_overrides(c.overrides);
  return cfg;
}

fs::path prepare_run_dir(const RunConfig& cfg) {
  const fs::path dir = cfg.get("run.out_dir");
  fs::create_directories(dir);
  std::ofstream(dir / "config.txt") << cfg.echo();
  return dir;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

LabeledDataset load_dataset(const RunConfig& cfg, const std::string& key) {
  auto ds = load_packed(cfg.require(key));
  ds.check();
  return ds;
}

std::shared_ptr<nn::Model> load_teacher(const RunConfig& cfg) {
  return std::make_shared<nn::Model>(nn::Model::load(cfg.require("teacher.checkpoint")));
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

std::string box_str(const Box& b) {
  std::ostringstream s;
  s << "(" << exp::fmt(b.x, 3) << ", " << exp::fmt(b.y, 3) << ", " << exp::fmt(b.w, 3) << ", " << exp::fmt(b.h, 3) << ")";
  return s.str();
}

std::string describe(const AugmentationDescriptor& d) {
  std::ostringstream s;
  s << "crop " << box_str(d.crop) << (d.flip ? " flip" : "");
  if (d.flags & kRaRe) {
    for (const auto& slot : d.ra) {
      if (slot.op >= 0) s << " ra " << ra_op_name(slot.op) << "@" << exp::fmt(slot.magnitude, 2);
    }
    if (d.erase_applied()) s << " erase " << box_str(d.erase);
  }
  if (d.mixup_applied()) s << " mixup partner " << d.mixup_partner << " lambda " << exp::fmt(d.mixup_lambda, 3);
  if (d.cutmix_applied()) s << " cutmix partner " << d.cutmix_partner << " box " << box_str(d.cutmix_box);
  return s.str();
}

std::string probs_str(const SparseProbs& p) {
  std::ostringstream s;
  for (std::size_t i = 0; i < p.entries.size(); ++i) s << (i ? " " : "") << p.entries[i].index << ":" << exp::fmt(p.entries[i].prob, 4);
  return s.str();
}

ReinforcementStore open_store(const std::string& path) {
  try {
    return read_store(path);
  } catch (const DecodeError& e) {
    throw std::runtime_error("corrupt store " + path + ": " + e.what());
  } catch (const ValidationError& e) {
    throw std::runtime_error("corrupt store " + path + ": " + e.what());
  }
}

int cmd_make_dataset(const std::string& out, std::size_t train_n, std::size_t val_n, std::uint64_t seed) {
  SynthSpec spec;
  spec.seed = seed;
  const SynthGenerator gen(spec);
  fs::create_directories(out);
  const auto tr = (fs::path(out) / "train.dimg").string(), va = (fs::path(out) / "val.dimg").string();
  write_packed(gen.make_dataset(train_n, 1), tr);
  write_packed(gen.make_dataset(val_n, 2), va);
  std::cout << "wrote " << tr << " (" << train_n << " images) and " << va << " (" << val_n << " images)\n";
  return 0;
}

int cmd_reinforce(const Common& c) {
  const auto cfg = load_config(c);
  const auto ds = load_dataset(cfg, "dataset.train");
  const auto model = load_teacher(cfg);
  nn::ModelTeacher teacher(model, fs::path(cfg.get("teacher.checkpoint")).filename().string());

  ReinforceJob job;
  job.dataset = &ds;
  job.teacher = &teacher;
  job.policy = policy_from(cfg);
  job.samples_per_image = cfg.get_uint("job.samples_per_image");
  job.candidate_multiplier = cfg.get_uint("job.candidate_multiplier");
  job.selection = parse_selection(cfg.get("job.selection"));
  job.top_k = cfg.get_uint("job.top_k");
  job.seed = cfg.get_uint("job.seed");
  job.workers = cfg.get_uint("job.workers");
  job.double_mix = cfg.get_bool("job.double_mix");
  job.check();

  const auto dir = prepare_run_dir(cfg);
  const std::string store_path = cfg.get("job.store").empty() ? (dir / "store.drst").string() : cfg.get("job.store");

  ReinforceProgress progress;
  ReinforceStats stats;
  std::atomic<bool> done{false};
  std::jthread monitor([&] {
    while (!done.load()) {
      std::this_thread::sleep_for(std::chrono::milliseconds(200));
      if (done.load()) break;
      std::cerr << "\rreinforce: " << progress.images_done.load() << "/" << progress.total_images << " images, "
                << exp::fmt(progress.throughput(), 1) << " img/s, eta " << exp::fmt(progress.eta_seconds(), 0) << " s   " << std::flush;
    }
  });
  ReinforcementStore store;
  try {
    store = reinforce(job, &progress, &stats);
  } catch (...) {
    done = true;
    throw;
  }
  done = true;
  monitor.join();
  std::cerr << "\n";
  store.save(store_path);

  const auto& h = store.header();
  json j;
  j["store"] = store_path;
  j["images"] = stats.images;
  j["records"] = stats.records;
  j["bytes"] = stats.bytes;
  j["total_size"] = total_size(h.num_images, h.samples_per_image, h.top_k, h.flags, h.teacher_id.size());
  j["record_bytes"] = store.record_bytes();
  j["teacher_images"] = stats.teacher_images;
  j["seconds"] = stats.seconds;
  j["images_per_second"] = stats.images_per_second;
  j["variant"] = variant_name(job.policy.variant);
  j["payload_crc32"] = hex32(h.payload_crc32);
  write_json(dir / "stats.json", j);
  std::cout << "wrote " << store_path << ": " << stats.records << " records, " << stats.bytes << " bytes in "
            << exp::fmt(stats.seconds, 2) << " s\n";
  return 0;
}

int cmd_train(const Common& c) {
  const auto cfg = load_config(c);
  const auto tcfg = train_config_from(cfg);
  const auto ds = load_dataset(cfg, "dataset.train");
  std::optional<LabeledDataset> val;
  if (!cfg.get("dataset.val").empty()) val = load_dataset(cfg, "dataset.val");
  const ImageDims dims = dims_of(ds.images.front());
  const auto policy = policy_from(cfg);

  std::shared_ptr<nn::Model> teacher_model;
  std::unique_ptr<nn::ModelTeacher> teacher;
  std::optional<ReinforcementStore> store;
  std::optional<MixLibrary> library;
  std::unique_ptr<ReinforcedLoader> loader;
  std::unique_ptr<DataSource> src;
  switch (tcfg.objective) {
    case Objective::Erm:
      src = std::make_unique<ErmSource>(ds, policy, dims, tcfg.seed, tcfg.effective_label_smoothing());
      break;
    case Objective::OnlineKdImitation:
    case Objective::OnlineKdInvariance:
      teacher_model = load_teacher(cfg);
      teacher = std::make_unique<nn::ModelTeacher>(teacher_model, "teacher");
      src = std::make_unique<OnlineKdSource>(
          ds, policy, dims, *teacher,
          tcfg.objective == Objective::OnlineKdImitation ? KdMode::Imitation : KdMode::Invariance, tcfg.seed);
      break;
    case Objective::Reinforced: {
      store = open_store(cfg.require("train.store"));
      LoaderOptions lo{dims};
      lo.seed = tcfg.seed;
      lo.workers = cfg.get_uint("train.workers");
      lo.schedule = schedule_from(cfg);
      if (const auto lib = cfg.get_uint("train.library_size"); lib > 0) {
        library = MixLibrary::build(ds, *store, lib, dims, tcfg.seed);
        lo.library = &*library;
      }
      loader = std::make_unique<ReinforcedLoader>(ds, *store, lo);
      src = std::make_unique<ReinforcedSource>(*loader);
      break;
    }
  }

  nn::Model model({cfg.get("train.arch"), dims, ds.num_classes, static_cast<std::uint16_t>(cfg.get_uint("train.width"))},
                  tcfg.seed);
  const auto dir = prepare_run_dir(cfg);
  const auto hist = train(model, *src, tcfg, val ? &*val : nullptr, &std::cerr);
  model.save((dir / "model.ckpt").string());
  hist.write_csv((dir / "history.csv").string());
  {
    std::ofstream steps(dir / "step_times.csv");
    steps << "step,seconds\n";
    for (std::size_t i = 0; i < hist.step_seconds.size(); ++i) steps << i << ',' << hist.step_seconds[i] << '\n';
  }
  json j;
  j["objective"] = objective_name(tcfg.objective);
  j["epochs"] = tcfg.epochs;
  j["steps"] = hist.steps;
  j["steps_per_epoch"] = hist.epochs.empty() ? 0 : hist.epochs.front().steps;
  j["teacher_calls"] = hist.teacher_calls;
  j["mean_step_seconds"] = hist.mean_step_seconds();
  j["median_step_seconds"] = hist.median_step_seconds();
  if (!hist.epochs.empty()) {
    j["final_train_loss"] = hist.epochs.back().train_loss;
    if (val) {
      j["val_accuracy"] = hist.epochs.back().val_acc;
      j["val_ece"] = hist.epochs.back().val_ece;
    }
  }
  write_json(dir / "stats.json", j);
  std::cout << "trained " << objective_name(tcfg.objective) << " for " << hist.steps << " steps, teacher calls "
            << hist.teacher_calls;
  if (val && !hist.epochs.empty()) std::cout << ", val accuracy " << exp::fmt(hist.epochs.back().val_acc);
  std::cout << "; wrote " << (dir / "model.ckpt").string() << "\n";
  return 0;
}

int cmd_inspect(const std::string& path, std::optional<std::size_t> image, std::size_t max_records) {
  const auto store = open_store(path);
  const auto& h = store.header();
  std::cout << "store " << path << "\n";
  std::cout << "version " << h.version << ", flags " << hex32(h.flags) << " (" << (h.flags & kRrc ? "rrc" : "")
            << (h.flags & kMixing ? "+mixing" : "") << (h.flags & kRaRe ? "+ra/re" : "") << (h.double_mix() ? ", double-mix pairs" : "")
            << ")\n";
  std::cout << "classes " << h.num_classes << ", top_k " << int(h.top_k) << ", samples_per_image " << h.samples_per_image
            << ", images " << h.num_images << "\n";
  std::cout << "teacher " << h.teacher_id << ", payload crc32 " << hex32(h.payload_crc32) << "\n";
  std::cout << "record bytes = 8*" << int(h.top_k) << " + " << kRrcBlockBytes << (h.flags & kRaRe ? " + 32" : "")
            << (h.flags & kMixing ? " + 28" : "") << " = " << record_size(h.top_k, h.flags) << "\n";
  std::cout << "total bytes = " << h.encoded_size() << " + " << h.num_images << "*" << h.samples_per_image << "*"
            << store.record_bytes() << " = " << total_size(h.num_images, h.samples_per_image, h.top_k, h.flags, h.teacher_id.size())
            << " (file " << store.bytes().size() << ")\n";
  const auto report = validate(store);
  std::cout << "validation: " << (report.ok() ? "ok" : std::to_string(report.total) + " violations") << "\n";
  for (const auto& v : report.violations) std::cout << "  image " << v.image << " record " << v.index << ": " << v.message << "\n";
  if (store.num_images() == 0) return 0;
  const std::size_t id = image.value_or(0);
  if (id >= store.num_images()) throw ValidationError("image " + std::to_string(id) + " out of range");
  const auto n = store.samples_per_image();
  std::vector<float> conf(n);
  for (std::size_t k = 0; k < n; ++k) conf[k] = store.confidence(id, k);
  std::cout << "image " << id << ": " << n << " records, confidence order "
            << (group_is_sorted(conf, h.double_mix()) ? "ok" : "VIOLATED") << "\n";
  const std::size_t shown = image ? n : std::min(n, max_records);
  for (std::size_t k = 0; k < shown; ++k) {
    const auto rec = store.record(id, k);
    std::cout << "  [" << k << "] conf " << exp::fmt(rec.probs.confidence(), 4) << " | " << probs_str(rec.probs) << " | "
              << describe(rec.desc) << "\n";
  }
  return 0;
}

int cmd_stats(const std::string& path) {
  const auto store = open_store(path);
  const auto& h = store.header();
  const std::size_t n = store.samples_per_image();
  std::vector<double> by_index(n, 0.0);
  std::size_t mixed = 0, flipped = 0, erased = 0;
  std::vector<std::uint64_t> top_class(h.num_classes, 0);
  for (std::size_t i = 0; i < store.num_images(); ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      const auto rec = store.record(i, k);
      by_index[k] += rec.probs.confidence();
      mixed += rec.desc.mixing_applied();
      flipped += rec.desc.flip;
      erased += rec.desc.erase_applied();
      if (!rec.probs.empty()) ++top_class[rec.probs.entries.front().index];
    }
  }
  const double records = static_cast<double>(store.num_images() * n);
  for (auto& v : by_index) v /= std::max<double>(1.0, static_cast<double>(store.num_images()));
  json j;
  j["images"] = h.num_images;
  j["records"] = store.num_images() * n;
  j["bytes"] = store.bytes().size();
  j["total_size"] = total_size(h.num_images, h.samples_per_image, h.top_k, h.flags, h.teacher_id.size());
  j["record_bytes"] = store.record_bytes();
  j["mean_confidence_by_index"] = by_index;
  j["fraction_mixed"] = records > 0 ? mixed / records : 0.0;
  j["fraction_flipped"] = records > 0 ? flipped / records : 0.0;
  j["fraction_erased"] = records > 0 ? erased / records : 0.0;
  j["top1_class_counts"] = top_class;
  j["valid"] = validate(store).ok();
  std::cout << j.dump(2) << "\n";
  return 0;
}

std::vector<int> parse_ids(const std::string& s) {
  std::vector<int> ids;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) {
    if (part.empty()) continue;
    int v = 0;
    try {
      v = std::stoi(part);
    } catch (const std::exception&) {
      throw ValidationError("bad criterion id '" + part + "'");
    }
    if (v < 1 || v > 8) throw ValidationError("criterion ids are 1..8, got " + part);
    ids.push_back(v);
  }
  return ids;
}

int cmd_report(bool quick, const std::string& out_dir, const std::string& criteria, const std::string& cache) {
  auto opts = quick ? exp::DeskOptions::quick_run() : exp::DeskOptions::full();
  opts.cache_dir = cache;
  const auto ids = parse_ids(criteria);
  exp::Desk desk(opts, &std::cerr);
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = exp::run_criteria(desk, ids, &std::cerr);
  fs::create_directories(out_dir);
  const auto md = (fs::path(out_dir) / "report.md").string(), csv = (fs::path(out_dir) / "report.csv").string();
  std::ofstream(md) << exp::to_markdown(results, opts);
  {
    std::ofstream out(csv);
    exp::write_csv(results, out);
  }
  for (const auto& r : results) {
    std::cout << "criterion " << r.id << " " << (r.pass ? "PASS" : "FAIL") << (r.blocking ? "" : " (non-blocking)") << ": " << r.title << "\n";
  }
  std::cout << "wrote " << md << " and " << csv << " in "
            << exp::fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 1) << " s\n";
  return 0;
}

}  // namespace
}  // namespace dr

int main(int argc, char** argv) {
  using namespace dr;
  CLI::App app{"dreinforce: dataset reinforcement toolkit"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config_path, "config file (section.key = value)");
    sub->add_option("-s,--set", common.overrides, "override, key=value (repeatable)");
  };

  auto* reinforce_cmd = app.add_subcommand("reinforce", "store teacher outputs for augmented copies of a dataset");
  add_common(reinforce_cmd);
  auto* train_cmd = app.add_subcommand("train", "train a model under one objective");
  add_common(train_cmd);

  std::string store_path;
  std::optional<std::size_t> image;
  std::size_t max_records = 5;
  auto* inspect_cmd = app.add_subcommand("inspect", "dump a store header, byte math and records");
  inspect_cmd->add_option("store", store_path, "store file")->required();
  inspect_cmd->add_option("--image", image, "print every record of this image");
  inspect_cmd->add_option("--records", max_records, "records shown without --image");

  auto* stats_cmd = app.add_subcommand("stats", "summary statistics of a store as JSON");
  stats_cmd->add_option("store", store_path, "store file")->required();

  bool quick = false;
  std::string out_dir = "report";
  std::string criteria;
  std::string cache;
  auto* report_cmd = app.add_subcommand("report", "run the desk experiments and write report.md and report.csv");
  report_cmd->add_flag("--quick", quick, "reduced sizes for a fast smoke run");
  report_cmd->add_option("--out", out_dir, "output directory");
  report_cmd->add_option("--criteria", criteria, "comma-separated criterion ids (default: all)");
  report_cmd->add_option("--cache", cache, "reuse teacher checkpoints and stores from this directory");

  std::string ds_out = "data";
  std::size_t train_n = 5000, val_n = 1000;
  std::uint64_t proto_seed = 7;
  auto* make_cmd = app.add_subcommand("make-dataset", "write the synthetic desk dataset as DIMG files");
  make_cmd->add_option("--out", ds_out, "output directory");
  make_cmd->add_option("--train", train_n, "training images");
  make_cmd->add_option("--val", val_n, "validation images");
  make_cmd->add_option("--seed", proto_seed, "class prototype seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*reinforce_cmd) return cmd_reinforce(common);
    if (*train_cmd) return cmd_train(common);
    if (*inspect_cmd) return cmd_inspect(store_path, image, max_records);
    if (*stats_cmd) return cmd_stats(store_path);
    if (*report_cmd) return cmd_report(quick, out_dir, criteria, cache);
    if (*make_cmd) return cmd_make_dataset(ds_out, train_n, val_n, proto_seed);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
