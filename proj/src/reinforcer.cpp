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

#include "dr/reinforcer.hpp"

#include <algorithm>
#include <condition_variable>
#include <exception>
#include <mutex>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <thread>

#include "dr/errors.hpp"

namespace dr {
namespace {

constexpr std::uint64_t kSelectTag = 0x5E1EC7;

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

std::vector<std::size_t> extreme(const std::vector<Candidate>& c, std::size_t n, auto key) {
  std::vector<std::size_t> pos(c.size());
  std::iota(pos.begin(), pos.end(), 0);
  std::stable_sort(pos.begin(), pos.end(), [&](std::size_t x, std::size_t y) {
    const double kx = key(c[x]), ky = key(c[y]);
    if (kx != ky) return kx < ky;
    return c[x].index < c[y].index;
  });
  pos.resize(n);
  std::sort(pos.begin(), pos.end());
  return pos;
}

std::vector<std::size_t> kmeans_pick(const std::vector<Candidate>& c, std::size_t k, std::size_t classes,
                                     SeededRng& rng) {
  const std::size_t n = c.size();
  std::vector<std::vector<double>> pts;
  pts.reserve(n);
  for (const auto& cand : c) pts.push_back(densify(cand.probs, classes));

  // k-means++ seeding.
  std::vector<std::vector<double>> centers;
  centers.push_back(pts[rng.below(n)]);
  std::vector<double> d2(n);
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& ctr : centers) best = std::min(best, sq_dist(pts[i], ctr));
      d2[i] = best;
      total += best;
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (r < acc && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.below(n);
    }
    centers.push_back(pts[pick]);
  }

  std::vector<std::size_t> assign(n, 0);
  for (int iter = 0; iter < 50; ++iter) {
    bool changed = iter == 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = sq_dist(pts[i], centers[0]);
      for (std::size_t j = 1; j < k; ++j) {
        const double d = sq_dist(pts[i], centers[j]);
        if (d < bd) {
          bd = d;
          best = j;
        }
      }
      if (assign[i] != best) changed = true;
      assign[i] = best;
    }
    if (!changed) break;
    for (std::size_t j = 0; j < k; ++j) {
      std::vector<double> mean(classes, 0.0);
      std::size_t cnt = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (assign[i] != j) continue;
        for (std::size_t q = 0; q < classes; ++q) mean[q] += pts[i][q];
        ++cnt;
      }
      if (cnt == 0) continue;  // empty cluster keeps its centre
      for (auto& v : mean) v /= static_cast<double>(cnt);
      centers[j] = std::move(mean);
    }
  }

  std::vector<bool> used(n, false);
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < k; ++j) {
    std::optional<std::size_t> best, fallback;
    double bd = 0.0, fd = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      const double d = sq_dist(pts[i], centers[j]);
      if (assign[i] == j && (!best || d < bd)) {
        best = i;
        bd = d;
      }
      if (!fallback || d < fd) {
        fallback = i;
        fd = d;
      }
    }
    const std::size_t pick = best ? *best : *fallback;
    used[pick] = true;
    out.push_back(pick);
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct ImageResult {
  std::vector<ReinforcementRecord> records;
};

// Scores every candidate of images [lo, hi) with one teacher call.
std::vector<ImageResult> process_chunk(const ReinforceJob& job, std::size_t lo, std::size_t hi,
                                       ReinforceProgress* progress) {
  const auto& ds = *job.dataset;
  const auto tdims = job.teacher->input_dims();
  const std::size_t classes = ds.num_classes;
  const std::size_t draws = job.double_mix ? job.samples_per_image / 2 : job.samples_per_image * job.candidate_multiplier;
  const std::size_t per_image = job.double_mix ? job.samples_per_image : draws;
  auto provider = [&ds](std::int32_t id) -> const Image& { return ds.images.at(static_cast<std::size_t>(id)); };

  AugmentationPolicy policy = job.policy;
  if (job.double_mix) policy.mix_p = 1.0;

  std::vector<AugmentationDescriptor> descs;
  std::vector<Image> inputs;
  descs.reserve((hi - lo) * per_image);
  inputs.reserve((hi - lo) * per_image);
  for (std::size_t i = lo; i < hi; ++i) {
    const auto& src = ds.images[i];
    for (std::size_t c = 0; c < draws; ++c) {
      auto rng = candidate_rng(job.seed, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(c));
      auto desc = sample_descriptor(policy, src.height, src.width, ds.size(), static_cast<std::int64_t>(i), rng);
      if (job.double_mix) {
        auto [first, second] = make_double_mix(desc, policy, rng);
        descs.push_back(first);
        descs.push_back(second);
      } else {
        descs.push_back(desc);
      }
    }
  }
  for (std::size_t q = 0; q < descs.size(); ++q) {
    const std::size_t i = lo + q / per_image;
    inputs.push_back(replay(descs[q], ds.images[i], provider, tdims.height, tdims.width));
  }

  ProbMatrix probs;
  try {
    probs = job.teacher->predict(inputs);
  } catch (const std::exception& e) {
    throw std::runtime_error("teacher failed on images " + std::to_string(lo) + ".." + std::to_string(hi - 1) + ": " +
                             e.what());
  }
  if (progress) progress->teacher_images += inputs.size();

  std::vector<ImageResult> out(hi - lo);
  for (std::size_t i = lo; i < hi; ++i) {
    std::vector<Candidate> cands(per_image);
    for (std::size_t c = 0; c < per_image; ++c) {
      const std::size_t q = (i - lo) * per_image + c;
      const auto row = probs.row(q);
      auto& cand = cands[c];
      cand.index = static_cast<std::uint32_t>(c);
      cand.desc = descs[q];
      cand.probs = sparsify(row, job.top_k);
      cand.metrics = distribution_metrics(row, ds.labels[i]);
    }
    auto& recs = out[i - lo].records;
    if (job.double_mix) {
      struct Pair {
        std::size_t a, b;
      };
      std::vector<Pair> pairs;
      for (std::size_t c = 0; c < per_image; c += 2) {
        Pair p{c, c + 1};
        if (cands[p.b].probs.confidence() > cands[p.a].probs.confidence()) std::swap(p.a, p.b);
        pairs.push_back(p);
      }
      std::stable_sort(pairs.begin(), pairs.end(), [&](const Pair& x, const Pair& y) {
        return cands[x.a].probs.confidence() > cands[y.a].probs.confidence();
      });
      for (const auto& p : pairs) {
        recs.push_back({cands[p.a].probs, cands[p.a].desc});
        recs.push_back({cands[p.b].probs, cands[p.b].desc});
      }
    } else {
      SeededRng sel_rng(job.seed, derive_stream(i, kSelectTag, 0));
      const auto keep = select_subset(cands, job.selection, job.samples_per_image, classes, sel_rng);
      std::vector<std::size_t> order(keep.begin(), keep.end());
      std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return cands[x].probs.confidence() > cands[y].probs.confidence();
      });
      for (auto pos : order) recs.push_back({cands[pos].probs, cands[pos].desc});
    }
  }
  return out;
}

}  // namespace

std::string_view selection_name(Selection s) {
  switch (s) {
    case Selection::Random: return "random";
    case Selection::MinConfidence: return "min_confidence";
    case Selection::MaxEntropy: return "max_entropy";
    case Selection::MaxLoss: return "max_loss";
    case Selection::KMeansDiverse: return "kmeans_diverse";
  }
  return "random";
}

Selection parse_selection(std::string_view name) {
  for (auto s : {Selection::Random, Selection::MinConfidence, Selection::MaxEntropy, Selection::MaxLoss,
                 Selection::KMeansDiverse}) {
    if (name == selection_name(s)) return s;
  }
  throw ValidationError("unknown selection '" + std::string(name) + "'");
}

void ReinforceJob::check() const {
  if (!dataset) throw ValidationError("reinforce: no dataset");
  if (!teacher) throw ValidationError("reinforce: no teacher");
  dataset->check();
  policy.check();
  if (samples_per_image == 0) throw ValidationError("samples_per_image must be >= 1");
  if (samples_per_image > 0xFFFF) throw ValidationError("samples_per_image must fit in 16 bits");
  if (candidate_multiplier == 0) throw ValidationError("candidate multiplier must be >= 1");
  if (selection == Selection::KMeansDiverse && candidate_multiplier < 2) {
    throw ValidationError("kmeans_diverse selection needs a candidate multiplier >= 2");
  }
  if (top_k == 0 || top_k > 255 || top_k > dataset->num_classes) {
    throw ValidationError("top_k must be in [1, min(255, num_classes)]");
  }
  if (teacher->num_classes() != dataset->num_classes) throw ValidationError("teacher and dataset class counts differ");
  if (workers == 0) throw ValidationError("workers must be >= 1");
  if (teacher_batch == 0) throw ValidationError("teacher batch must be >= 1");
  if (double_mix) {
    if (!(variant_flags(policy.variant) & kMixing)) throw ValidationError("double mix needs a mixing variant");
    if (samples_per_image % 2) throw ValidationError("double mix needs an even samples_per_image");
    if (candidate_multiplier != 1) throw ValidationError("double mix needs candidate multiplier 1");
  }
  if ((variant_flags(policy.variant) & kMixing) && dataset->size() < 2) {
    throw ValidationError("mixing needs at least two images");
  }
}

SeededRng candidate_rng(std::uint64_t seed, std::uint32_t image_id, std::uint32_t candidate) {
  return SeededRng(seed, derive_stream(image_id, candidate));
}

std::vector<std::size_t> select_subset(const std::vector<Candidate>& candidates, Selection strategy, std::size_t n,
                                       std::size_t num_classes, SeededRng& rng) {
  if (n == 0 || n > candidates.size()) throw ValidationError("select_subset: n must be in [1, candidate count]");
  if (n == candidates.size()) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  switch (strategy) {
    case Selection::Random: {
      std::vector<std::size_t> pos(candidates.size());
      std::iota(pos.begin(), pos.end(), 0);
      for (std::size_t i = 0; i < n; ++i) std::swap(pos[i], pos[i + rng.below(pos.size() - i)]);
      pos.resize(n);
      std::sort(pos.begin(), pos.end());
      return pos;
    }
    case Selection::MinConfidence:
      return extreme(candidates, n, [](const Candidate& c) { return c.metrics.confidence; });
    case Selection::MaxEntropy:
      return extreme(candidates, n, [](const Candidate& c) { return -c.metrics.entropy; });
    case Selection::MaxLoss:
      return extreme(candidates, n, [](const Candidate& c) { return -c.metrics.loss; });
    case Selection::KMeansDiverse:
      return kmeans_pick(candidates, n, num_classes, rng);
  }
  throw ValidationError("select_subset: unknown strategy");
}

double ReinforceProgress::elapsed_seconds() const {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

double ReinforceProgress::throughput() const {
  const double t = elapsed_seconds();
  return t > 0.0 ? static_cast<double>(images_done.load()) / t : 0.0;
}

double ReinforceProgress::eta_seconds() const {
  const auto done = images_done.load();
  if (done == 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(total_images - std::min(total_images, done)) / throughput();
}

ReinforcementStore reinforce(const ReinforceJob& job, ReinforceProgress* progress, ReinforceStats* stats) {
  job.check();
  const auto& ds = *job.dataset;
  ReinforceProgress local;
  ReinforceProgress& prog = progress ? *progress : local;
  prog.total_images = ds.size();
  prog.start = std::chrono::steady_clock::now();

  StoreHeader header;
  header.flags = variant_flags(job.policy.variant) | (job.double_mix ? kDoubleMixPairs : 0);
  header.num_classes = static_cast<std::uint32_t>(ds.num_classes);
  header.top_k = static_cast<std::uint8_t>(job.top_k);
  header.samples_per_image = static_cast<std::uint16_t>(job.samples_per_image);
  header.num_images = ds.size();
  header.teacher_id = job.teacher->identity();
  StoreBuilder builder(header);

  const std::size_t draws = job.samples_per_image * job.candidate_multiplier;
  const std::size_t chunk = std::max<std::size_t>(1, job.teacher_batch / draws);
  const std::size_t num_chunks = (ds.size() + chunk - 1) / chunk;
  const std::size_t lookahead = 4 * job.workers;

  std::mutex mu;
  std::condition_variable cv;
  std::vector<std::optional<std::vector<ImageResult>>> done(num_chunks);
  std::size_t next_claim = 0;
  std::size_t next_write = 0;
  std::exception_ptr failure;

  auto worker = [&] {
    while (true) {
      std::size_t c;
      {
        std::unique_lock lk(mu);
        cv.wait(lk, [&] { return failure || next_claim >= num_chunks || next_claim < next_write + lookahead; });
        if (failure || next_claim >= num_chunks) return;
        c = next_claim++;
      }
      try {
        auto res = process_chunk(job, c * chunk, std::min(ds.size(), (c + 1) * chunk), &prog);
        std::lock_guard lk(mu);
        done[c] = std::move(res);
      } catch (...) {
        std::lock_guard lk(mu);
        if (!failure) failure = std::current_exception();
      }
      cv.notify_all();
    }
  };

  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < job.workers; ++w) pool.emplace_back(worker);
    while (next_write < num_chunks) {
      std::vector<ImageResult> res;
      {
        std::unique_lock lk(mu);
        cv.wait(lk, [&] { return failure || done[next_write].has_value(); });
        if (failure) break;
        res = std::move(*done[next_write]);
        done[next_write].reset();
      }
      for (auto& r : res) {
        builder.append_group(r.records);
        prog.records_written += r.records.size();
        prog.images_done += 1;
        prog.bytes_written = builder.bytes_written();
      }
      {
        std::lock_guard lk(mu);
        ++next_write;
      }
      cv.notify_all();
    }
  }
  if (failure) std::rethrow_exception(failure);

  auto store = std::move(builder).finish();
  prog.bytes_written = store.bytes().size();
  if (stats) {
    stats->images = prog.images_done;
    stats->records = prog.records_written;
    stats->bytes = prog.bytes_written;
    stats->teacher_images = prog.teacher_images;
    stats->seconds = prog.elapsed_seconds();
    stats->images_per_second = prog.throughput();
  }
  return store;
}

}  // namespace dr
