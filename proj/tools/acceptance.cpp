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

// Acceptance run: one PASS/FAIL line per criterion. Exits nonzero only when a
// blocking criterion fails.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "experiments.hpp"

int main(int argc, char** argv) {
  using namespace dr::exp;
  CLI::App app{"acceptance criteria 1-8"};
  bool quick = false;
  std::string out_dir, cache;
  app.add_flag("--quick", quick, "reduced sizes; numbers are not meaningful");
  app.add_option("--out", out_dir, "also write report.md and report.csv here");
  app.add_option("--cache", cache, "reuse teacher checkpoints and stores from this directory");
  CLI11_PARSE(app, argc, argv);

  auto opts = quick ? DeskOptions::quick_run() : DeskOptions::full();
  opts.cache_dir = cache;
  Desk desk(opts, &std::cerr);
  const auto results = run_criteria(desk, {1, 2, 3, 4, 5, 6, 7, 8}, &std::cerr);

  bool blocking_failed = false;
  for (const auto& r : results) {
    std::cout << "criterion " << r.id << ": " << (r.pass ? "PASS" : "FAIL") << (r.blocking ? "" : " (advisory)") << " - "
              << r.title;
    for (const auto& m : r.metrics) std::cout << "; " << m.name << " " << fmt(m.value) << (m.pass ? "" : " [miss]");
    std::cout << "\n";
    blocking_failed |= r.blocking && !r.pass;
  }
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream(std::filesystem::path(out_dir) / "report.md") << to_markdown(results, opts);
    std::ofstream csv(std::filesystem::path(out_dir) / "report.csv");
    write_csv(results, csv);
  }
  std::cout << (blocking_failed ? "acceptance: FAIL" : "acceptance: PASS") << "\n";
  return blocking_failed ? 1 : 0;
}
