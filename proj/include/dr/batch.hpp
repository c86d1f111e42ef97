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

namespace dr {

// One mini-batch of student inputs with dense soft targets (rows x num_classes).
struct Batch {
  std::vector<Image> images;
  std::vector<float> targets;
  std::vector<std::uint16_t> labels;
  std::vector<std::uint32_t> ids;
  std::size_t num_classes = 0;

  std::size_t size() const { return images.size(); }
};

}  // namespace dr
