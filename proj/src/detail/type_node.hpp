/* Copyright 2026 The minimpi Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "minimpi/datatype.hpp"

namespace minimpi::detail {

// Every public constructor lowers onto four node shapes. Repeat places
// `count` copies of one child at a uniform byte stride; List places
// heterogeneous children at explicit displacements.
enum class Shape { kBasic, kRepeat, kList, kResized };

struct TypeNode;
using NodePtr = std::shared_ptr<const TypeNode>;

struct TypePart {
  std::int64_t disp = 0;
  NodePtr child;
  // First segment of this part continues the previous non-empty part's last one.
  bool joined = false;
};

struct TypeNode {
  TypeKind kind = TypeKind::kBasic;
  Shape shape = Shape::kBasic;

  std::int64_t size = 0;
  std::int64_t lb = 0;
  std::int64_t ub = 0;
  std::int64_t seg_count = 0;
  // Offsets of the first segment start and last segment end; meaningful only
  // when seg_count > 0.
  std::int64_t first_start = 0;
  std::int64_t last_end = 0;
  int depth = 1;
  std::int64_t node_count = 1;

  // kRepeat
  std::int64_t count = 0;
  std::int64_t stride = 0;
  std::int64_t disp = 0;
  bool joined = false;
  NodePtr child;

  // kList: start_prefix[p] = segment starts owned by parts before p.
  std::vector<TypePart> parts;
  std::vector<std::int64_t> start_prefix;
  std::vector<std::int64_t> size_prefix;

  std::string label;
  mutable std::atomic<bool> committed{false};
};

// Resolves a merged-segment index of a Repeat/List node to the child instance
// holding its first byte and the child-local segment index there.
inline std::pair<std::int64_t, std::int64_t> locate_repeat(const TypeNode& n, std::int64_t g) {
  const std::int64_t c = n.child->seg_count;
  if (!n.joined) return {g / c, g % c};
  if (c == 1) return {0, 0};
  if (g < c) return {0, g};
  const std::int64_t r = g - c;
  return {1 + r / (c - 1), 1 + r % (c - 1)};
}

std::pair<std::size_t, std::int64_t> locate_list(const TypeNode& n, std::int64_t g);

std::int64_t bytes_before(const TypeNode& n, std::int64_t g);

// Emits byte runs from merged segment `g` onward in traversal order. Runs are
// not necessarily maximal; callers that need segments coalesce. `f(off, len)`
// returns false to stop.
template <class F>
bool emit_runs(const TypeNode& n, std::int64_t base, std::int64_t g, F& f) {
  if (g == 0 && n.seg_count == 1) return f(base + n.first_start, n.size);
  switch (n.shape) {
    case Shape::kBasic:
      return f(base, n.size);
    case Shape::kResized:
      return emit_runs(*n.child, base, g, f);
    case Shape::kRepeat: {
      if (n.seg_count == 0) return true;
      auto [i, j] = locate_repeat(n, g);
      for (; i < n.count; ++i, j = 0) {
        if (!emit_runs(*n.child, base + n.disp + i * n.stride, j, f)) return false;
      }
      return true;
    }
    case Shape::kList: {
      if (n.seg_count == 0) return true;
      auto [p, j] = locate_list(n, g);
      for (; p < n.parts.size(); ++p, j = 0) {
        const TypePart& part = n.parts[p];
        if (part.child->seg_count == 0) continue;
        if (!emit_runs(*part.child, base + part.disp, j, f)) return false;
      }
      return true;
    }
  }
  return true;
}

}  // namespace minimpi::detail
