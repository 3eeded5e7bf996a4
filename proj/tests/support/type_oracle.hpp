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

// Brute-force datatype reference used only by tests. It expands a constructor
// description element by element straight from the MPI typemap rules and never
// touches the runtime's lowered descriptor tree.

#include <algorithm>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "minimpi/datatype.hpp"

namespace minimpi::testing {

struct TypeSpec;
using SpecPtr = std::shared_ptr<const TypeSpec>;

struct TypeSpec {
  enum class Op { kBasic, kContiguous, kVector, kHvector, kIndexedBlock, kStruct, kSubarray, kResized };
  Op op = Op::kBasic;
  std::int64_t basic_size = 1;
  std::int64_t count = 0;
  std::int64_t blocklength = 0;
  std::int64_t stride = 0;
  std::int64_t lb = 0;
  std::int64_t extent = 0;
  std::vector<std::int64_t> displs;
  std::vector<std::int64_t> blocklengths;
  std::vector<std::int64_t> full, sub, offs;
  std::vector<SpecPtr> children;
};

struct Bounds {
  std::int64_t lb = 0;
  std::int64_t ub = 0;
  bool any = false;
  void add(std::int64_t l, std::int64_t u) {
    lb = any ? std::min(lb, l) : l;
    ub = any ? std::max(ub, u) : u;
    any = true;
  }
};

// MPI lower/upper bound markers of a type description, computed from the definition.
inline Bounds spec_bounds(const TypeSpec& s) {
  using Op = TypeSpec::Op;
  Bounds b;
  switch (s.op) {
    case Op::kBasic:
      b.add(0, s.basic_size);
      return b;
    case Op::kResized:
      b.add(s.lb, s.lb + s.extent);
      return b;
    case Op::kSubarray: {
      const Bounds c = spec_bounds(*s.children[0]);
      std::int64_t total = c.ub - c.lb;
      for (auto f : s.full) total *= f;
      b.add(0, total);
      return b;
    }
    default:
      break;
  }
  const Bounds c = spec_bounds(*s.children[0]);
  const std::int64_t ext = c.ub - c.lb;
  auto place = [&](const Bounds& cb, std::int64_t disp) { b.add(disp + cb.lb, disp + cb.ub); };
  switch (s.op) {
    case Op::kContiguous:
      for (std::int64_t i = 0; i < s.count; ++i) place(c, i * ext);
      break;
    case Op::kVector:
    case Op::kHvector: {
      const std::int64_t sb = s.op == Op::kVector ? s.stride * ext : s.stride;
      for (std::int64_t i = 0; i < s.count; ++i)
        for (std::int64_t k = 0; k < s.blocklength; ++k) place(c, i * sb + k * ext);
      break;
    }
    case Op::kIndexedBlock:
      for (auto d : s.displs)
        for (std::int64_t k = 0; k < s.blocklength; ++k) place(c, d * ext + k * ext);
      break;
    case Op::kStruct:
      for (std::size_t i = 0; i < s.children.size(); ++i) {
        const Bounds ci = spec_bounds(*s.children[i]);
        for (std::int64_t k = 0; k < s.blocklengths[i]; ++k)
          place(ci, s.displs[i] + k * (ci.ub - ci.lb));
      }
      break;
    default:
      break;
  }
  if (!b.any) b.add(0, 0);
  return b;
}

// Emits every basic element as (offset, size) in traversal order.
template <class F>
void spec_elements(const TypeSpec& s, std::int64_t base, F& f) {
  using Op = TypeSpec::Op;
  if (s.op == Op::kBasic) {
    f(base, s.basic_size);
    return;
  }
  if (s.op == Op::kResized) {
    spec_elements(*s.children[0], base, f);
    return;
  }
  if (s.op == Op::kStruct) {
    for (std::size_t i = 0; i < s.children.size(); ++i) {
      const Bounds ci = spec_bounds(*s.children[i]);
      for (std::int64_t k = 0; k < s.blocklengths[i]; ++k)
        spec_elements(*s.children[i], base + s.displs[i] + k * (ci.ub - ci.lb), f);
    }
    return;
  }
  const TypeSpec& c = *s.children[0];
  const Bounds cb = spec_bounds(c);
  const std::int64_t ext = cb.ub - cb.lb;
  switch (s.op) {
    case Op::kContiguous:
      for (std::int64_t i = 0; i < s.count; ++i) spec_elements(c, base + i * ext, f);
      break;
    case Op::kVector:
    case Op::kHvector: {
      const std::int64_t sb = s.op == Op::kVector ? s.stride * ext : s.stride;
      for (std::int64_t i = 0; i < s.count; ++i)
        for (std::int64_t k = 0; k < s.blocklength; ++k) spec_elements(c, base + i * sb + k * ext, f);
      break;
    }
    case Op::kIndexedBlock:
      for (auto d : s.displs)
        for (std::int64_t k = 0; k < s.blocklength; ++k) spec_elements(c, base + (d + k) * ext, f);
      break;
    case Op::kSubarray: {
      const std::size_t n = s.full.size();
      std::vector<std::int64_t> idx(n, 0);
      std::vector<std::int64_t> stride(n);
      stride[n - 1] = ext;
      for (std::size_t d = n - 1; d > 0; --d) stride[d - 1] = stride[d] * s.full[d];
      for (auto v : s.sub)
        if (v == 0) return;
      while (true) {
        std::int64_t off = 0;
        for (std::size_t d = 0; d < n; ++d) off += (s.offs[d] + idx[d]) * stride[d];
        spec_elements(c, base + off, f);
        std::size_t d = n;
        while (d > 0) {
          --d;
          if (++idx[d] < s.sub[d]) break;
          idx[d] = 0;
          if (d == 0) return;
        }
      }
    }
    default:
      break;
  }
}

// Flattens then merges traversal-adjacent, byte-adjacent runs.
inline std::vector<IovSegment> oracle_segments(const TypeSpec& s) {
  std::vector<IovSegment> out;
  auto sink = [&](std::int64_t off, std::int64_t len) {
    if (!out.empty() && out.back().base_offset + out.back().length == off) {
      out.back().length += len;
    } else {
      out.push_back({off, len});
    }
  };
  spec_elements(s, 0, sink);
  return out;
}

inline std::int64_t spec_element_count(const TypeSpec& s) {
  using Op = TypeSpec::Op;
  switch (s.op) {
    case Op::kBasic: return 1;
    case Op::kResized: return spec_element_count(*s.children[0]);
    case Op::kContiguous: return s.count * spec_element_count(*s.children[0]);
    case Op::kVector:
    case Op::kHvector: return s.count * s.blocklength * spec_element_count(*s.children[0]);
    case Op::kIndexedBlock:
      return static_cast<std::int64_t>(s.displs.size()) * s.blocklength * spec_element_count(*s.children[0]);
    case Op::kSubarray: {
      std::int64_t n = spec_element_count(*s.children[0]);
      for (auto v : s.sub) n *= v;
      return n;
    }
    case Op::kStruct: {
      std::int64_t n = 0;
      for (std::size_t i = 0; i < s.children.size(); ++i)
        n += s.blocklengths[i] * spec_element_count(*s.children[i]);
      return n;
    }
  }
  return 0;
}

inline Datatype build_type(const TypeSpec& s) {
  using Op = TypeSpec::Op;
  switch (s.op) {
    case Op::kBasic: return Datatype::basic(s.basic_size);
    case Op::kContiguous: return Datatype::contiguous(s.count, build_type(*s.children[0]));
    case Op::kVector: return Datatype::vector(s.count, s.blocklength, s.stride, build_type(*s.children[0]));
    case Op::kHvector: return Datatype::hvector(s.count, s.blocklength, s.stride, build_type(*s.children[0]));
    case Op::kIndexedBlock: return Datatype::indexed_block(s.blocklength, s.displs, build_type(*s.children[0]));
    case Op::kResized: return Datatype::resized(s.lb, s.extent, build_type(*s.children[0]));
    case Op::kSubarray: return Datatype::subarray(s.full, s.sub, s.offs, build_type(*s.children[0]));
    case Op::kStruct: {
      std::vector<Datatype> kids;
      for (auto& c : s.children) kids.push_back(build_type(*c));
      return Datatype::create_struct(s.blocklengths, s.displs, kids);
    }
  }
  return {};
}

// Random nested constructor trees. `allow_overlap` admits negative strides and
// repeated displacements.
class TypeSpecGenerator {
 public:
  explicit TypeSpecGenerator(std::uint64_t seed, bool allow_overlap = true)
      : rng_(seed), allow_overlap_(allow_overlap) {}

  SpecPtr generate(int max_depth, std::int64_t max_elements) {
    for (;;) {
      SpecPtr s = node(max_depth);
      const std::int64_t n = spec_element_count(*s);
      if (n >= 1 && n <= max_elements) return s;
    }
  }

 private:
  std::int64_t uniform(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng_);
  }

  SpecPtr node(int depth) {
    auto s = std::make_shared<TypeSpec>();
    using Op = TypeSpec::Op;
    if (depth == 0 || uniform(0, 5) == 0) {
      static constexpr std::int64_t kSizes[] = {1, 2, 4, 8, 16};
      s->op = Op::kBasic;
      s->basic_size = kSizes[uniform(0, 4)];
      return s;
    }
    s->op = static_cast<Op>(uniform(1, 7));
    SpecPtr child = node(depth - 1);
    const Bounds cb = spec_bounds(*child);
    const std::int64_t ext = std::max<std::int64_t>(1, cb.ub - cb.lb);
    switch (s->op) {
      case Op::kContiguous:
        s->count = uniform(0, 12);
        s->children = {child};
        break;
      case Op::kVector:
        s->count = uniform(0, 10);
        s->blocklength = uniform(0, 4);
        s->stride = uniform(allow_overlap_ ? -6 : s->blocklength, 8);
        s->children = {child};
        break;
      case Op::kHvector:
        s->count = uniform(0, 10);
        s->blocklength = uniform(0, 4);
        s->stride = allow_overlap_ ? uniform(-3 * ext, 8 * ext) : uniform(s->blocklength * ext, 8 * ext);
        s->children = {child};
        break;
      case Op::kIndexedBlock: {
        s->blocklength = uniform(0, 4);
        const auto n = uniform(0, 6);
        std::int64_t pos = 0;
        for (int i = 0; i < n; ++i) {
          pos += allow_overlap_ ? uniform(-2, 6) : uniform(s->blocklength, s->blocklength + 4);
          s->displs.push_back(pos);
        }
        s->children = {child};
        break;
      }
      case Op::kStruct: {
        const auto n = uniform(1, 4);
        std::int64_t pos = uniform(0, 8);
        for (int i = 0; i < n; ++i) {
          SpecPtr c = i == 0 ? child : node(depth - 1);
          const Bounds b = spec_bounds(*c);
          const std::int64_t bl = uniform(0, 3);
          s->children.push_back(c);
          s->blocklengths.push_back(bl);
          s->displs.push_back(pos - b.lb);
          const std::int64_t width = bl * std::max<std::int64_t>(0, b.ub - b.lb);
          pos += allow_overlap_ ? uniform(-4, width + 8) : width + uniform(0, 8);
        }
        break;
      }
      case Op::kSubarray: {
        const auto nd = uniform(1, 3);
        for (int d = 0; d < nd; ++d) {
          const std::int64_t f = uniform(1, 12);
          const std::int64_t sb = uniform(0, f);
          s->full.push_back(f);
          s->sub.push_back(sb);
          s->offs.push_back(uniform(0, f - sb));
        }
        s->children = {child};
        break;
      }
      case Op::kResized:
        s->lb = uniform(-8, 8);
        s->extent = uniform(0, 2 * ext + 8);
        s->children = {child};
        break;
      default:
        break;
    }
    return s;
  }

  std::mt19937_64 rng_;
  bool allow_overlap_;
};

}  // namespace minimpi::testing
