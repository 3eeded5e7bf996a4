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

#include "minimpi/datatype.hpp"

#include <algorithm>
#include <cstring>
#include <set>
#include <sstream>

#include "detail/type_node.hpp"
#include "minimpi/error.hpp"

namespace minimpi {

using detail::NodePtr;
using detail::Shape;
using detail::TypeNode;
using detail::TypePart;

namespace detail {

std::pair<std::size_t, std::int64_t> locate_list(const TypeNode& n, std::int64_t g) {
  auto it = std::upper_bound(n.start_prefix.begin(), n.start_prefix.end(), g);
  auto p = static_cast<std::size_t>(std::distance(n.start_prefix.begin(), it) - 1);
  return {p, g - n.start_prefix[p] + (n.parts[p].joined ? 1 : 0)};
}

std::int64_t bytes_before(const TypeNode& n, std::int64_t g) {
  if (g >= n.seg_count) return n.size;
  if (g == 0) return 0;
  switch (n.shape) {
    case Shape::kBasic:
      return 0;
    case Shape::kResized:
      return bytes_before(*n.child, g);
    case Shape::kRepeat: {
      auto [i, j] = locate_repeat(n, g);
      return i * n.child->size + bytes_before(*n.child, j);
    }
    case Shape::kList: {
      auto [p, j] = locate_list(n, g);
      return n.size_prefix[p] + bytes_before(*n.parts[p].child, j);
    }
  }
  return 0;
}

}  // namespace detail

namespace {

std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
  std::int64_t r = 0;
  if (__builtin_mul_overflow(a, b, &r)) fail(Errc::kArg, "datatype size overflows 64 bits");
  return r;
}

std::int64_t checked_add(std::int64_t a, std::int64_t b) {
  std::int64_t r = 0;
  if (__builtin_add_overflow(a, b, &r)) fail(Errc::kArg, "datatype size overflows 64 bits");
  return r;
}

NodePtr as_const(const Datatype& d) {
  if (!d.valid()) fail(Errc::kArg, "invalid (freed or default) datatype");
  return d.node_ptr();
}

std::string join_ints(std::span<const std::int64_t> v) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  os << ']';
  return os.str();
}

std::shared_ptr<TypeNode> make_repeat(TypeKind kind, std::int64_t count, std::int64_t stride,
                                      std::int64_t disp, NodePtr child) {
  auto n = std::make_shared<TypeNode>();
  n->kind = kind;
  n->shape = Shape::kRepeat;
  n->count = count;
  n->stride = stride;
  n->disp = disp;
  n->depth = child->depth + 1;
  n->node_count = child->node_count + 1;
  if (count > 0) {
    n->size = checked_mul(count, child->size);
    const std::int64_t span = checked_mul(count - 1, stride);
    n->lb = disp + std::min<std::int64_t>(0, span) + child->lb;
    n->ub = disp + std::max<std::int64_t>(0, span) + child->ub;
    if (child->seg_count > 0) {
      const std::int64_t c = child->seg_count;
      n->joined = count >= 2 && stride == child->last_end - child->first_start;
      n->seg_count = checked_add(checked_mul(count, c), n->joined ? -(count - 1) : 0);
      n->first_start = disp + child->first_start;
      n->last_end = disp + span + child->last_end;
    }
  }
  n->child = std::move(child);
  return n;
}

std::shared_ptr<TypeNode> make_list(TypeKind kind, std::vector<TypePart> parts) {
  auto n = std::make_shared<TypeNode>();
  n->kind = kind;
  n->shape = Shape::kList;
  n->start_prefix.assign(parts.size() + 1, 0);
  n->size_prefix.assign(parts.size() + 1, 0);
  std::set<const TypeNode*> distinct;
  int depth = 0;
  bool have_bounds = false;
  bool have_prev = false;
  std::int64_t prev_end = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    TypePart& part = parts[p];
    const TypeNode& c = *part.child;
    if (distinct.insert(&c).second) n->node_count += c.node_count;
    depth = std::max(depth, c.depth);
    const std::int64_t lb = part.disp + c.lb;
    const std::int64_t ub = part.disp + c.ub;
    n->lb = have_bounds ? std::min(n->lb, lb) : lb;
    n->ub = have_bounds ? std::max(n->ub, ub) : ub;
    have_bounds = true;
    std::int64_t starts = 0;
    if (c.seg_count > 0) {
      part.joined = have_prev && prev_end == part.disp + c.first_start;
      starts = c.seg_count - (part.joined ? 1 : 0);
      if (!have_prev) n->first_start = part.disp + c.first_start;
      prev_end = part.disp + c.last_end;
      have_prev = true;
    }
    n->start_prefix[p + 1] = checked_add(n->start_prefix[p], starts);
    n->size_prefix[p + 1] = checked_add(n->size_prefix[p], c.size);
  }
  n->size = n->size_prefix.back();
  n->seg_count = n->start_prefix.back();
  n->last_end = prev_end;
  n->depth = depth + 1;
  n->parts = std::move(parts);
  return n;
}

// A run of `blocklength` copies of `child` at its extent, or the child itself.
NodePtr block_of(std::int64_t blocklength, const NodePtr& child) {
  if (blocklength == 1) return child;
  return make_repeat(TypeKind::kContiguous, blocklength, child->ub - child->lb, 0, child);
}

// A constructor that places no elements at all: no markers, lb = ub = 0.
std::shared_ptr<TypeNode> make_void(TypeKind kind) { return make_list(kind, {}); }

void check_count(std::int64_t v, const char* what) {
  if (v < 0) fail(Errc::kArg, std::string(what) + " must be non-negative");
}

}  // namespace

Datatype Datatype::basic(std::int64_t size_bytes) {
  if (size_bytes < 1) fail(Errc::kArg, "basic type size must be positive");
  auto n = std::make_shared<TypeNode>();
  n->kind = TypeKind::kBasic;
  n->shape = Shape::kBasic;
  n->size = size_bytes;
  n->ub = size_bytes;
  n->seg_count = 1;
  n->last_end = size_bytes;
  n->label = size_bytes == 1 ? "byte" : "basic(" + std::to_string(size_bytes) + ")";
  n->committed = true;
  return Datatype(std::move(n));
}

Datatype Datatype::contiguous(std::int64_t count, const Datatype& child) {
  check_count(count, "count");
  NodePtr c = as_const(child);
  auto n = count == 0 ? make_void(TypeKind::kContiguous)
                      : make_repeat(TypeKind::kContiguous, count, c->ub - c->lb, 0, c);
  n->label = "contiguous(" + std::to_string(count) + "," + c->label + ")";
  return Datatype(std::move(n));
}

Datatype Datatype::vector(std::int64_t count, std::int64_t blocklength, std::int64_t stride,
                          const Datatype& child) {
  NodePtr c = as_const(child);
  Datatype d = hvector(count, blocklength, checked_mul(stride, c->ub - c->lb), child);
  TypeNode& n = *d.node_;
  n.kind = TypeKind::kVector;
  n.label = "vector(" + std::to_string(count) + "," + std::to_string(blocklength) + "," +
            std::to_string(stride) + "," + c->label + ")";
  return d;
}

Datatype Datatype::hvector(std::int64_t count, std::int64_t blocklength,
                           std::int64_t stride_bytes, const Datatype& child) {
  check_count(count, "count");
  check_count(blocklength, "blocklength");
  NodePtr c = as_const(child);
  auto n = count == 0 || blocklength == 0
               ? make_void(TypeKind::kHvector)
               : make_repeat(TypeKind::kHvector, count, stride_bytes, 0, block_of(blocklength, c));
  n->label = "hvector(" + std::to_string(count) + "," + std::to_string(blocklength) + "," +
             std::to_string(stride_bytes) + "," + c->label + ")";
  return Datatype(std::move(n));
}

Datatype Datatype::indexed_block(std::int64_t blocklength,
                                 std::span<const std::int64_t> displacements,
                                 const Datatype& child) {
  check_count(blocklength, "blocklength");
  NodePtr c = as_const(child);
  const std::int64_t ext = c->ub - c->lb;
  NodePtr block = block_of(blocklength, c);
  std::vector<TypePart> parts;
  parts.reserve(displacements.size());
  if (blocklength > 0)
    for (std::int64_t d : displacements) parts.push_back({checked_mul(d, ext), block, false});
  auto n = make_list(TypeKind::kIndexedBlock, std::move(parts));
  n->label = "indexed_block(" + std::to_string(blocklength) + "," + join_ints(displacements) +
             "," + c->label + ")";
  return Datatype(std::move(n));
}

Datatype Datatype::create_struct(std::span<const std::int64_t> blocklengths,
                                 std::span<const std::int64_t> byte_displacements,
                                 std::span<const Datatype> children) {
  if (blocklengths.size() != byte_displacements.size() || blocklengths.size() != children.size())
    fail(Errc::kArg, "struct argument arrays differ in length");
  std::vector<TypePart> parts;
  std::string label = "struct(" + join_ints(blocklengths) + "," + join_ints(byte_displacements) + ",[";
  for (std::size_t i = 0; i < children.size(); ++i) {
    check_count(blocklengths[i], "blocklength");
    NodePtr c = as_const(children[i]);
    label += (i ? "," : "") + c->label;
    if (blocklengths[i] == 0) continue;
    parts.push_back({byte_displacements[i], block_of(blocklengths[i], c), false});
  }
  auto n = make_list(TypeKind::kStruct, std::move(parts));
  n->label = label + "])";
  return Datatype(std::move(n));
}

Datatype Datatype::subarray(std::span<const std::int64_t> full_sizes,
                            std::span<const std::int64_t> sub_sizes,
                            std::span<const std::int64_t> sub_offsets, const Datatype& child) {
  const std::size_t ndims = full_sizes.size();
  if (ndims == 0 || sub_sizes.size() != ndims || sub_offsets.size() != ndims)
    fail(Errc::kArg, "subarray dimension arrays must be non-empty and equal length");
  for (std::size_t d = 0; d < ndims; ++d) {
    if (full_sizes[d] < 1 || sub_sizes[d] < 0 || sub_offsets[d] < 0 ||
        sub_offsets[d] + sub_sizes[d] > full_sizes[d])
      fail(Errc::kArg, "subarray bounds violated in dimension " + std::to_string(d));
  }
  NodePtr c = as_const(child);
  const std::int64_t ext = c->ub - c->lb;
  // Row-major strides in bytes; the innermost dimension is a plain block.
  std::vector<std::int64_t> stride(ndims);
  stride[ndims - 1] = ext;
  for (std::size_t d = ndims - 1; d > 0; --d) stride[d - 1] = checked_mul(stride[d], full_sizes[d]);
  std::int64_t start = 0;
  for (std::size_t d = 0; d < ndims; ++d) start = checked_add(start, checked_mul(sub_offsets[d], stride[d]));

  NodePtr inner = c;
  for (std::size_t k = ndims; k > 0; --k) {
    const std::size_t d = k - 1;
    inner = make_repeat(TypeKind::kContiguous, sub_sizes[d], stride[d], d == 0 ? start : 0, inner);
  }
  auto n = std::make_shared<TypeNode>();
  const TypeNode& body = *inner;
  n->kind = TypeKind::kSubarray;
  n->shape = Shape::kResized;
  n->size = body.size;
  n->lb = 0;
  n->ub = checked_mul(stride[0], full_sizes[0]);
  n->seg_count = body.seg_count;
  n->first_start = body.first_start;
  n->last_end = body.last_end;
  n->depth = body.depth + 1;
  n->node_count = body.node_count + 1;
  n->child = inner;
  n->label = "subarray(" + std::to_string(ndims) + "," + join_ints(full_sizes) + "," +
             join_ints(sub_sizes) + "," + join_ints(sub_offsets) + "," + c->label + ")";
  return Datatype(std::move(n));
}

Datatype Datatype::resized(std::int64_t lb, std::int64_t extent, const Datatype& child) {
  if (extent < 0) fail(Errc::kArg, "resized extent must be non-negative");
  NodePtr c = as_const(child);
  auto n = std::make_shared<TypeNode>();
  n->kind = TypeKind::kResized;
  n->shape = Shape::kResized;
  n->size = c->size;
  n->lb = lb;
  n->ub = checked_add(lb, extent);
  n->seg_count = c->seg_count;
  n->first_start = c->first_start;
  n->last_end = c->last_end;
  n->depth = c->depth + 1;
  n->node_count = c->node_count + 1;
  n->child = c;
  n->label = "resized(" + std::to_string(lb) + "," + std::to_string(extent) + "," + c->label + ")";
  return Datatype(std::move(n));
}

Datatype& Datatype::commit() {
  node().committed.store(true, std::memory_order_release);
  return *this;
}

bool Datatype::committed() const { return node().committed.load(std::memory_order_acquire); }
TypeKind Datatype::kind() const { return node().kind; }
std::int64_t Datatype::size() const { return node().size; }
std::int64_t Datatype::lb() const { return node().lb; }
std::int64_t Datatype::extent() const { return node().ub - node().lb; }
std::int64_t Datatype::segment_count() const { return node().seg_count; }
std::int64_t Datatype::node_count() const { return node().node_count; }
int Datatype::depth() const { return node().depth; }
std::string Datatype::describe() const { return node().label; }

bool Datatype::is_contiguous() const {
  const TypeNode& n = node();
  return n.seg_count == 1 && n.size == n.ub - n.lb && n.first_start == n.lb;
}

const detail::TypeNode& Datatype::node() const {
  if (!node_) fail(Errc::kArg, "invalid (freed or default) datatype");
  return *node_;
}

namespace {

const TypeNode& committed_node(const Datatype& type) {
  const TypeNode& n = type.node();
  if (!n.committed.load(std::memory_order_acquire))
    fail(Errc::kArg, "datatype must be committed before iov queries");
  return n;
}

// Merges byte-adjacent runs into maximal segments and stops after `limit`.
class Coalescer {
 public:
  Coalescer(std::span<IovSegment> out) : out_(out) {}

  bool operator()(std::int64_t off, std::int64_t len) {
    if (have_ && cur_.base_offset + cur_.length == off) {
      cur_.length += len;
      return true;
    }
    if (have_) {
      out_[written_++] = cur_;
      if (written_ == out_.size()) return false;
    }
    cur_ = {off, len};
    have_ = true;
    return true;
  }

  std::size_t finish() {
    if (have_ && written_ < out_.size()) out_[written_++] = cur_;
    have_ = false;
    return written_;
  }

 private:
  std::span<IovSegment> out_;
  IovSegment cur_;
  bool have_ = false;
  std::size_t written_ = 0;
};

}  // namespace

IovLenResult type_iov_len(const Datatype& type, std::int64_t max_iov_bytes) {
  const TypeNode& n = committed_node(type);
  if (max_iov_bytes < -1) fail(Errc::kArg, "max_iov_bytes must be >= -1");
  if (max_iov_bytes == -1 || max_iov_bytes >= n.size) return {n.seg_count, n.size};
  // Largest m with bytes_before(m) <= max; bytes_before is monotone in m.
  std::int64_t lo = 0;
  std::int64_t hi = n.seg_count;
  while (lo < hi) {
    const std::int64_t mid = lo + (hi - lo + 1) / 2;
    if (detail::bytes_before(n, mid) <= max_iov_bytes) {
      lo = mid;
    } else {
      hi = mid - 1;
    }
  }
  return {lo, detail::bytes_before(n, lo)};
}

std::int64_t type_iov(const Datatype& type, std::int64_t iov_offset, std::span<IovSegment> out) {
  const TypeNode& n = committed_node(type);
  if (iov_offset < 0 || iov_offset > n.seg_count) fail(Errc::kArg, "iov_offset out of range");
  if (iov_offset == n.seg_count || out.empty()) return 0;
  Coalescer sink(out);
  detail::emit_runs(n, 0, iov_offset, sink);
  return static_cast<std::int64_t>(sink.finish());
}

std::vector<IovSegment> type_iov(const Datatype& type, std::int64_t iov_offset,
                                 std::int64_t max_iov_len) {
  const TypeNode& n = committed_node(type);
  if (max_iov_len < 0) fail(Errc::kArg, "max_iov_len must be non-negative");
  if (iov_offset < 0 || iov_offset > n.seg_count) fail(Errc::kArg, "iov_offset out of range");
  std::vector<IovSegment> out(static_cast<std::size_t>(std::min(max_iov_len, n.seg_count - iov_offset)));
  out.resize(static_cast<std::size_t>(type_iov(type, iov_offset, std::span(out))));
  return out;
}

std::int64_t type_iov_bytes_before(const Datatype& type, std::int64_t segment_index) {
  const TypeNode& n = committed_node(type);
  if (segment_index < 0 || segment_index > n.seg_count) fail(Errc::kArg, "segment index out of range");
  return detail::bytes_before(n, segment_index);
}

std::int64_t pack(const Datatype& type, std::int64_t count, const void* origin,
                  std::span<std::byte> dest) {
  const TypeNode& n = type.node();
  check_count(count, "count");
  const std::int64_t total = checked_mul(count, n.size);
  if (static_cast<std::int64_t>(dest.size()) < total)
    fail(Errc::kTruncate, "pack destination holds " + std::to_string(dest.size()) + " of " +
                              std::to_string(total) + " bytes");
  if (total == 0) return 0;
  const auto* src = static_cast<const std::byte*>(origin);
  if (type.is_contiguous()) {
    std::memcpy(dest.data(), src + n.lb, static_cast<std::size_t>(total));
    return total;
  }
  std::byte* out = dest.data();
  auto copy = [&](std::int64_t off, std::int64_t len) {
    std::memcpy(out, src + off, static_cast<std::size_t>(len));
    out += len;
    return true;
  };
  const std::int64_t ext = n.ub - n.lb;
  for (std::int64_t e = 0; e < count; ++e) detail::emit_runs(n, e * ext, 0, copy);
  return total;
}

std::int64_t unpack(const Datatype& type, std::int64_t count, std::span<const std::byte> source,
                    void* origin) {
  const TypeNode& n = type.node();
  check_count(count, "count");
  const std::int64_t total = checked_mul(count, n.size);
  if (static_cast<std::int64_t>(source.size()) < total)
    fail(Errc::kTruncate, "unpack source holds " + std::to_string(source.size()) + " of " +
                              std::to_string(total) + " bytes");
  if (total == 0) return 0;
  auto* dst = static_cast<std::byte*>(origin);
  if (type.is_contiguous()) {
    std::memcpy(dst + n.lb, source.data(), static_cast<std::size_t>(total));
    return total;
  }
  const std::byte* in = source.data();
  auto copy = [&](std::int64_t off, std::int64_t len) {
    std::memcpy(dst + off, in, static_cast<std::size_t>(len));
    in += len;
    return true;
  };
  const std::int64_t ext = n.ub - n.lb;
  for (std::int64_t e = 0; e < count; ++e) detail::emit_runs(n, e * ext, 0, copy);
  return total;
}

std::int64_t unpack_prefix(const Datatype& type, std::int64_t count,
                           std::span<const std::byte> source, void* origin) {
  const TypeNode& n = type.node();
  check_count(count, "count");
  const std::int64_t total = std::min(checked_mul(count, n.size),
                                      static_cast<std::int64_t>(source.size()));
  if (total == 0) return 0;
  auto* dst = static_cast<std::byte*>(origin);
  if (type.is_contiguous()) {
    std::memcpy(dst + n.lb, source.data(), static_cast<std::size_t>(total));
    return total;
  }
  const std::byte* in = source.data();
  std::int64_t left = total;
  auto copy = [&](std::int64_t off, std::int64_t len) {
    const std::int64_t take = std::min(len, left);
    std::memcpy(dst + off, in, static_cast<std::size_t>(take));
    in += take;
    left -= take;
    return left > 0;
  };
  const std::int64_t ext = n.ub - n.lb;
  for (std::int64_t e = 0; e < count && left > 0; ++e) detail::emit_runs(n, e * ext, 0, copy);
  return total;
}

std::int64_t pack(const Datatype& type, std::span<const std::byte> region,
                  std::span<std::byte> dest) {
  const TypeNode& n = type.node();
  if (static_cast<std::int64_t>(dest.size()) < n.size)
    fail(Errc::kTruncate, "pack destination too small");
  std::byte* out = dest.data();
  const auto limit = static_cast<std::int64_t>(region.size());
  auto copy = [&](std::int64_t off, std::int64_t len) {
    if (off < 0 || off + len > limit) fail(Errc::kArg, "datatype segment outside source region");
    std::memcpy(out, region.data() + off, static_cast<std::size_t>(len));
    out += len;
    return true;
  };
  detail::emit_runs(n, 0, 0, copy);
  return n.size;
}

std::int64_t unpack(const Datatype& type, std::span<const std::byte> source,
                    std::span<std::byte> region) {
  const TypeNode& n = type.node();
  if (static_cast<std::int64_t>(source.size()) < n.size)
    fail(Errc::kTruncate, "unpack source too small");
  const std::byte* in = source.data();
  const auto limit = static_cast<std::int64_t>(region.size());
  auto copy = [&](std::int64_t off, std::int64_t len) {
    if (off < 0 || off + len > limit) fail(Errc::kArg, "datatype segment outside destination region");
    std::memcpy(region.data() + off, in, static_cast<std::size_t>(len));
    in += len;
    return true;
  };
  detail::emit_runs(n, 0, 0, copy);
  return n.size;
}

}  // namespace minimpi
