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

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace minimpi {

namespace detail {
struct TypeNode;
}

/// One maximal contiguous byte run of a datatype, relative to the type origin.
/// Layout-compatible in spirit with `struct iovec` but offset-based so it can be
/// produced without a buffer.
struct IovSegment {
  std::int64_t base_offset = 0;
  std::int64_t length = 0;

  friend bool operator==(const IovSegment&, const IovSegment&) = default;
};

struct IovLenResult {
  std::int64_t iov_len = 0;
  std::int64_t actual_iov_bytes = 0;

  friend bool operator==(const IovLenResult&, const IovLenResult&) = default;
};

/// Which public constructor produced a descriptor.
enum class TypeKind {
  kBasic,
  kContiguous,
  kVector,
  kHvector,
  kIndexedBlock,
  kStruct,
  kSubarray,
  kResized,
};

/// Immutable derived-datatype descriptor.
///
/// A descriptor is a small tree whose node count depends on constructor
/// nesting, never on how many contiguous runs the layout contains. Each node
/// caches its segment count and byte size at construction so that
/// random access into the segment list (`type_iov`) and byte bisection
/// (`type_iov_len`) walk one root-to-leaf path instead of the whole layout.
///
/// Copies share the underlying tree. The handle is cheap to pass by value.
class Datatype {
 public:
  Datatype() = default;

  static Datatype basic(std::int64_t size_bytes);
  static Datatype byte() { return basic(1); }
  static Datatype int32() { return basic(4); }
  static Datatype int64() { return basic(8); }
  static Datatype float32() { return basic(4); }
  static Datatype float64() { return basic(8); }

  static Datatype contiguous(std::int64_t count, const Datatype& child);
  /// `stride` is in multiples of the child extent.
  static Datatype vector(std::int64_t count, std::int64_t blocklength, std::int64_t stride,
                         const Datatype& child);
  static Datatype hvector(std::int64_t count, std::int64_t blocklength, std::int64_t stride_bytes,
                          const Datatype& child);
  /// Displacements are in multiples of the child extent.
  static Datatype indexed_block(std::int64_t blocklength,
                                std::span<const std::int64_t> displacements,
                                const Datatype& child);
  static Datatype create_struct(std::span<const std::int64_t> blocklengths,
                                std::span<const std::int64_t> byte_displacements,
                                std::span<const Datatype> children);
  /// C (row-major) order only.
  static Datatype subarray(std::span<const std::int64_t> full_sizes,
                           std::span<const std::int64_t> sub_sizes,
                           std::span<const std::int64_t> sub_offsets, const Datatype& child);
  static Datatype resized(std::int64_t lb, std::int64_t extent, const Datatype& child);

  /// Marks the descriptor usable for iov queries and communication. Basic types
  /// are born committed. Idempotent.
  Datatype& commit();
  bool committed() const;

  /// Drops this handle's reference; other copies stay valid.
  void free() { node_.reset(); }

  bool valid() const noexcept { return node_ != nullptr; }
  TypeKind kind() const;
  std::int64_t size() const;
  std::int64_t lb() const;
  std::int64_t extent() const;
  std::int64_t segment_count() const;
  /// Number of tree nodes backing this descriptor, including shared children.
  std::int64_t node_count() const;
  int depth() const;

  /// True when the type is a single run starting at its origin and its extent
  /// equals its size, so `count` consecutive elements form one run as well.
  bool is_contiguous() const;

  std::string describe() const;

  const detail::TypeNode& node() const;
  std::shared_ptr<const detail::TypeNode> node_ptr() const { return node_; }

 private:
  explicit Datatype(std::shared_ptr<detail::TypeNode> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::TypeNode> node_;
};

/// `max_iov_bytes == -1` (or >= size) asks for the whole type.
IovLenResult type_iov_len(const Datatype& type, std::int64_t max_iov_bytes);

/// Writes segments [iov_offset, iov_offset + out.size()) into `out`, clipped at
/// the end of the type, and returns how many were written.
std::int64_t type_iov(const Datatype& type, std::int64_t iov_offset, std::span<IovSegment> out);
std::vector<IovSegment> type_iov(const Datatype& type, std::int64_t iov_offset,
                                 std::int64_t max_iov_len);

/// Bytes covered by segments [0, segment_index).
std::int64_t type_iov_bytes_before(const Datatype& type, std::int64_t segment_index);

/// Packs `count` elements laid out from `origin` into `dest`. `dest` must hold
/// count * size bytes (Errc::kTruncate otherwise). Returns bytes written.
std::int64_t pack(const Datatype& type, std::int64_t count, const void* origin,
                  std::span<std::byte> dest);
/// Inverse of pack. Overlapping layouts resolve last-writer-wins in traversal
/// order. Returns bytes read.
std::int64_t unpack(const Datatype& type, std::int64_t count, std::span<const std::byte> source,
                    void* origin);

/// Unpacks only the first source.size() bytes of the packed stream of
/// `count` elements (truncated receives). Returns the bytes written.
std::int64_t unpack_prefix(const Datatype& type, std::int64_t count,
                           std::span<const std::byte> source, void* origin);

/// Bounds-checked variants: the type origin is the start of `region` and every
/// segment must fall inside it (Errc::kArg otherwise).
std::int64_t pack(const Datatype& type, std::span<const std::byte> region,
                  std::span<std::byte> dest);
std::int64_t unpack(const Datatype& type, std::span<const std::byte> source,
                    std::span<std::byte> region);

/// Parses constructor expressions such as
/// `subarray(3,[1000,1000,1000],[100,100,100],[300,300,300],contiguous(16,byte))`.
/// The result is committed.
Datatype parse_type_expression(std::string_view text);

}  // namespace minimpi
