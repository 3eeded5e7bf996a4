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

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace minimpi {

// Wire layout, all integers little-endian:
//   magic "MMPI" | version u8 | kind u8 | context_id u32 | src_rank i32 |
//   dst_rank i32 | tag i32 | src_stream_idx i32 | dst_stream_idx i32 |
//   seq u64 | payload_len u64 | payload
enum class FrameKind : std::uint8_t {
  kEager = 0,
  kRts = 1,
  kCts = 2,
  kChunk = 3,
  kGetReq = 4,
  kGetResp = 5,
  kCtrl = 6,
};

inline constexpr std::uint8_t kFrameVersion = 1;
inline constexpr std::size_t kFrameHeaderBytes = 46;

struct FrameHeader {
  FrameKind kind = FrameKind::kEager;
  std::uint32_t context_id = 0;
  std::int32_t src_rank = 0;
  std::int32_t dst_rank = 0;
  std::int32_t tag = 0;
  std::int32_t src_stream_idx = -1;
  std::int32_t dst_stream_idx = -1;
  std::uint64_t seq = 0;
  std::uint64_t payload_len = 0;

  friend bool operator==(const FrameHeader&, const FrameHeader&) = default;
};

using EncodedHeader = std::array<std::byte, kFrameHeaderBytes>;

EncodedHeader encode_header(const FrameHeader& header);

/// Throws Error(kTransport) on a malformed header.
FrameHeader decode_header(std::span<const std::byte, kFrameHeaderBytes> bytes);

std::vector<std::byte> encode_frame(const FrameHeader& header, std::span<const std::byte> payload);

const char* frame_kind_name(FrameKind kind);
std::string describe_frame(const FrameHeader& header);

}  // namespace minimpi
