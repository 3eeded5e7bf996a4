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

#include "minimpi/frame.hpp"

#include <cstring>
#include <sstream>

#include "minimpi/error.hpp"

namespace minimpi {

namespace {

template <class T>
void put_le(std::byte*& p, T value) {
  auto v = static_cast<std::make_unsigned_t<T>>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    *p++ = static_cast<std::byte>(v & 0xff);
    v = static_cast<decltype(v)>(v >> 8);
  }
}

template <class T>
T get_le(const std::byte*& p) {
  std::make_unsigned_t<T> v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    v = static_cast<decltype(v)>(v | (static_cast<decltype(v)>(std::to_integer<unsigned>(p[i])) << (8 * i)));
  p += sizeof(T);
  return static_cast<T>(v);
}

}  // namespace

EncodedHeader encode_header(const FrameHeader& h) {
  EncodedHeader out{};
  std::byte* p = out.data();
  for (char c : {'M', 'M', 'P', 'I'}) *p++ = static_cast<std::byte>(c);
  put_le<std::uint8_t>(p, kFrameVersion);
  put_le<std::uint8_t>(p, static_cast<std::uint8_t>(h.kind));
  put_le(p, h.context_id);
  put_le(p, h.src_rank);
  put_le(p, h.dst_rank);
  put_le(p, h.tag);
  put_le(p, h.src_stream_idx);
  put_le(p, h.dst_stream_idx);
  put_le(p, h.seq);
  put_le(p, h.payload_len);
  return out;
}

FrameHeader decode_header(std::span<const std::byte, kFrameHeaderBytes> bytes) {
  const std::byte* p = bytes.data();
  if (std::memcmp(p, "MMPI", 4) != 0) fail(Errc::kTransport, "bad frame magic");
  p += 4;
  if (get_le<std::uint8_t>(p) != kFrameVersion) fail(Errc::kTransport, "unsupported frame version");
  const auto kind = get_le<std::uint8_t>(p);
  if (kind > static_cast<std::uint8_t>(FrameKind::kCtrl)) fail(Errc::kTransport, "unknown frame kind");
  FrameHeader h;
  h.kind = static_cast<FrameKind>(kind);
  h.context_id = get_le<std::uint32_t>(p);
  h.src_rank = get_le<std::int32_t>(p);
  h.dst_rank = get_le<std::int32_t>(p);
  h.tag = get_le<std::int32_t>(p);
  h.src_stream_idx = get_le<std::int32_t>(p);
  h.dst_stream_idx = get_le<std::int32_t>(p);
  h.seq = get_le<std::uint64_t>(p);
  h.payload_len = get_le<std::uint64_t>(p);
  return h;
}

std::vector<std::byte> encode_frame(const FrameHeader& header, std::span<const std::byte> payload) {
  FrameHeader h = header;
  h.payload_len = payload.size();
  auto head = encode_header(h);
  std::vector<std::byte> out(head.size() + payload.size());
  std::memcpy(out.data(), head.data(), head.size());
  if (!payload.empty()) std::memcpy(out.data() + head.size(), payload.data(), payload.size());
  return out;
}

const char* frame_kind_name(FrameKind kind) {
  switch (kind) {
    case FrameKind::kEager: return "EAGER";
    case FrameKind::kRts: return "RTS";
    case FrameKind::kCts: return "CTS";
    case FrameKind::kChunk: return "CHUNK";
    case FrameKind::kGetReq: return "GET_REQ";
    case FrameKind::kGetResp: return "GET_RESP";
    case FrameKind::kCtrl: return "CTRL";
  }
  return "?";
}

std::string describe_frame(const FrameHeader& h) {
  std::ostringstream os;
  os << frame_kind_name(h.kind) << " ctx=" << h.context_id << " src=" << h.src_rank << " dst="
     << h.dst_rank << " tag=" << h.tag << " sidx=" << h.src_stream_idx << " didx=" << h.dst_stream_idx
     << " seq=" << h.seq << " len=" << h.payload_len;
  return os.str();
}

}  // namespace minimpi
