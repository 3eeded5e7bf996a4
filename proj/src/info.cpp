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

#include "minimpi/info.hpp"

#include "minimpi/error.hpp"

namespace minimpi {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::kSuccess: return "SUCCESS";
    case Errc::kArg: return "ERR_ARG";
    case Errc::kState: return "ERR_STATE";
    case Errc::kPending: return "ERR_PENDING";
    case Errc::kTransport: return "ERR_TRANSPORT";
    case Errc::kSpawn: return "ERR_SPAWN";
    case Errc::kTruncate: return "ERR_TRUNCATE";
    case Errc::kExhausted: return "ERR_EXHAUSTED";
    case Errc::kUnsupported: return "ERR_UNSUPPORTED";
    case Errc::kInternal: return "ERR_INTERNAL";
  }
  return "ERR_UNKNOWN";
}

void Info::set(std::string_view key, std::string_view value) {
  if (key.empty()) fail(Errc::kArg, "info key must be non-empty");
  entries_.insert_or_assign(std::string(key), std::string(value));
}

void Info::set_hex(std::string_view key, std::span<const std::byte> value) {
  set(key, hex_encode(value));
}

void Info::set_hex(std::string_view key, const void* value, std::ptrdiff_t length) {
  if (length < 0) fail(Errc::kArg, "negative hex value length");
  if (length > 0 && value == nullptr) fail(Errc::kArg, "null hex value");
  set_hex(key, std::span(static_cast<const std::byte*>(value), static_cast<std::size_t>(length)));
}

std::optional<std::string> Info::get(std::string_view key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string hex_encode(std::span<const std::byte> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::byte b : bytes) {
    auto v = std::to_integer<unsigned>(b);
    out.push_back(kDigits[v >> 4]);
    out.push_back(kDigits[v & 0xf]);
  }
  return out;
}

namespace {
int nibble(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}
}  // namespace

std::vector<std::byte> hex_decode(std::string_view text) {
  if (text.size() % 2 != 0) fail(Errc::kArg, "hex string has odd length");
  std::vector<std::byte> out(text.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = nibble(text[2 * i]);
    int lo = nibble(text[2 * i + 1]);
    if (hi < 0 || lo < 0) fail(Errc::kArg, "malformed hex string");
    out[i] = static_cast<std::byte>((hi << 4) | lo);
  }
  return out;
}

}  // namespace minimpi
