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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace minimpi {

/// Ordered string->string hint map. Binary values are stored hex-encoded.
class Info {
 public:
  void set(std::string_view key, std::string_view value);

  /// Stores `value` as lowercase hex, two characters per byte, in memory order.
  void set_hex(std::string_view key, std::span<const std::byte> value);
  void set_hex(std::string_view key, const void* value, std::ptrdiff_t length);

  std::optional<std::string> get(std::string_view key) const;
  bool contains(std::string_view key) const { return entries_.count(std::string(key)) != 0; }
  std::size_t size() const noexcept { return entries_.size(); }
  const std::map<std::string, std::string, std::less<>>& entries() const noexcept {
    return entries_;
  }

 private:
  std::map<std::string, std::string, std::less<>> entries_;
};

std::string hex_encode(std::span<const std::byte> bytes);

/// Accepts upper or lower case; throws Error(kArg) on odd length or a non-hex digit.
std::vector<std::byte> hex_decode(std::string_view text);

}  // namespace minimpi
