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

#include <cstdint>
#include <memory>

namespace minimpi {

namespace detail {
struct StreamImpl;
}

enum class StreamKind { kNull, kSerialContext, kDeviceQueue };

/// Handle to a local serial execution context. The default value is the
/// null stream, usable wherever "no stream" is allowed.
class Stream {
 public:
  Stream() = default;
  explicit Stream(std::shared_ptr<detail::StreamImpl> impl) : impl_(std::move(impl)) {}

  static Stream null() { return Stream(); }

  bool is_null() const noexcept { return impl_ == nullptr; }
  StreamKind kind() const;
  /// Monotone per-process id; 0 for the null stream.
  std::int64_t id() const;
  /// Index of the bound VCI, or -1 for the null stream.
  int vci_id() const;
  /// False once the stream was freed.
  bool live() const;

  const std::shared_ptr<detail::StreamImpl>& impl() const noexcept { return impl_; }

  friend bool operator==(const Stream& a, const Stream& b) noexcept { return a.impl_ == b.impl_; }

 private:
  std::shared_ptr<detail::StreamImpl> impl_;
};

}  // namespace minimpi
