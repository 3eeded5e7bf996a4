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

#include "minimpi/comm.hpp"
#include "minimpi/datatype.hpp"

namespace minimpi {

namespace detail {
struct WindowImpl;
}

enum class LockType { kShared, kExclusive };

/// Passive-target window supporting shared locks and Get.
class Window {
 public:
  Window() = default;

  /// Collective over a conventional communicator.
  static Window create(void* base, std::int64_t size_bytes, int disp_unit, const Communicator& comm);
  /// Collective. Errc::kState while any lock epoch is open locally.
  void free();

  /// Only LockType::kShared is supported; exclusive yields Errc::kUnsupported.
  void lock(LockType type, int target);
  /// Blocks until every get of the epoch delivered its response.
  void unlock(int target);
  void get(void* origin, std::int64_t origin_count, const Datatype& origin_type, int target,
           std::int64_t target_disp, std::int64_t target_count, const Datatype& target_type);

  std::int64_t size_bytes() const;
  int disp_unit() const;

 private:
  explicit Window(std::shared_ptr<detail::WindowImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::WindowImpl> impl_;
};

}  // namespace minimpi
