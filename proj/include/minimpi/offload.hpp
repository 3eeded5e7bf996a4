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
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "minimpi/info.hpp"

namespace minimpi {

namespace detail {
struct DeviceQueueImpl;
}

enum class TaskKind { kMemcpy, kCompute, kCommStart, kCommWait };

/// Executor trace entry; times are steady-clock nanoseconds.
struct TaskTrace {
  TaskKind kind;
  std::string label;
  std::int64_t start_ns = 0;
  std::int64_t end_ns = 0;
};

/// Simulated device queue: a FIFO of tasks run one at a time by a dedicated
/// executor thread. Handles are registered process-wide so they can travel
/// through Info values.
class DeviceQueue {
 public:
  DeviceQueue() = default;

  static DeviceQueue create();
  /// Drains pending tasks, then stops the executor.
  void destroy();
  bool live() const;

  /// Opaque 8-byte registry handle.
  std::uint64_t handle() const;
  /// Info for stream_create: {"type":"devstream","value":hex(handle)}.
  Info stream_info() const;

  void enqueue_memcpy(void* dst, const void* src, std::size_t n);
  void enqueue_compute(std::function<void()> fn, std::string label = "compute");
  /// Blocks until the queue drains; rethrows the first task error.
  void synchronize();

  std::vector<TaskTrace> trace() const;
  void clear_trace();

  const std::shared_ptr<detail::DeviceQueueImpl>& impl() const noexcept { return impl_; }

 private:
  explicit DeviceQueue(std::shared_ptr<detail::DeviceQueueImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::DeviceQueueImpl> impl_;
};

/// Monotonic nanoseconds on the clock used by TaskTrace.
std::int64_t steady_now_ns();

}  // namespace minimpi
