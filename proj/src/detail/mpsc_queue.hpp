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

#include <atomic>

namespace minimpi::detail {

/// Intrusive multi-producer single-consumer stack-to-queue. Producers push
/// with a CAS on the head; the consumer detaches the whole chain with one
/// exchange and reverses it, so items come out in push order per batch.
/// T must expose a `T* next` member.
template <class T>
class MpscQueue {
 public:
  MpscQueue() = default;
  MpscQueue(const MpscQueue&) = delete;
  MpscQueue& operator=(const MpscQueue&) = delete;

  void push(T* item) noexcept {
    T* head = head_.load(std::memory_order_relaxed);
    do {
      item->next = head;
    } while (!head_.compare_exchange_weak(head, item, std::memory_order_release,
                                          std::memory_order_relaxed));
  }

  bool empty() const noexcept { return head_.load(std::memory_order_acquire) == nullptr; }

  /// Detaches every pushed item and returns them oldest first.
  T* pop_all() noexcept {
    if (head_.load(std::memory_order_relaxed) == nullptr) return nullptr;
    T* chain = head_.exchange(nullptr, std::memory_order_acquire);
    T* reversed = nullptr;
    while (chain != nullptr) {
      T* next = chain->next;
      chain->next = reversed;
      reversed = chain;
      chain = next;
    }
    return reversed;
  }

 private:
  std::atomic<T*> head_{nullptr};
};

}  // namespace minimpi::detail
