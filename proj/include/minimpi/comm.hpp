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
#include <span>

#include "minimpi/datatype.hpp"
#include "minimpi/request.hpp"
#include "minimpi/stream.hpp"
#include "minimpi/types.hpp"

namespace minimpi {

namespace detail {
struct CommImpl;
}

enum class CommKind { kConventional, kStreamSingle, kStreamMultiplex, kThreadcomm };
enum class ReduceType { kInt64, kDouble };
enum class ReduceOp { kSum };

class Communicator {
 public:
  Communicator() = default;
  explicit Communicator(std::shared_ptr<detail::CommImpl> impl) : impl_(std::move(impl)) {}

  bool is_null() const noexcept { return impl_ == nullptr; }
  CommKind kind() const;
  /// On an active thread communicator this is the calling thread's rank.
  int rank() const;
  int size() const;
  std::uint32_t context_id() const;
  bool is_threadcomm() const { return kind() == CommKind::kThreadcomm; }

  // Construction. All of these are collective over the processes of `*this`
  // and must be called by one thread per process.
  Communicator dup() const;
  Communicator stream_comm_create(const Stream& stream) const;
  Communicator stream_comm_create_multiplex(std::span<const Stream> streams) const;
  Communicator threadcomm_init(int num_threads) const;
  /// Number of locally attached streams (0 for conventional comms).
  int local_stream_count() const;
  Stream get_stream(int idx) const;

  /// Called by each of the num_threads local threads; returns the thread rank.
  int threadcomm_start() const;
  void threadcomm_finish() const;
  bool threadcomm_active() const;

  /// comm_free / threadcomm_free.
  void free();

  void barrier() const;
  void allreduce(const void* sendbuf, void* recvbuf, std::int64_t count, ReduceType type,
                 ReduceOp op = ReduceOp::kSum) const;

  void send(const void* buf, std::int64_t count, const Datatype& type, int dest, int tag) const;
  Status recv(void* buf, std::int64_t count, const Datatype& type, int source, int tag) const;
  Request isend(const void* buf, std::int64_t count, const Datatype& type, int dest, int tag) const;
  Request irecv(void* buf, std::int64_t count, const Datatype& type, int source, int tag) const;

  // Stream-indexed variants for multiplex communicators. On receives src_idx
  // may be kAnyStream.
  void stream_send(const void* buf, std::int64_t count, const Datatype& type, int dest, int tag,
                   int src_idx, int dst_idx) const;
  Request stream_isend(const void* buf, std::int64_t count, const Datatype& type, int dest,
                       int tag, int src_idx, int dst_idx) const;
  Status stream_recv(void* buf, std::int64_t count, const Datatype& type, int source, int tag,
                     int src_idx, int dst_idx) const;
  Request stream_irecv(void* buf, std::int64_t count, const Datatype& type, int source, int tag,
                       int src_idx, int dst_idx) const;

  // Enqueue variants; the communicator's local stream must be a device queue.
  // The status of recv_enqueue is written to `*status` when the task runs.
  void send_enqueue(const void* buf, std::int64_t count, const Datatype& type, int dest,
                    int tag) const;
  void recv_enqueue(void* buf, std::int64_t count, const Datatype& type, int source, int tag,
                    Status* status = nullptr) const;
  Request isend_enqueue(const void* buf, std::int64_t count, const Datatype& type, int dest,
                        int tag) const;
  Request irecv_enqueue(void* buf, std::int64_t count, const Datatype& type, int source,
                        int tag) const;

  const std::shared_ptr<detail::CommImpl>& impl() const noexcept { return impl_; }

  friend bool operator==(const Communicator& a, const Communicator& b) noexcept {
    return a.impl_ == b.impl_;
  }

 private:
  std::shared_ptr<detail::CommImpl> impl_;
};

/// comm_test_threadcomm.
inline bool comm_test_threadcomm(const Communicator& comm) { return comm.is_threadcomm(); }

void wait_enqueue(Request& request);
void waitall_enqueue(std::span<Request> requests);

}  // namespace minimpi
