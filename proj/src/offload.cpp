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

#include <condition_variable>
#include <exception>

#include "detail/core.hpp"
#include "minimpi/offload.hpp"

namespace minimpi {

namespace detail {

struct DeviceTask {
  TaskKind kind;
  std::string label;
  std::function<void()> fn;
};

struct DeviceQueueImpl {
  std::uint64_t handle = 0;

  std::mutex mu;
  std::condition_variable cv;
  std::deque<DeviceTask> tasks;
  bool busy = false;
  bool stopping = false;
  std::atomic<bool> destroyed{false};
  std::exception_ptr first_error;
  std::thread worker;

  mutable std::mutex trace_mu;
  std::vector<TaskTrace> trace;

  void push(DeviceTask task) {
    if (destroyed.load()) fail(Errc::kState, "device queue was destroyed");
    {
      std::lock_guard lk(mu);
      tasks.push_back(std::move(task));
    }
    cv.notify_all();
  }

  void run() {
    std::unique_lock lk(mu);
    for (;;) {
      cv.wait(lk, [&] { return stopping || !tasks.empty(); });
      if (tasks.empty()) return;
      DeviceTask task = std::move(tasks.front());
      tasks.pop_front();
      busy = true;
      lk.unlock();
      TaskTrace t{task.kind, task.label, now_ns(), 0};
      std::exception_ptr error;
      try {
        task.fn();
      } catch (...) {
        error = std::current_exception();
      }
      t.end_ns = now_ns();
      {
        std::lock_guard tl(trace_mu);
        trace.push_back(std::move(t));
      }
      lk.lock();
      if (error && !first_error) first_error = error;
      busy = false;
      cv.notify_all();
    }
  }

  void drain() {
    std::unique_lock lk(mu);
    cv.wait(lk, [&] { return tasks.empty() && !busy; });
  }

  void stop() {
    {
      std::lock_guard lk(mu);
      stopping = true;
    }
    cv.notify_all();
    if (!worker.joinable()) return;
    // The last reference can be dropped by a task running on the worker.
    if (worker.get_id() == std::this_thread::get_id()) {
      worker.detach();
    } else {
      worker.join();
    }
  }

  ~DeviceQueueImpl() { stop(); }
};

namespace {

struct Registry {
  std::mutex mu;
  std::map<std::uint64_t, std::weak_ptr<DeviceQueueImpl>> queues;
  std::uint64_t next = 0xd0000001ULL;
};

Registry& registry() {
  static Registry r;
  return r;
}

}  // namespace

std::shared_ptr<DeviceQueueImpl> find_device_queue(std::uint64_t handle) {
  Registry& r = registry();
  std::lock_guard lk(r.mu);
  auto it = r.queues.find(handle);
  if (it == r.queues.end()) return nullptr;
  auto q = it->second.lock();
  if (!q || q->destroyed.load()) return nullptr;
  return q;
}

}  // namespace detail

using detail::DeviceQueueImpl;
using detail::DeviceTask;
using detail::EnqueuedRequest;

std::int64_t steady_now_ns() { return detail::now_ns(); }

namespace {

DeviceQueueImpl& live_queue(const std::shared_ptr<DeviceQueueImpl>& q) {
  if (!q) fail(Errc::kState, "null device queue");
  if (q->destroyed.load()) fail(Errc::kState, "device queue was destroyed");
  return *q;
}

}  // namespace

DeviceQueue DeviceQueue::create() {
  auto q = std::make_shared<DeviceQueueImpl>();
  {
    detail::Registry& r = detail::registry();
    std::lock_guard lk(r.mu);
    q->handle = r.next++;
    r.queues.emplace(q->handle, q);
  }
  q->worker = std::thread([raw = q.get()] { raw->run(); });
  return DeviceQueue(q);
}

void DeviceQueue::destroy() {
  DeviceQueueImpl& q = live_queue(impl_);
  q.drain();
  q.destroyed.store(true);
  q.stop();
  detail::Registry& r = detail::registry();
  std::lock_guard lk(r.mu);
  r.queues.erase(q.handle);
}

bool DeviceQueue::live() const { return impl_ && !impl_->destroyed.load(); }

std::uint64_t DeviceQueue::handle() const { return live_queue(impl_).handle; }

Info DeviceQueue::stream_info() const {
  const std::uint64_t h = handle();
  Info info;
  info.set("type", "devstream");
  info.set_hex("value", &h, sizeof h);
  return info;
}

void DeviceQueue::enqueue_memcpy(void* dst, const void* src, std::size_t n) {
  live_queue(impl_).push({TaskKind::kMemcpy, "memcpy", [dst, src, n] { std::memcpy(dst, src, n); }});
}

void DeviceQueue::enqueue_compute(std::function<void()> fn, std::string label) {
  if (!fn) fail(Errc::kArg, "empty compute task");
  live_queue(impl_).push({TaskKind::kCompute, std::move(label), std::move(fn)});
}

void DeviceQueue::synchronize() {
  DeviceQueueImpl& q = live_queue(impl_);
  q.drain();
  std::exception_ptr error;
  {
    std::lock_guard lk(q.mu);
    std::swap(error, q.first_error);
  }
  if (error) std::rethrow_exception(error);
}

std::vector<TaskTrace> DeviceQueue::trace() const {
  if (!impl_) return {};
  std::lock_guard lk(impl_->trace_mu);
  return impl_->trace;
}

void DeviceQueue::clear_trace() {
  if (!impl_) return;
  std::lock_guard lk(impl_->trace_mu);
  impl_->trace.clear();
}

// ---------------------------------------------------------------------------
// Enqueue operations

namespace {

std::shared_ptr<DeviceQueueImpl> device_of(const std::shared_ptr<detail::CommImpl>& c) {
  if (!c) fail(Errc::kArg, "null communicator");
  c->inst->check_active();
  if (c->freed.load()) fail(Errc::kState, "communicator was freed");
  if (c->kind != CommKind::kStreamSingle || c->local_streams.empty() ||
      c->local_streams[0].impl()->kind != StreamKind::kDeviceQueue)
    fail(Errc::kArg, "enqueue operations need a stream communicator whose local stream is a device queue");
  auto q = c->local_streams[0].impl()->device;
  live_queue(q);
  return q;
}

void check_args(std::int64_t count, const Datatype& type) {
  if (count < 0) fail(Errc::kArg, "negative count");
  if (!type.valid() || !type.committed()) fail(Errc::kArg, "datatype must be valid and committed");
}

std::shared_ptr<EnqueuedRequest> new_enqueued(const std::shared_ptr<detail::CommImpl>& c,
                                              const std::shared_ptr<DeviceQueueImpl>& q) {
  auto er = std::make_shared<EnqueuedRequest>();
  er->queue = q;
  er->outstanding = &c->inst->outstanding_other;
  c->inst->outstanding_other.fetch_add(1, std::memory_order_relaxed);
  return er;
}

/// Runs inside a COMM_WAIT task: waits for the started operation and
/// publishes its status on the enqueued request.
void finish_enqueued(EnqueuedRequest& er) {
  if (er.start_error == Errc::kSuccess && er.inner) {
    detail::wait_p2p(*er.inner);
    er.status = detail::finish_status(*er.inner);
  } else if (er.start_error != Errc::kSuccess) {
    er.status.error = er.start_error;
  }
  er.inner.reset();
  const Status st = er.status;
  const std::string message = er.start_message;
  er.mark_done();
  if (st.error != Errc::kSuccess)
    throw RequestError(st.error, message.empty() ? "enqueued operation failed" : message, st);
}

template <class Start>
void start_into(EnqueuedRequest& er, Start&& start) {
  try {
    er.inner = start();
  } catch (const Error& e) {
    er.start_error = e.code();
    er.start_message = e.what();
  }
  er.started.store(true, std::memory_order_release);
}

}  // namespace

void Communicator::send_enqueue(const void* buf, std::int64_t count, const Datatype& type, int dest,
                                int tag) const {
  auto q = device_of(impl_);
  check_args(count, type);
  q->push({TaskKind::kCommStart, "send", [c = impl_, buf, count, type, dest, tag] {
             detail::p2p_isend(c, buf, count, type, dest, tag, -1, -1, false, true);
           }});
}

void Communicator::recv_enqueue(void* buf, std::int64_t count, const Datatype& type, int source,
                                int tag, Status* status) const {
  auto q = device_of(impl_);
  check_args(count, type);
  q->push({TaskKind::kCommStart, "recv", [c = impl_, buf, count, type, source, tag, status] {
             auto req = detail::p2p_irecv(c, buf, count, type, source, tag, -1, -1, false);
             detail::wait_p2p(*req);
             const Status st = detail::finish_status(*req);
             if (status != nullptr) *status = st;
             if (st.error != Errc::kSuccess) throw RequestError(st.error, "enqueued receive failed", st);
           }});
}

Request Communicator::isend_enqueue(const void* buf, std::int64_t count, const Datatype& type,
                                    int dest, int tag) const {
  auto q = device_of(impl_);
  check_args(count, type);
  auto er = new_enqueued(impl_, q);
  q->push({TaskKind::kCommStart, "isend", [c = impl_, er, buf, count, type, dest, tag] {
             start_into(*er, [&] { return detail::p2p_isend(c, buf, count, type, dest, tag, -1, -1, false, false); });
           }});
  return Request(er);
}

Request Communicator::irecv_enqueue(void* buf, std::int64_t count, const Datatype& type, int source,
                                    int tag) const {
  auto q = device_of(impl_);
  check_args(count, type);
  auto er = new_enqueued(impl_, q);
  q->push({TaskKind::kCommStart, "irecv", [c = impl_, er, buf, count, type, source, tag] {
             start_into(*er, [&] { return detail::p2p_irecv(c, buf, count, type, source, tag, -1, -1, false); });
           }});
  return Request(er);
}

namespace {

std::shared_ptr<EnqueuedRequest> as_enqueued(const Request& r) {
  if (r.is_null() || r.impl()->kind != RequestKind::kEnqueued)
    fail(Errc::kArg, "wait_enqueue needs a request returned by an enqueue operation");
  return std::static_pointer_cast<EnqueuedRequest>(r.impl());
}

}  // namespace

void wait_enqueue(Request& request) {
  auto er = as_enqueued(request);
  live_queue(er->queue).push({TaskKind::kCommWait, "wait", [er] { finish_enqueued(*er); }});
  request.reset();
}

void waitall_enqueue(std::span<Request> requests) {
  std::vector<std::shared_ptr<EnqueuedRequest>> ers;
  for (const Request& r : requests) {
    if (r.is_null()) continue;
    ers.push_back(as_enqueued(r));
    if (ers.back()->queue != ers.front()->queue)
      fail(Errc::kArg, "waitall_enqueue requests must come from one device queue");
  }
  if (ers.empty()) return;
  live_queue(ers.front()->queue).push({TaskKind::kCommWait, "waitall", [ers] {
    std::exception_ptr first;
    for (auto& er : ers) {
      try {
        finish_enqueued(*er);
      } catch (...) {
        if (!first) first = std::current_exception();
      }
    }
    if (first) std::rethrow_exception(first);
  }});
  for (Request& r : requests) r.reset();
}

}  // namespace minimpi
