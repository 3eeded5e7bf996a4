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

#include <algorithm>
#include <limits>

#include "detail/core.hpp"

namespace minimpi {

using detail::Grequest;
using detail::P2pRequest;
using detail::RequestImpl;

namespace detail {

void GrequestRegistry::add(const std::shared_ptr<Grequest>& g) {
  std::lock_guard lk(mu);
  items.push_back(g);
  live.fetch_add(1, std::memory_order_relaxed);
}

namespace {

/// Invokes poll_fn once unless the request already completed or another
/// thread is polling it right now.
bool poll_grequest(Grequest& g) {
  if (g.is_done()) return true;
  if (g.poll_fn == nullptr) return false;
  bool expected = false;
  if (!g.polling.compare_exchange_strong(expected, true, std::memory_order_acquire)) return false;
  if (!g.is_done()) {
    Status scratch;
    if (g.poll_fn(g.extra_state, &scratch) != 0) g.status.error = Errc::kInternal;
  }
  g.polling.store(false, std::memory_order_release);
  return g.is_done();
}

}  // namespace

bool GrequestRegistry::poll_all() {
  if (live.load(std::memory_order_relaxed) == 0) return false;
  std::vector<std::shared_ptr<Grequest>> snapshot;
  {
    std::lock_guard lk(mu);
    auto done = std::remove_if(items.begin(), items.end(),
                               [](const std::shared_ptr<Grequest>& g) { return g->is_done(); });
    live.fetch_sub(static_cast<int>(items.end() - done), std::memory_order_relaxed);
    items.erase(done, items.end());
    snapshot = items;
  }
  // Callbacks run without the registry lock so they may start or complete
  // other generalized requests.
  bool any = false;
  for (auto& g : snapshot)
    if (g->poll_fn != nullptr) any |= poll_grequest(*g);
  return any;
}

}  // namespace detail

namespace {

void reject_enqueued(const RequestImpl& r) {
  if (r.kind == RequestKind::kEnqueued)
    fail(Errc::kArg, "enqueued requests must be completed with wait_enqueue on their queue");
}

/// One progress pass on behalf of `r`. Returns whether it is complete.
bool drive(RequestImpl& r) {
  if (r.is_done()) return true;
  if (r.kind == RequestKind::kP2p) {
    auto& p = static_cast<P2pRequest&>(r);
    if (p.vci != nullptr) detail::vci_poll(*p.vci);
    return p.is_done();
  }
  return detail::poll_grequest(static_cast<Grequest&>(r));
}

detail::InstanceImpl* owner(const RequestImpl& r) {
  if (r.kind == RequestKind::kP2p) {
    const auto& p = static_cast<const P2pRequest&>(r);
    return p.vci != nullptr ? p.vci->inst : nullptr;
  }
  return static_cast<const Grequest&>(r).inst;
}

/// Status of a completed request; generalized requests are queried and
/// freed here, exactly once.
Status collect(RequestImpl& r) {
  if (r.kind == RequestKind::kP2p) return detail::finish_status(static_cast<P2pRequest&>(r));
  auto& g = static_cast<Grequest&>(r);
  if (!g.freed) {
    Status st;
    if (g.query_fn(g.extra_state, &st) != 0) st.error = Errc::kInternal;
    if (g.status.error != Errc::kSuccess) st.error = g.status.error;
    if (g.free_fn(g.extra_state) != 0 && st.error == Errc::kSuccess) st.error = Errc::kInternal;
    g.status = st;
    g.freed = true;
  }
  return g.status;
}

[[noreturn]] void throw_status(const Status& st) {
  throw RequestError(st.error,
                     st.error == Errc::kTruncate ? "message truncated" : "request completed with an error",
                     st);
}

void block_until_done(RequestImpl& r) {
  detail::Vci* vci = nullptr;
  if (r.kind == RequestKind::kP2p) vci = static_cast<P2pRequest&>(r).vci;
  detail::InstanceImpl* inst = owner(r);
  if (r.kind == RequestKind::kGeneralized) {
    auto& g = static_cast<Grequest&>(r);
    if (g.poll_fn == nullptr && g.wait_fn != nullptr) {
      void* state = g.extra_state;
      Status scratch;
      while (!g.is_done()) g.wait_fn(1, &state, std::numeric_limits<double>::infinity(), &scratch);
      return;
    }
  }
  detail::Spinner spin(inst, vci);
  while (!drive(r)) spin.step();
}

}  // namespace

RequestKind Request::kind() const {
  if (!impl_) fail(Errc::kArg, "null request");
  return impl_->kind;
}

bool Request::is_complete() const { return impl_ && impl_->is_done(); }

Status wait(Request& request) {
  if (request.is_null()) return Status{};
  RequestImpl& r = *request.impl();
  reject_enqueued(r);
  block_until_done(r);
  Status st = collect(r);
  request.reset();
  if (st.error != Errc::kSuccess) throw_status(st);
  return st;
}

std::optional<Status> test(Request& request) {
  if (request.is_null()) return Status{};
  RequestImpl& r = *request.impl();
  reject_enqueued(r);
  if (!drive(r)) {
    // Also give the request's scope a turn so peers of implicit traffic move.
    if (detail::InstanceImpl* inst = owner(r)) inst->progress_null();
    if (!r.is_done()) return std::nullopt;
  }
  Status st = collect(r);
  request.reset();
  if (st.error != Errc::kSuccess) throw_status(st);
  return st;
}

namespace {

/// Batching applies when every live request is generalized and they all share
/// one non-null wait_fn.
GrequestWaitFn shared_wait_fn(std::span<Request> requests) {
  GrequestWaitFn fn = nullptr;
  for (const Request& r : requests) {
    if (r.is_null()) continue;
    if (r.impl()->kind != RequestKind::kGeneralized) return nullptr;
    auto* w = static_cast<const Grequest&>(*r.impl()).wait_fn;
    if (w == nullptr || (fn != nullptr && w != fn)) return nullptr;
    fn = w;
  }
  return fn;
}

}  // namespace

std::vector<Status> waitall(std::span<Request> requests) {
  for (const Request& r : requests)
    if (!r.is_null()) reject_enqueued(*r.impl());

  if (GrequestWaitFn fn = shared_wait_fn(requests)) {
    std::vector<void*> states;
    Status scratch;
    for (;;) {
      states.clear();
      for (const Request& r : requests)
        if (!r.is_null() && !r.impl()->is_done())
          states.push_back(static_cast<Grequest&>(*r.impl()).extra_state);
      if (states.empty()) break;
      fn(static_cast<int>(states.size()), states.data(), std::numeric_limits<double>::infinity(), &scratch);
    }
  } else {
    detail::InstanceImpl* inst = nullptr;
    for (const Request& r : requests)
      if (!r.is_null() && inst == nullptr) inst = owner(*r.impl());
    detail::Spinner spin(inst, nullptr);
    for (;;) {
      bool all = true;
      for (const Request& r : requests)
        if (!r.is_null() && !drive(*r.impl())) all = false;
      if (all) break;
      spin.step();
    }
  }

  std::vector<Status> out;
  out.reserve(requests.size());
  const Status* first_error = nullptr;
  for (Request& r : requests) {
    out.push_back(r.is_null() ? Status{} : collect(*r.impl()));
    r.reset();
  }
  for (const Status& st : out)
    if (st.error != Errc::kSuccess && first_error == nullptr) first_error = &st;
  if (first_error != nullptr) throw_status(*first_error);
  return out;
}

void grequest_complete(const Request& request) {
  if (request.is_null() || request.impl()->kind != RequestKind::kGeneralized)
    fail(Errc::kArg, "grequest_complete needs a generalized request");
  auto& g = static_cast<Grequest&>(*request.impl());
  bool expected = false;
  if (!g.completed_flag.compare_exchange_strong(expected, true))
    fail(Errc::kArg, "generalized request was already completed");
  g.mark_done();
}

Request Instance::grequest_start(GrequestQueryFn query_fn, GrequestFreeFn free_fn,
                                 GrequestCancelFn cancel_fn, GrequestPollFn poll_fn,
                                 GrequestWaitFn wait_fn, void* extra_state, const Stream& stream) {
  if (!impl_) fail(Errc::kState, "instance is not initialized");
  impl_->check_active();
  if (query_fn == nullptr || free_fn == nullptr || cancel_fn == nullptr)
    fail(Errc::kArg, "query_fn, free_fn and cancel_fn are required");
  auto g = std::make_shared<Grequest>();
  g->query_fn = query_fn;
  g->free_fn = free_fn;
  g->cancel_fn = cancel_fn;
  g->poll_fn = poll_fn;
  g->wait_fn = wait_fn;
  g->extra_state = extra_state;
  g->inst = impl_.get();
  if (!stream.is_null()) g->stream = detail::stream_impl_checked(stream);
  g->outstanding = &impl_->outstanding_other;
  impl_->outstanding_other.fetch_add(1, std::memory_order_relaxed);
  (g->stream ? g->stream->greqs : impl_->global_greqs).add(g);
  return Request(g);
}

}  // namespace minimpi
