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
#include <numeric>

#include "detail/core.hpp"

namespace minimpi {

using detail::CommImpl;
using detail::InstanceImpl;
using detail::ThreadcommState;

namespace detail {

namespace {

constexpr int kTagBarrier = 1;
constexpr int kTagAllreduce = 2;
constexpr int kTagGather = 3;

}  // namespace

int CommImpl::process_of(int rank) const {
  if (tc) return tc->locate(rank).first;
  return rank;
}

CommImpl::~CommImpl() = default;

void ThreadcommState::OnFinish::operator()() noexcept {
  s->active.store(false, std::memory_order_release);
  for (auto& o : s->owners) o.store(std::thread::id(), std::memory_order_relaxed);
  s->arrivals.store(0, std::memory_order_release);
  if (s->inst != nullptr) s->inst->active_threadcomms.fetch_sub(1);
}

int ThreadcommState::slot_of_caller() const noexcept {
  if (!active.load(std::memory_order_acquire)) return -1;
  const auto me = std::this_thread::get_id();
  for (std::size_t i = 0; i < owners.size(); ++i)
    if (owners[i].load(std::memory_order_relaxed) == me) return static_cast<int>(i);
  return -1;
}

std::pair<int, int> ThreadcommState::locate(int rank) const noexcept {
  auto it = std::upper_bound(prefix.begin(), prefix.end(), rank);
  const int p = static_cast<int>(it - prefix.begin()) - 1;
  return {p, rank - prefix[static_cast<std::size_t>(p)]};
}

int comm_rank_of_caller(const CommImpl& comm) {
  if (!comm.tc) return comm.my_process;
  const int slot = comm.tc->slot_of_caller();
  if (slot < 0) fail(Errc::kState, "thread communicator is inactive or the calling thread is not registered");
  return comm.tc->prefix[static_cast<std::size_t>(comm.my_process)] + slot;
}

namespace {

int comm_size(const CommImpl& comm) { return comm.tc ? comm.tc->prefix.back() : comm.size; }

}  // namespace

void comm_barrier(const std::shared_ptr<CommImpl>& comm) {
  const int n = comm_size(*comm);
  const int me = comm_rank_of_caller(*comm);
  const Datatype byte = Datatype::byte();
  for (int k = 1; k < n; k <<= 1) {
    auto s = p2p_isend(comm, nullptr, 0, byte, (me + k) % n, kTagBarrier, -1, -1, true, false);
    auto r = p2p_irecv(comm, nullptr, 0, byte, (me - k + n) % n, kTagBarrier, -1, -1, true);
    wait_p2p(*r);
    if (s) wait_p2p(*s);
  }
}

namespace {

/// Every rank sends `bytes` from `mine` to every other rank; `out` receives
/// the per-rank blocks in rank order.
void exchange_all(const std::shared_ptr<CommImpl>& comm, const void* mine, std::int64_t bytes,
                  std::byte* out, int tag) {
  const int n = comm_size(*comm);
  const int me = comm_rank_of_caller(*comm);
  const Datatype byte = Datatype::byte();
  std::vector<std::shared_ptr<P2pRequest>> reqs;
  for (int r = 0; r < n; ++r) {
    if (r == me) continue;
    reqs.push_back(p2p_irecv(comm, out + static_cast<std::size_t>(r * bytes), bytes, byte, r, tag, -1, -1, true));
  }
  for (int k = 1; k < n; ++k) {
    const int r = (me + k) % n;
    if (auto s = p2p_isend(comm, mine, bytes, byte, r, tag, -1, -1, true, false)) reqs.push_back(s);
  }
  if (bytes > 0) std::memcpy(out + static_cast<std::size_t>(me * bytes), mine, static_cast<std::size_t>(bytes));
  for (auto& r : reqs) wait_p2p(*r);
}

}  // namespace

std::vector<std::int64_t> comm_allgather_i64(const std::shared_ptr<CommImpl>& comm,
                                             const std::vector<std::int64_t>& mine) {
  const int n = comm_size(*comm);
  const auto bytes = static_cast<std::int64_t>(mine.size() * sizeof(std::int64_t));
  std::vector<std::int64_t> out(mine.size() * static_cast<std::size_t>(n));
  exchange_all(comm, mine.data(), bytes, reinterpret_cast<std::byte*>(out.data()), kTagGather);
  return out;
}

namespace {

/// Collective creation step: agrees on the next comm id and gathers
/// `values` from every process. Returns (id, gathered values).
std::pair<std::uint32_t, std::vector<std::int64_t>> agree(const std::shared_ptr<CommImpl>& parent,
                                                          std::vector<std::int64_t> values) {
  InstanceImpl& inst = *parent->inst;
  values.insert(values.begin(), inst.next_comm_id);
  auto all = comm_allgather_i64(parent, values);
  const std::size_t stride = values.size();
  std::int64_t id = 0;
  std::vector<std::int64_t> rest;
  for (std::size_t p = 0; p < all.size() / stride; ++p) {
    id = std::max(id, all[p * stride]);
    rest.insert(rest.end(), all.begin() + static_cast<std::ptrdiff_t>(p * stride + 1),
                all.begin() + static_cast<std::ptrdiff_t>((p + 1) * stride));
  }
  if (id >= static_cast<std::int64_t>(kMaxCommIds)) fail(Errc::kExhausted, "context ids exhausted");
  inst.next_comm_id = static_cast<std::uint32_t>(id + 1);
  return {static_cast<std::uint32_t>(id), rest};
}

}  // namespace

std::uint32_t comm_allocate_id(const std::shared_ptr<CommImpl>& parent) {
  std::lock_guard lk(parent->inst->create_mu);
  return agree(parent, {}).first;
}

namespace {

std::shared_ptr<CommImpl> new_comm(const std::shared_ptr<CommImpl>& parent, std::uint32_t id,
                                   CommKind kind) {
  auto c = std::make_shared<CommImpl>();
  c->inst = parent->inst;
  c->kind = kind;
  c->id = id;
  c->size = parent->size;
  c->my_process = parent->my_process;
  return c;
}

void publish(const std::shared_ptr<CommImpl>& c, std::vector<Vci*> route_vcis) {
  auto route = std::make_unique<Route>();
  route->vcis = std::move(route_vcis);
  c->inst->register_route(c->id, std::move(route));
}

void require_conventional(const std::shared_ptr<CommImpl>& c, const char* op) {
  if (c->kind != CommKind::kConventional)
    fail(Errc::kArg, std::string(op) + " requires a conventional communicator");
}

}  // namespace
}  // namespace detail

namespace {

const std::shared_ptr<CommImpl>& checked(const std::shared_ptr<CommImpl>& impl) {
  if (!impl) fail(Errc::kArg, "null communicator");
  impl->inst->check_active();
  if (impl->freed.load()) fail(Errc::kState, "communicator was freed");
  return impl;
}

}  // namespace

CommKind Communicator::kind() const { return checked(impl_)->kind; }
int Communicator::rank() const { return detail::comm_rank_of_caller(*checked(impl_)); }
int Communicator::size() const {
  auto& c = checked(impl_);
  return c->tc ? c->tc->prefix.back() : c->size;
}
std::uint32_t Communicator::context_id() const { return checked(impl_)->id; }

Communicator Communicator::dup() const {
  auto& parent = checked(impl_);
  detail::require_conventional(parent, "comm_dup");
  std::lock_guard lk(parent->inst->create_mu);
  auto [id, _] = detail::agree(parent, {});
  auto c = detail::new_comm(parent, id, CommKind::kConventional);
  c->local_vcis = {&c->inst->implicit_for(id)};
  detail::publish(c, c->local_vcis);
  return Communicator(c);
}

Communicator Communicator::stream_comm_create(const Stream& stream) const {
  auto& parent = checked(impl_);
  detail::require_conventional(parent, "stream_comm_create");
  std::int64_t local = 0;
  std::shared_ptr<detail::StreamImpl> s;
  if (!stream.is_null()) {
    s = stream.impl();
    local = s->freed.load() ? -1 : 1;
  }
  std::lock_guard lk(parent->inst->create_mu);
  auto [id, counts] = detail::agree(parent, {local});
  if (std::find(counts.begin(), counts.end(), -1) != counts.end())
    fail(Errc::kPending, "stream_comm_create with a stream that is being freed");
  const bool any = std::any_of(counts.begin(), counts.end(), [](std::int64_t c) { return c > 0; });
  auto c = detail::new_comm(parent, id, any ? CommKind::kStreamSingle : CommKind::kConventional);
  for (auto v : counts) c->remote_counts.push_back(static_cast<int>(v));
  if (s) {
    c->local_streams = {stream};
    c->local_vcis = {s->vci};
    s->attached_comms.fetch_add(1);
  } else {
    c->local_vcis = {&c->inst->implicit_for(id)};
  }
  detail::publish(c, c->local_vcis);
  return Communicator(c);
}

Communicator Communicator::stream_comm_create_multiplex(std::span<const Stream> streams) const {
  auto& parent = checked(impl_);
  detail::require_conventional(parent, "stream_comm_create_multiplex");
  std::int64_t local = static_cast<std::int64_t>(streams.size());
  for (const Stream& s : streams)
    if (s.is_null() || s.impl()->freed.load()) local = -1;
  std::lock_guard lk(parent->inst->create_mu);
  auto [id, counts] = detail::agree(parent, {local});
  for (auto v : counts)
    if (v <= 0) fail(Errc::kArg, "multiplex creation needs at least one live stream on every process");
  auto c = detail::new_comm(parent, id, CommKind::kStreamMultiplex);
  for (auto v : counts) c->remote_counts.push_back(static_cast<int>(v));
  for (const Stream& s : streams) {
    c->local_streams.push_back(s);
    c->local_vcis.push_back(s.impl()->vci);
    s.impl()->attached_comms.fetch_add(1);
  }
  detail::publish(c, c->local_vcis);
  return Communicator(c);
}

Communicator Communicator::threadcomm_init(int num_threads) const {
  auto& parent = checked(impl_);
  if (parent->kind == CommKind::kThreadcomm) fail(Errc::kArg, "threadcomm_init on a thread communicator");
  detail::require_conventional(parent, "threadcomm_init");
  std::lock_guard lk(parent->inst->create_mu);
  auto [id, counts] = detail::agree(parent, {num_threads >= 1 ? num_threads : -1});
  if (num_threads < 1) fail(Errc::kArg, "num_threads must be >= 1");
  for (auto v : counts)
    if (v < 1) fail(Errc::kArg, "a peer passed num_threads < 1");
  auto c = detail::new_comm(parent, id, CommKind::kThreadcomm);
  auto tc = std::make_unique<ThreadcommState>();
  tc->inst = c->inst.get();
  tc->prefix.push_back(0);
  for (auto v : counts) {
    tc->counts.push_back(static_cast<int>(v));
    tc->prefix.push_back(tc->prefix.back() + static_cast<int>(v));
  }
  tc->local_threads = num_threads;
  tc->owners = std::vector<std::atomic<std::thread::id>>(static_cast<std::size_t>(num_threads));
  for (int i = 0; i < num_threads; ++i)
    tc->slot_vcis.push_back(c->inst->make_extra_vci(detail::VciClass::kThreadSlot));
  tc->start_barrier = std::make_unique<std::barrier<ThreadcommState::OnStart>>(
      num_threads, ThreadcommState::OnStart{tc.get()});
  tc->finish_barrier = std::make_unique<std::barrier<ThreadcommState::OnFinish>>(
      num_threads, ThreadcommState::OnFinish{tc.get()});
  c->local_vcis = tc->slot_vcis;
  c->tc = std::move(tc);
  detail::publish(c, c->local_vcis);
  return Communicator(c);
}

int Communicator::local_stream_count() const {
  return static_cast<int>(checked(impl_)->local_streams.size());
}

Stream Communicator::get_stream(int idx) const {
  auto& c = checked(impl_);
  if (idx == 0 && c->local_streams.empty() && c->kind != CommKind::kThreadcomm) return Stream();
  if (idx < 0 || idx >= static_cast<int>(c->local_streams.size()))
    fail(Errc::kArg, "stream index " + std::to_string(idx) + " out of range");
  return c->local_streams[static_cast<std::size_t>(idx)];
}

int Communicator::threadcomm_start() const {
  auto& c = checked(impl_);
  if (!c->tc) fail(Errc::kArg, "threadcomm_start on a non-thread communicator");
  ThreadcommState& tc = *c->tc;
  const int slot = tc.arrivals.fetch_add(1);
  if (slot >= tc.local_threads)
    fail(Errc::kState, "more threads than num_threads called threadcomm_start");
  tc.owners[static_cast<std::size_t>(slot)].store(std::this_thread::get_id(), std::memory_order_relaxed);
  if (slot == 0) c->inst->active_threadcomms.fetch_add(1);
  tc.start_barrier->arrive_and_wait();
  return tc.prefix[static_cast<std::size_t>(c->my_process)] + slot;
}

void Communicator::threadcomm_finish() const {
  auto& c = checked(impl_);
  if (!c->tc) fail(Errc::kArg, "threadcomm_finish on a non-thread communicator");
  if (c->tc->slot_of_caller() < 0)
    fail(Errc::kState, "threadcomm_finish from a thread that is not active on this communicator");
  c->tc->finish_barrier->arrive_and_wait();
}

bool Communicator::threadcomm_active() const {
  auto& c = checked(impl_);
  return c->tc && c->tc->active.load();
}

void Communicator::free() {
  auto& c = checked(impl_);
  if (c == c->inst->world) fail(Errc::kArg, "cannot free the world communicator");
  if (c->tc && (c->tc->active.load() || c->tc->arrivals.load() > 0))
    fail(Errc::kState, "thread communicator is active");
  const std::uint32_t p2p = detail::wire_context(c->id, false);
  const std::uint32_t coll = detail::wire_context(c->id, true);
  for (detail::Vci* v : c->local_vcis) {
    detail::VciGuard g(*v);
    for (auto& r : v->posted)
      if (r->pattern.ctx == p2p || r->pattern.ctx == coll)
        fail(Errc::kPending, "communicator has pending receives");
  }
  c->freed.store(true);
  c->inst->unregister_route(c->id);
  for (const Stream& s : c->local_streams) s.impl()->attached_comms.fetch_sub(1);
  impl_.reset();
}

void Communicator::barrier() const { detail::comm_barrier(checked(impl_)); }

void Communicator::allreduce(const void* sendbuf, void* recvbuf, std::int64_t count,
                             ReduceType type, ReduceOp op) const {
  auto& c = checked(impl_);
  if (op != ReduceOp::kSum) fail(Errc::kArg, "only SUM is supported");
  if (count < 0) fail(Errc::kArg, "negative count");
  if (count == 0) return;
  const int n = size();
  const std::int64_t bytes = count * 8;
  std::vector<std::byte> all(static_cast<std::size_t>(bytes * n));
  detail::exchange_all(c, sendbuf, bytes, all.data(), detail::kTagAllreduce);
  auto reduce = [&](auto* out) {
    using T = std::remove_pointer_t<decltype(out)>;
    std::vector<T> acc(static_cast<std::size_t>(count), T{});
    for (int r = 0; r < n; ++r) {
      const auto* block = reinterpret_cast<const T*>(all.data() + static_cast<std::size_t>(r * bytes));
      for (std::int64_t i = 0; i < count; ++i) acc[static_cast<std::size_t>(i)] += block[i];
    }
    std::memcpy(out, acc.data(), static_cast<std::size_t>(bytes));
  };
  if (type == ReduceType::kInt64) {
    reduce(static_cast<std::int64_t*>(recvbuf));
  } else {
    reduce(static_cast<double*>(recvbuf));
  }
}

}  // namespace minimpi
