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

#include <unordered_map>

#include "detail/core.hpp"
#include "minimpi/window.hpp"

namespace minimpi {

namespace detail {

namespace {

void put_u64(std::byte* p, std::uint64_t v) { std::memcpy(p, &v, sizeof v); }
std::uint64_t get_u64(const std::byte* p) {
  std::uint64_t v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

/// One user-level get, possibly split into several segment requests.
struct GetOp {
  void* origin = nullptr;
  std::int64_t origin_count = 0;
  Datatype origin_type;
  int target = 0;
  std::vector<std::byte> packed;
  std::int64_t remaining = 0;
};

struct PendingSegment {
  std::shared_ptr<GetOp> op;
  std::int64_t packed_offset = 0;
};

}  // namespace

struct WindowImpl {
  std::shared_ptr<CommImpl> comm;
  std::byte* base = nullptr;
  std::int64_t size_bytes = 0;
  int disp_unit = 1;
  Vci* vci = nullptr;
  bool freed = false;

  // Origin-side epoch state; guarded by the VCI guard.
  std::vector<bool> locked;
  std::vector<std::int64_t> pending;
  std::vector<Errc> epoch_error;
  std::unordered_map<std::uint64_t, PendingSegment> segments;
  std::uint64_t next_op = 1;
};

namespace {

void serve_get(Vci& v, WindowImpl& w, const Packet& req) {
  const FrameHeader& h = req.hdr;
  if (req.payload.size() != 24) return;
  const std::uint64_t op = get_u64(req.payload.data());
  const auto offset = static_cast<std::int64_t>(get_u64(req.payload.data() + 8));
  const auto len = static_cast<std::int64_t>(get_u64(req.payload.data() + 16));
  const bool ok = offset >= 0 && len >= 0 && offset <= w.size_bytes && len <= w.size_bytes - offset;

  auto resp = std::make_unique<Packet>();
  resp->hdr.kind = FrameKind::kGetResp;
  resp->hdr.context_id = h.context_id;
  resp->hdr.src_rank = h.dst_rank;
  resp->hdr.dst_rank = h.src_rank;
  resp->hdr.tag = static_cast<int>(ok ? Errc::kSuccess : Errc::kArg);
  resp->hdr.src_stream_idx = h.dst_stream_idx;
  resp->hdr.dst_stream_idx = h.src_stream_idx;
  resp->payload.resize(8 + static_cast<std::size_t>(ok ? len : 0));
  put_u64(resp->payload.data(), op);
  if (ok && len > 0) std::memcpy(resp->payload.data() + 8, w.base + offset, static_cast<std::size_t>(len));
  send_frame_locked(v, h.src_rank, std::move(resp));
}

void take_response(WindowImpl& w, const Packet& resp) {
  if (resp.payload.size() < 8) return;
  auto it = w.segments.find(get_u64(resp.payload.data()));
  if (it == w.segments.end()) return;
  PendingSegment seg = std::move(it->second);
  w.segments.erase(it);
  GetOp& op = *seg.op;
  const auto t = static_cast<std::size_t>(op.target);
  const auto err = static_cast<Errc>(resp.hdr.tag);
  if (err != Errc::kSuccess) {
    if (w.epoch_error[t] == Errc::kSuccess) w.epoch_error[t] = err;
  } else {
    const std::size_t n = resp.payload.size() - 8;
    if (n > 0) std::memcpy(op.packed.data() + seg.packed_offset, resp.payload.data() + 8, n);
  }
  if (--op.remaining == 0) {
    if (w.epoch_error[t] == Errc::kSuccess && !op.packed.empty())
      unpack_prefix(op.origin_type, op.origin_count, op.packed, op.origin);
    --w.pending[t];
  }
}

}  // namespace

void window_packet_locked(Vci& v, PacketPtr pkt) {
  const std::uint32_t id = pkt->hdr.context_id >> 1;
  if (id >= kMaxCommIds) return;
  Route* r = v.inst->routes[id].load(std::memory_order_acquire);
  if (r == nullptr || r->window == nullptr) return;
  if (pkt->hdr.kind == FrameKind::kGetReq) {
    serve_get(v, *r->window, *pkt);
  } else {
    take_response(*r->window, *pkt);
  }
}

}  // namespace detail

using detail::WindowImpl;

namespace {

WindowImpl& live(const std::shared_ptr<WindowImpl>& w) {
  if (!w || w->freed) fail(Errc::kState, "window was freed or never created");
  w->comm->inst->check_active();
  return *w;
}

void check_target(const WindowImpl& w, int target) {
  if (target < 0 || target >= w.comm->size) fail(Errc::kArg, "target rank " + std::to_string(target) + " out of range");
}

}  // namespace

Window Window::create(void* base, std::int64_t size_bytes, int disp_unit, const Communicator& comm) {
  const auto& parent = comm.impl();
  if (!parent) fail(Errc::kArg, "null communicator");
  parent->inst->check_active();
  if (parent->kind != CommKind::kConventional) fail(Errc::kArg, "windows need a conventional communicator");
  if (size_bytes < 0) fail(Errc::kArg, "negative window size");
  if (disp_unit < 1) fail(Errc::kArg, "disp_unit must be >= 1");
  if (size_bytes > 0 && base == nullptr) fail(Errc::kArg, "null window base");

  auto w = std::make_shared<WindowImpl>();
  const std::uint32_t id = detail::comm_allocate_id(parent);
  auto c = std::make_shared<detail::CommImpl>();
  c->inst = parent->inst;
  c->kind = CommKind::kConventional;
  c->id = id;
  c->size = parent->size;
  c->my_process = parent->my_process;
  c->local_vcis = parent->local_vcis;
  w->comm = c;
  w->base = static_cast<std::byte*>(base);
  w->size_bytes = size_bytes;
  w->disp_unit = disp_unit;
  w->vci = parent->local_vcis[0];
  w->locked.assign(static_cast<std::size_t>(c->size), false);
  w->pending.assign(static_cast<std::size_t>(c->size), 0);
  w->epoch_error.assign(static_cast<std::size_t>(c->size), Errc::kSuccess);

  auto route = std::make_unique<detail::Route>();
  route->vcis = {w->vci};
  route->window = w.get();
  c->inst->register_route(id, std::move(route));
  // Nobody may send a request before every peer has its route in place.
  detail::comm_barrier(c);
  return Window(w);
}

void Window::free() {
  WindowImpl& w = live(impl_);
  {
    detail::VciGuard g(*w.vci);
    for (bool l : w.locked)
      if (l) fail(Errc::kState, "window has an open lock epoch");
  }
  // Every origin has closed its epochs once all ranks arrive here.
  detail::comm_barrier(w.comm);
  w.comm->inst->unregister_route(w.comm->id);
  w.comm->freed.store(true);
  w.freed = true;
  impl_.reset();
}

void Window::lock(LockType type, int target) {
  WindowImpl& w = live(impl_);
  if (type == LockType::kExclusive) fail(Errc::kUnsupported, "exclusive window locks are not supported");
  check_target(w, target);
  detail::VciGuard g(*w.vci);
  const auto t = static_cast<std::size_t>(target);
  if (w.locked[t]) fail(Errc::kState, "target is already locked in this epoch");
  w.locked[t] = true;
  w.epoch_error[t] = Errc::kSuccess;
}

void Window::unlock(int target) {
  WindowImpl& w = live(impl_);
  check_target(w, target);
  const auto t = static_cast<std::size_t>(target);
  {
    detail::VciGuard g(*w.vci);
    if (!w.locked[t]) fail(Errc::kState, "target is not locked");
  }
  detail::Spinner spin(w.comm->inst.get(), w.vci);
  for (;;) {
    {
      detail::VciGuard g(*w.vci);
      if (w.pending[t] == 0) break;
    }
    spin.step();
  }
  Errc err;
  {
    detail::VciGuard g(*w.vci);
    w.locked[t] = false;
    err = w.epoch_error[t];
    w.epoch_error[t] = Errc::kSuccess;
  }
  if (err != Errc::kSuccess) fail(err, "a get of this epoch failed at the target (out of range)");
}

void Window::get(void* origin, std::int64_t origin_count, const Datatype& origin_type, int target,
                 std::int64_t target_disp, std::int64_t target_count, const Datatype& target_type) {
  WindowImpl& w = live(impl_);
  check_target(w, target);
  if (origin_count < 0 || target_count < 0) fail(Errc::kArg, "negative count");
  if (!origin_type.valid() || !origin_type.committed() || !target_type.valid() || !target_type.committed())
    fail(Errc::kArg, "datatypes must be committed");
  if (target_disp < 0) fail(Errc::kArg, "negative target displacement");
  const std::int64_t bytes = target_count * target_type.size();
  if (origin_count * origin_type.size() < bytes) fail(Errc::kArg, "origin buffer is smaller than the target data");
  const auto t = static_cast<std::size_t>(target);

  // Target layout as contiguous runs relative to the displacement.
  std::vector<IovSegment> runs;
  if (bytes > 0) {
    const Datatype whole = target_count == 1 ? target_type : Datatype::contiguous(target_count, target_type).commit();
    runs = type_iov(whole, 0, whole.segment_count());
  }

  auto op = std::make_shared<detail::GetOp>();
  op->origin = origin;
  op->origin_count = origin_count;
  op->origin_type = origin_type;
  op->target = target;
  op->packed.resize(static_cast<std::size_t>(bytes));
  op->remaining = std::max<std::int64_t>(1, static_cast<std::int64_t>(runs.size()));

  detail::Vci& v = *w.vci;
  detail::VciGuard g(v);
  if (!w.locked[t]) fail(Errc::kArg, "get outside of a lock epoch on this target");
  ++w.pending[t];
  const std::int64_t origin_off = target_disp * w.disp_unit;
  auto request = [&](std::int64_t offset, std::int64_t len, std::int64_t packed_offset) {
    const std::uint64_t id = w.next_op++;
    w.segments.emplace(id, detail::PendingSegment{op, packed_offset});
    auto pkt = std::make_unique<detail::Packet>();
    pkt->hdr.kind = FrameKind::kGetReq;
    pkt->hdr.context_id = detail::wire_context(w.comm->id, false);
    pkt->hdr.src_rank = w.comm->my_process;
    pkt->hdr.dst_rank = target;
    pkt->hdr.src_stream_idx = -1;
    pkt->hdr.dst_stream_idx = -1;
    pkt->payload.resize(24);
    detail::put_u64(pkt->payload.data(), id);
    detail::put_u64(pkt->payload.data() + 8, static_cast<std::uint64_t>(offset));
    detail::put_u64(pkt->payload.data() + 16, static_cast<std::uint64_t>(len));
    detail::send_frame_locked(v, target, std::move(pkt));
  };
  if (runs.empty()) {
    request(origin_off, 0, 0);
    return;
  }
  std::int64_t packed = 0;
  for (const IovSegment& s : runs) {
    request(origin_off + s.base_offset, s.length, packed);
    packed += s.length;
  }
}

std::int64_t Window::size_bytes() const { return live(impl_).size_bytes; }
int Window::disp_unit() const { return live(impl_).disp_unit; }

}  // namespace minimpi
