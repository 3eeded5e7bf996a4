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

#include "detail/core.hpp"

namespace minimpi {

using detail::CommImpl;
using detail::P2pRequest;
using detail::Vci;
using detail::VciGuard;

namespace detail {

namespace {

/// Messages up to this size between threads of one process travel inline in
/// the packet and need no sender request.
constexpr std::int64_t kCellThreshold = 256;

int comm_size(const CommImpl& c) { return c.tc ? c.tc->prefix.back() : c.size; }

void check_common(const std::shared_ptr<CommImpl>& comm, std::int64_t count, const Datatype& type) {
  if (!comm) fail(Errc::kArg, "null communicator");
  comm->inst->check_active();
  if (comm->freed.load(std::memory_order_relaxed)) fail(Errc::kState, "communicator was freed");
  if (count < 0) fail(Errc::kArg, "negative count");
  if (!type.valid()) fail(Errc::kArg, "invalid datatype");
  if (!type.committed()) fail(Errc::kArg, "datatype is not committed");
}

/// Local endpoint for one operation.
struct Endpoint {
  Vci* vci = nullptr;
  int my_rank = 0;
  int src_idx = -1;
  int dst_idx = -1;
};

int thread_slot(const CommImpl& c) {
  const int slot = c.tc->slot_of_caller();
  if (slot < 0) fail(Errc::kState, "thread communicator is inactive or the calling thread is not registered");
  return slot;
}

void check_local_idx(const CommImpl& c, int idx, const char* what) {
  if (idx < 0 || idx >= static_cast<int>(c.local_vcis.size()))
    fail(Errc::kArg, std::string(what) + " " + std::to_string(idx) + " out of range for " +
                         std::to_string(c.local_vcis.size()) + " local streams");
}

void check_remote_idx(const CommImpl& c, int process, int idx, const char* what) {
  const int n = c.remote_counts[static_cast<std::size_t>(process)];
  if (idx < 0 || idx >= n)
    fail(Errc::kArg, std::string(what) + " " + std::to_string(idx) + " out of range for " +
                         std::to_string(n) + " streams at process " + std::to_string(process));
}

}  // namespace

Status finish_status(const P2pRequest& req) { return req.status; }

std::shared_ptr<P2pRequest> p2p_isend(const std::shared_ptr<CommImpl>& comm, const void* buf,
                                      std::int64_t count, const Datatype& type, int dest, int tag,
                                      int src_idx, int dst_idx, bool collective, bool blocking) {
  check_common(comm, count, type);
  const CommImpl& c = *comm;
  if (tag < 0) fail(Errc::kArg, "send tag must be >= 0");
  if (dest < 0 || dest >= comm_size(c)) fail(Errc::kArg, "destination rank " + std::to_string(dest) + " out of range");

  Endpoint ep;
  int dest_process = dest;
  switch (c.kind) {
    case CommKind::kConventional:
      ep.vci = c.local_vcis[0];
      ep.my_rank = c.my_process;
      break;
    case CommKind::kStreamSingle:
      ep.vci = c.local_vcis[0];
      ep.my_rank = c.my_process;
      ep.src_idx = ep.dst_idx = 0;
      break;
    case CommKind::kStreamMultiplex:
      if (src_idx < 0 && dst_idx < 0) src_idx = dst_idx = 0;
      check_local_idx(c, src_idx, "source stream index");
      check_remote_idx(c, dest, dst_idx, "destination stream index");
      ep.vci = c.local_vcis[static_cast<std::size_t>(src_idx)];
      ep.my_rank = c.my_process;
      ep.src_idx = src_idx;
      ep.dst_idx = dst_idx;
      break;
    case CommKind::kThreadcomm: {
      const int slot = thread_slot(c);
      const auto [p, s] = c.tc->locate(dest);
      ep.vci = c.tc->slot_vcis[static_cast<std::size_t>(slot)];
      ep.my_rank = c.tc->prefix[static_cast<std::size_t>(c.my_process)] + slot;
      ep.src_idx = slot;
      ep.dst_idx = s;
      dest_process = p;
      break;
    }
  }

  FrameHeader tmpl;
  tmpl.context_id = wire_context(c.id, collective);
  tmpl.src_rank = ep.my_rank;
  tmpl.dst_rank = dest;
  tmpl.tag = tag;
  tmpl.src_stream_idx = ep.src_idx;
  tmpl.dst_stream_idx = ep.dst_idx;

  const std::int64_t bytes = count * type.size();
  const std::byte* data = nullptr;
  std::vector<std::byte> keep;
  if (bytes > 0) {
    if (type.is_contiguous()) {
      data = static_cast<const std::byte*>(buf) + type.lb();
    } else {
      keep.resize(static_cast<std::size_t>(bytes));
      pack(type, count, buf, keep);
      data = keep.data();
    }
  }

  Vci& v = *ep.vci;
  if (c.tc && dest_process == c.my_process) {
    // Threads of one process: hand the buffer to the receiver directly.
    if (bytes <= kCellThreshold) {
      auto pkt = std::make_unique<Packet>();
      pkt->hdr = tmpl;
      pkt->hdr.kind = FrameKind::kEager;
      pkt->payload.resize(static_cast<std::size_t>(bytes));
      if (bytes > 0) std::memcpy(pkt->payload.data(), data, static_cast<std::size_t>(bytes));
      v.bump(kCtrInlineSends);
      send_frame_locked(v, dest_process, std::move(pkt));
      return nullptr;
    }
    auto req = std::make_shared<P2pRequest>();
    v.bump(kCtrSendRequests);
    req->is_send = true;
    req->vci = &v;
    req->staging = std::move(keep);
    req->send_data = data;
    req->total = bytes;
    req->outstanding = &v.outstanding;
    v.outstanding.fetch_add(1, std::memory_order_relaxed);
    auto pkt = std::make_unique<Packet>();
    pkt->hdr = tmpl;
    pkt->hdr.kind = FrameKind::kEager;
    pkt->hdr.payload_len = static_cast<std::uint64_t>(bytes);
    pkt->local_send = req;
    send_frame_locked(v, dest_process, std::move(pkt));
    if (blocking) {
      wait_p2p(*req);
      return nullptr;
    }
    return req;
  }

  std::shared_ptr<P2pRequest> req;
  {
    VciGuard guard(v);
    req = start_send_locked(v, dest_process, tmpl, data, bytes, std::move(keep), !blocking);
  }
  if (blocking && req) {
    wait_p2p(*req);
    return nullptr;
  }
  return req;
}

std::shared_ptr<P2pRequest> p2p_irecv(const std::shared_ptr<CommImpl>& comm, void* buf,
                                      std::int64_t count, const Datatype& type, int source,
                                      int tag, int src_idx, int dst_idx, bool collective) {
  check_common(comm, count, type);
  const std::shared_ptr<CommImpl>& cp = comm;
  const CommImpl& c = *cp;
  if (tag < 0 && tag != kAnyTag) fail(Errc::kArg, "invalid receive tag");
  if (source != kAnySource && (source < 0 || source >= comm_size(c)))
    fail(Errc::kArg, "source rank " + std::to_string(source) + " out of range");

  auto req = std::make_shared<P2pRequest>();
  MatchPattern& pat = req->pattern;
  pat.ctx = wire_context(c.id, collective);
  pat.src_rank = source;
  pat.tag = tag;
  switch (c.kind) {
    case CommKind::kConventional:
      req->vci = c.local_vcis[0];
      pat.src_idx = kAnyStream;
      pat.dst_idx = -1;
      break;
    case CommKind::kStreamSingle:
      req->vci = c.local_vcis[0];
      pat.src_idx = kAnyStream;
      pat.dst_idx = 0;
      break;
    case CommKind::kStreamMultiplex:
      if (src_idx < 0 && dst_idx < 0) dst_idx = 0;
      check_local_idx(c, dst_idx, "destination stream index");
      if (src_idx != kAnyStream) {
        if (source != kAnySource) {
          check_remote_idx(c, source, src_idx, "source stream index");
        } else if (src_idx < 0) {
          fail(Errc::kArg, "invalid source stream index");
        }
      }
      req->vci = c.local_vcis[static_cast<std::size_t>(dst_idx)];
      req->report_stream_idx = true;
      pat.src_idx = src_idx;
      pat.dst_idx = dst_idx;
      break;
    case CommKind::kThreadcomm: {
      const int slot = thread_slot(c);
      req->vci = c.tc->slot_vcis[static_cast<std::size_t>(slot)];
      pat.dst_idx = slot;
      pat.src_idx = source == kAnySource ? kAnyStream : c.tc->locate(source).second;
      break;
    }
  }

  req->comm = cp;
  req->type = type;
  req->count = count;
  req->type_size = type.size();
  req->capacity = count * req->type_size;
  req->contiguous = type.is_contiguous() || req->capacity == 0;
  req->buf = static_cast<std::byte*>(buf);
  if (req->contiguous && req->capacity > 0) req->buf += type.lb();
  req->tmpl.context_id = pat.ctx;

  Vci& v = *req->vci;
  req->outstanding = &v.outstanding;
  v.outstanding.fetch_add(1, std::memory_order_relaxed);
  VciGuard guard(v);
  post_recv_locked(v, req);
  return req;
}

}  // namespace detail

namespace {

bool device_aliased(const std::shared_ptr<CommImpl>& c) {
  return c && c->kind == CommKind::kStreamSingle && !c->local_streams.empty() &&
         c->local_streams[0].impl()->kind == StreamKind::kDeviceQueue;
}

Status complete_recv(const std::shared_ptr<P2pRequest>& req) {
  detail::wait_p2p(*req);
  Status st = detail::finish_status(*req);
  if (st.error != Errc::kSuccess)
    throw RequestError(st.error, "message truncated: " + std::to_string(req->total) +
                                     " bytes arrived for a " + std::to_string(req->capacity) +
                                     "-byte receive", st);
  return st;
}

}  // namespace

void Communicator::send(const void* buf, std::int64_t count, const Datatype& type, int dest,
                        int tag) const {
  if (device_aliased(impl_)) return send_enqueue(buf, count, type, dest, tag);
  detail::p2p_isend(impl_, buf, count, type, dest, tag, -1, -1, false, true);
}

Status Communicator::recv(void* buf, std::int64_t count, const Datatype& type, int source,
                          int tag) const {
  if (device_aliased(impl_)) {
    recv_enqueue(buf, count, type, source, tag, nullptr);
    return Status{};
  }
  return complete_recv(detail::p2p_irecv(impl_, buf, count, type, source, tag, -1, -1, false));
}

Request Communicator::isend(const void* buf, std::int64_t count, const Datatype& type, int dest,
                            int tag) const {
  if (device_aliased(impl_)) return isend_enqueue(buf, count, type, dest, tag);
  auto req = detail::p2p_isend(impl_, buf, count, type, dest, tag, -1, -1, false, false);
  if (!req) {
    // Inline sends finish at once; hand back an already complete request.
    req = std::make_shared<P2pRequest>();
    req->is_send = true;
    req->done.store(true);
  }
  return Request(req);
}

Request Communicator::irecv(void* buf, std::int64_t count, const Datatype& type, int source,
                            int tag) const {
  if (device_aliased(impl_)) return irecv_enqueue(buf, count, type, source, tag);
  return Request(detail::p2p_irecv(impl_, buf, count, type, source, tag, -1, -1, false));
}

namespace {

void require_multiplex(const std::shared_ptr<CommImpl>& c) {
  if (!c) fail(Errc::kArg, "null communicator");
  c->inst->check_active();
  if (c->kind != CommKind::kStreamMultiplex)
    fail(Errc::kArg, "stream-indexed operations require a multiplex stream communicator");
}

void require_indices(int src_idx, int dst_idx, bool receive) {
  if (dst_idx < 0) fail(Errc::kArg, "destination stream index must be >= 0");
  if (src_idx < 0 && !(receive && src_idx == kAnyStream))
    fail(Errc::kArg, "source stream index must be >= 0");
}

}  // namespace

void Communicator::stream_send(const void* buf, std::int64_t count, const Datatype& type, int dest,
                               int tag, int src_idx, int dst_idx) const {
  require_multiplex(impl_);
  require_indices(src_idx, dst_idx, false);
  detail::p2p_isend(impl_, buf, count, type, dest, tag, src_idx, dst_idx, false, true);
}

Request Communicator::stream_isend(const void* buf, std::int64_t count, const Datatype& type,
                                   int dest, int tag, int src_idx, int dst_idx) const {
  require_multiplex(impl_);
  require_indices(src_idx, dst_idx, false);
  auto req = detail::p2p_isend(impl_, buf, count, type, dest, tag, src_idx, dst_idx, false, false);
  return Request(req);
}

Status Communicator::stream_recv(void* buf, std::int64_t count, const Datatype& type, int source,
                                 int tag, int src_idx, int dst_idx) const {
  require_multiplex(impl_);
  require_indices(src_idx, dst_idx, true);
  return complete_recv(detail::p2p_irecv(impl_, buf, count, type, source, tag, src_idx, dst_idx, false));
}

Request Communicator::stream_irecv(void* buf, std::int64_t count, const Datatype& type, int source,
                                   int tag, int src_idx, int dst_idx) const {
  require_multiplex(impl_);
  require_indices(src_idx, dst_idx, true);
  return Request(detail::p2p_irecv(impl_, buf, count, type, source, tag, src_idx, dst_idx, false));
}

}  // namespace minimpi
