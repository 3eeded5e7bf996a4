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
#include <chrono>
#include <cstdio>
#include <cstdlib>

#include "detail/core.hpp"

namespace minimpi::detail {

std::int64_t now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void RequestImpl::mark_done() {
  completed_ns.store(now_ns(), std::memory_order_relaxed);
  std::atomic<std::int64_t>* counter = outstanding;
  done.store(true, std::memory_order_release);
  if (counter != nullptr) counter->fetch_sub(1, std::memory_order_relaxed);
}

void Vci::reset() {
  for (Packet* p : unexpected) delete p;
  unexpected.clear();
  for (Packet* p = inbound.pop_all(); p != nullptr;) {
    Packet* next = p->next;
    delete p;
    p = next;
  }
  posted.clear();
  rndv_send.clear();
  rndv_recv.clear();
  send_seq.clear();
  recv_seq.clear();
  next_rndv_id = 1;
}

Vci::~Vci() { reset(); }

namespace {

std::uint64_t pair_key(std::int64_t hi, std::int64_t lo) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(hi)) << 32) |
         static_cast<std::uint32_t>(lo);
}

ChannelKey send_key(const FrameHeader& h, int dest_process) {
  return {pair_key(h.context_id, dest_process), pair_key(h.src_stream_idx, h.dst_stream_idx)};
}

ChannelKey recv_key(const FrameHeader& h) {
  return {pair_key(h.context_id, h.src_rank), pair_key(h.src_stream_idx, h.dst_stream_idx)};
}

void put_u64(std::byte* p, std::uint64_t v) { std::memcpy(p, &v, sizeof v); }
std::uint64_t get_u64(const std::byte* p) {
  std::uint64_t v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

[[noreturn]] void protocol_violation(const Vci& v, const FrameHeader& h, const char* what) {
  std::fprintf(stderr, "minimpi: protocol violation on vci %d: %s (%s)\n", v.id, what,
               describe_frame(h).c_str());
  std::abort();
}

void count_kind(Vci& v, FrameKind kind) {
  switch (kind) {
    case FrameKind::kEager: v.bump(kCtrEager); break;
    case FrameKind::kRts: v.bump(kCtrRts); break;
    case FrameKind::kCts: v.bump(kCtrCts); break;
    case FrameKind::kChunk: v.bump(kCtrChunk); break;
    case FrameKind::kGetReq: v.bump(kCtrGetReq); break;
    case FrameKind::kGetResp: v.bump(kCtrGetResp); break;
    case FrameKind::kCtrl: break;
  }
}

void check_seq(Vci& v, const FrameHeader& h) {
  std::uint64_t& expect = v.recv_seq[recv_key(h)];
  if (h.seq != expect) v.bump(kCtrSeqViolations);
  expect = h.seq + 1;
}

void prepare_recv(P2pRequest& req, std::int64_t total) {
  req.total = total;
  req.received = 0;
  if (!req.contiguous) req.staging.resize(static_cast<std::size_t>(std::min(total, req.capacity)));
}

void copy_into_recv(P2pRequest& req, std::int64_t offset, const std::byte* src, std::int64_t len) {
  if (offset >= req.capacity || len <= 0) return;
  const std::int64_t n = std::min(len, req.capacity - offset);
  std::byte* dst = req.contiguous ? req.buf : req.staging.data();
  std::memcpy(dst + offset, src, static_cast<std::size_t>(n));
}

void finish_recv(P2pRequest& req) {
  Status& st = req.status;
  st.bytes = std::min(req.total, req.capacity);
  st.count = req.type_size > 0 ? st.bytes / req.type_size : 0;
  st.error = req.total > req.capacity ? Errc::kTruncate : Errc::kSuccess;
  if (!req.contiguous && st.bytes > 0)
    unpack_prefix(req.type, req.count, std::span<const std::byte>(req.staging.data(), static_cast<std::size_t>(st.bytes)), req.buf);
  std::vector<std::byte>().swap(req.staging);
  req.mark_done();
}

void send_cts(Vci& v, P2pRequest& req) {
  auto pkt = std::make_unique<Packet>();
  const FrameHeader& rts = req.tmpl;
  pkt->hdr.kind = FrameKind::kCts;
  pkt->hdr.context_id = rts.context_id;
  pkt->hdr.src_rank = rts.dst_rank;
  pkt->hdr.dst_rank = rts.src_rank;
  pkt->hdr.tag = rts.tag;
  pkt->hdr.src_stream_idx = rts.dst_stream_idx;
  pkt->hdr.dst_stream_idx = rts.src_stream_idx;
  pkt->payload.resize(24);
  put_u64(pkt->payload.data(), req.peer_id);
  put_u64(pkt->payload.data() + 8, req.local_id);
  put_u64(pkt->payload.data() + 16, static_cast<std::uint64_t>(req.received));
  send_frame_locked(v, req.dest_process, std::move(pkt));
}

void deliver_to_recv(Vci& v, const std::shared_ptr<P2pRequest>& req, PacketPtr pkt) {
  const FrameHeader& h = pkt->hdr;
  req->status.source = h.src_rank;
  req->status.tag = h.tag;
  req->status.source_stream_idx = req->report_stream_idx ? h.src_stream_idx : kNoStream;

  if (pkt->local_send) {
    P2pRequest& sender = *pkt->local_send;
    const auto total = static_cast<std::int64_t>(h.payload_len);
    prepare_recv(*req, total);
    copy_into_recv(*req, 0, sender.send_data, total);
    v.bump(kCtrSingleCopies);
    sender.mark_done();
    finish_recv(*req);
    return;
  }
  if (h.kind == FrameKind::kEager) {
    const auto total = static_cast<std::int64_t>(pkt->payload.size());
    prepare_recv(*req, total);
    copy_into_recv(*req, 0, pkt->payload.data(), total);
    finish_recv(*req);
    return;
  }
  // RTS: register the receive and grant the first chunk.
  if (pkt->payload.size() != 16) protocol_violation(v, h, "malformed RTS");
  prepare_recv(*req, static_cast<std::int64_t>(get_u64(pkt->payload.data())));
  req->peer_id = get_u64(pkt->payload.data() + 8);
  req->local_id = v.next_rndv_id++;
  req->tmpl = h;
  req->dest_process = req->comm->process_of(h.src_rank);
  v.rndv_recv.emplace(req->local_id, req);
  send_cts(v, *req);
}

void handle_message(Vci& v, PacketPtr pkt) {
  for (auto it = v.posted.begin(); it != v.posted.end(); ++it) {
    if ((*it)->pattern.matches(pkt->hdr)) {
      std::shared_ptr<P2pRequest> req = std::move(*it);
      v.posted.erase(it);
      deliver_to_recv(v, req, std::move(pkt));
      return;
    }
  }
  v.unexpected.push_back(pkt.release());
}

void handle_cts(Vci& v, const Packet& pkt) {
  if (pkt.payload.size() != 24) protocol_violation(v, pkt.hdr, "malformed CTS");
  const std::uint64_t sender_id = get_u64(pkt.payload.data());
  const std::uint64_t receiver_id = get_u64(pkt.payload.data() + 8);
  const auto offset = static_cast<std::int64_t>(get_u64(pkt.payload.data() + 16));
  auto it = v.rndv_send.find(sender_id);
  if (it == v.rndv_send.end()) protocol_violation(v, pkt.hdr, "CTS for unknown send");
  std::shared_ptr<P2pRequest> req = it->second;
  if (offset < 0 || offset >= req->total) protocol_violation(v, pkt.hdr, "CTS offset out of range");

  const std::int64_t len = std::min(v.inst->cfg.chunk_size, req->total - offset);
  auto chunk = std::make_unique<Packet>();
  chunk->hdr = req->tmpl;
  chunk->hdr.kind = FrameKind::kChunk;
  chunk->payload.resize(16 + static_cast<std::size_t>(len));
  put_u64(chunk->payload.data(), receiver_id);
  put_u64(chunk->payload.data() + 8, static_cast<std::uint64_t>(offset));
  std::memcpy(chunk->payload.data() + 16, req->send_data + offset, static_cast<std::size_t>(len));
  send_frame_locked(v, req->dest_process, std::move(chunk));
  req->sent = offset + len;
  if (req->sent == req->total) {
    v.rndv_send.erase(it);
    std::vector<std::byte>().swap(req->staging);
    req->mark_done();
  }
}

void handle_chunk(Vci& v, const Packet& pkt) {
  if (pkt.payload.size() < 16) protocol_violation(v, pkt.hdr, "malformed CHUNK");
  const std::uint64_t receiver_id = get_u64(pkt.payload.data());
  const auto offset = static_cast<std::int64_t>(get_u64(pkt.payload.data() + 8));
  const auto len = static_cast<std::int64_t>(pkt.payload.size()) - 16;
  auto it = v.rndv_recv.find(receiver_id);
  if (it == v.rndv_recv.end()) protocol_violation(v, pkt.hdr, "CHUNK for unknown receive");
  std::shared_ptr<P2pRequest> req = it->second;
  if (offset != req->received || offset + len > req->total)
    protocol_violation(v, pkt.hdr, "CHUNK out of sequence");
  copy_into_recv(*req, offset, pkt.payload.data() + 16, len);
  req->received += len;
  if (req->received == req->total) {
    v.rndv_recv.erase(it);
    finish_recv(*req);
  } else {
    send_cts(v, *req);
  }
}

void process(Vci& v, PacketPtr pkt) {
  v.bump(kCtrFramesProcessed);
  check_seq(v, pkt->hdr);
  switch (pkt->hdr.kind) {
    case FrameKind::kEager:
    case FrameKind::kRts:
      handle_message(v, std::move(pkt));
      break;
    case FrameKind::kCts:
      handle_cts(v, *pkt);
      break;
    case FrameKind::kChunk:
      handle_chunk(v, *pkt);
      break;
    case FrameKind::kGetReq:
    case FrameKind::kGetResp:
      window_packet_locked(v, std::move(pkt));
      break;
    case FrameKind::kCtrl:
      break;
  }
}

}  // namespace

void send_frame_locked(Vci& v, int dest_process, PacketPtr pkt) {
  std::uint64_t& seq = v.send_seq[send_key(pkt->hdr, dest_process)];
  pkt->hdr.seq = seq++;
  if (!pkt->local_send) pkt->hdr.payload_len = pkt->payload.size();
  v.bump(kCtrFramesSent);
  count_kind(v, pkt->hdr.kind);
  v.inst->transmit(dest_process, std::move(pkt));
}

std::shared_ptr<P2pRequest> start_send_locked(Vci& v, int dest_process, const FrameHeader& tmpl,
                                              const std::byte* data, std::int64_t bytes,
                                              std::vector<std::byte> keep, bool want_request) {
  if (bytes <= v.inst->cfg.eager_limit) {
    auto pkt = std::make_unique<Packet>();
    pkt->hdr = tmpl;
    pkt->hdr.kind = FrameKind::kEager;
    pkt->payload.resize(static_cast<std::size_t>(bytes));
    if (bytes > 0) std::memcpy(pkt->payload.data(), data, static_cast<std::size_t>(bytes));
    send_frame_locked(v, dest_process, std::move(pkt));
    if (!want_request) return nullptr;
    auto req = std::make_shared<P2pRequest>();
    v.bump(kCtrSendRequests);
    req->is_send = true;
    req->vci = &v;
    req->done.store(true, std::memory_order_relaxed);
    return req;
  }
  auto req = std::make_shared<P2pRequest>();
  v.bump(kCtrSendRequests);
  req->is_send = true;
  req->vci = &v;
  req->staging = std::move(keep);
  req->send_data = data;
  req->total = bytes;
  req->dest_process = dest_process;
  req->tmpl = tmpl;
  req->local_id = v.next_rndv_id++;
  req->outstanding = &v.outstanding;
  v.outstanding.fetch_add(1, std::memory_order_relaxed);
  v.rndv_send.emplace(req->local_id, req);

  auto rts = std::make_unique<Packet>();
  rts->hdr = tmpl;
  rts->hdr.kind = FrameKind::kRts;
  rts->payload.resize(16);
  put_u64(rts->payload.data(), static_cast<std::uint64_t>(bytes));
  put_u64(rts->payload.data() + 8, req->local_id);
  send_frame_locked(v, dest_process, std::move(rts));
  return req;
}

void post_recv_locked(Vci& v, const std::shared_ptr<P2pRequest>& req) {
  for (auto it = v.unexpected.begin(); it != v.unexpected.end(); ++it) {
    if (req->pattern.matches((*it)->hdr)) {
      PacketPtr pkt(*it);
      v.unexpected.erase(it);
      deliver_to_recv(v, req, std::move(pkt));
      return;
    }
  }
  v.posted.push_back(req);
}

bool vci_poll_locked(Vci& v) {
  Packet* p = v.inbound.pop_all();
  if (p == nullptr) return false;
  while (p != nullptr) {
    Packet* next = p->next;
    p->next = nullptr;
    process(v, PacketPtr(p));
    p = next;
  }
  return true;
}

bool vci_poll(Vci& v) {
  // All protocol work is triggered by inbound packets, so an empty queue
  // means there is nothing to advance and the guard can be skipped.
  if (v.inbound.empty()) return false;
  VciGuard guard(v);
  return vci_poll_locked(v);
}

void Spinner::step() {
  if (vci_ != nullptr && vci_poll(*vci_)) {
    idle_ = 0;
    return;
  }
  ++idle_;
  if ((vci_ == nullptr || vci_->cls == VciClass::kImplicit) && idle_ % 64 == 0)
    inst_->progress_null();
  std::this_thread::yield();
}

void wait_p2p(P2pRequest& req) {
  Spinner spin(req.vci->inst, req.vci);
  while (!req.is_done()) spin.step();
}

}  // namespace minimpi::detail
