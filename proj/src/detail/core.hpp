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
#include <barrier>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <unordered_map>
#include <vector>

#include "detail/mpsc_queue.hpp"
#include "minimpi/comm.hpp"
#include "minimpi/datatype.hpp"
#include "minimpi/frame.hpp"
#include "minimpi/request.hpp"
#include "minimpi/runtime.hpp"
#include "minimpi/stream.hpp"
#include "minimpi/types.hpp"

namespace minimpi::detail {

struct InstanceImpl;
struct CommImpl;
struct P2pRequest;
struct WindowImpl;
struct DeviceQueueImpl;

// ---------------------------------------------------------------------------
// Packets

/// Byte buffer with inline storage for small payloads.
class Payload {
 public:
  static constexpr std::size_t kInline = 64;

  void resize(std::size_t n) {
    if (n > kInline && n > capacity_) {
      heap_ = std::make_unique<std::byte[]>(n);
      capacity_ = n;
    }
    size_ = n;
  }
  std::byte* data() noexcept { return heap_ ? heap_.get() : inline_; }
  const std::byte* data() const noexcept { return heap_ ? heap_.get() : inline_; }
  std::size_t size() const noexcept { return size_; }

 private:
  std::byte inline_[kInline];
  std::unique_ptr<std::byte[]> heap_;
  std::size_t capacity_ = 0;
  std::size_t size_ = 0;
};

/// Unit that moves through VCI inbound queues. Remote frames and local
/// hand-offs share this shape.
struct Packet {
  Packet* next = nullptr;
  FrameHeader hdr;
  Payload payload;
  /// Single-copy hand-off: the receiver copies from the sender's buffer and
  /// completes this request. hdr.payload_len then holds the message size.
  std::shared_ptr<P2pRequest> local_send;
};

using PacketPtr = std::unique_ptr<Packet>;

// ---------------------------------------------------------------------------
// Counters

enum Counter : int {
  kCtrFramesSent,
  kCtrFramesProcessed,
  kCtrEager,
  kCtrRts,
  kCtrCts,
  kCtrChunk,
  kCtrGetReq,
  kCtrGetResp,
  kCtrSeqViolations,
  kCtrSingleCopies,
  kCtrInlineSends,
  kCtrSendRequests,
  kCtrCount,
};

// ---------------------------------------------------------------------------
// Requests

struct RequestImpl {
  explicit RequestImpl(RequestKind k) : kind(k) {}
  virtual ~RequestImpl() = default;

  const RequestKind kind;
  std::atomic<bool> done{false};
  Status status;
  /// Counter decremented on completion when the request was counted as
  /// outstanding at creation.
  std::atomic<std::int64_t>* outstanding = nullptr;
  std::atomic<std::int64_t> completed_ns{0};

  bool is_done() const noexcept { return done.load(std::memory_order_acquire); }
  /// Publishes completion exactly once.
  void mark_done();
};

struct MatchPattern {
  std::uint32_t ctx = 0;
  int src_rank = kAnySource;
  int tag = kAnyTag;
  int src_idx = kAnyStream;
  int dst_idx = -1;

  bool matches(const FrameHeader& h) const noexcept {
    return h.context_id == ctx && h.dst_stream_idx == dst_idx &&
           (src_rank == kAnySource || src_rank == h.src_rank) &&
           (tag == kAnyTag || tag == h.tag) && (src_idx == kAnyStream || src_idx == h.src_stream_idx);
  }
};

struct Vci;

struct P2pRequest : RequestImpl {
  P2pRequest() : RequestImpl(RequestKind::kP2p) {}

  bool is_send = false;
  Vci* vci = nullptr;
  std::shared_ptr<CommImpl> comm;
  /// Reported in Status::source_stream_idx (-1 on conventional/thread comms).
  bool report_stream_idx = false;

  // Receive side.
  MatchPattern pattern;
  std::byte* buf = nullptr;
  std::int64_t count = 0;
  Datatype type;
  std::int64_t type_size = 0;
  std::int64_t capacity = 0;
  bool contiguous = true;
  std::vector<std::byte> staging;
  std::int64_t total = 0;
  std::int64_t received = 0;
  std::uint64_t local_id = 0;
  std::uint64_t peer_id = 0;

  // Send side.
  const std::byte* send_data = nullptr;
  std::int64_t sent = 0;
  int dest_process = 0;
  FrameHeader tmpl;
};

struct GrequestRegistry;

struct Grequest : RequestImpl {
  Grequest() : RequestImpl(RequestKind::kGeneralized) {}

  GrequestQueryFn query_fn = nullptr;
  GrequestFreeFn free_fn = nullptr;
  GrequestCancelFn cancel_fn = nullptr;
  GrequestPollFn poll_fn = nullptr;
  GrequestWaitFn wait_fn = nullptr;
  void* extra_state = nullptr;
  std::atomic<bool> completed_flag{false};
  std::atomic<bool> polling{false};
  bool freed = false;
  InstanceImpl* inst = nullptr;
  /// Scope: the null stream (instance registry) when empty.
  std::shared_ptr<struct StreamImpl> stream;
};

struct EnqueuedRequest : RequestImpl {
  EnqueuedRequest() : RequestImpl(RequestKind::kEnqueued) {}
  std::shared_ptr<DeviceQueueImpl> queue;
  /// The host-invisible operation started by the executor.
  std::shared_ptr<P2pRequest> inner;
  std::atomic<bool> started{false};
  Errc start_error = Errc::kSuccess;
  std::string start_message;
};

// ---------------------------------------------------------------------------
// VCI

enum class VciClass { kImplicit, kExplicit, kDevice, kThreadSlot };

struct ChannelKey {
  std::uint64_t a;
  std::uint64_t b;
  friend bool operator==(const ChannelKey&, const ChannelKey&) = default;
};

struct ChannelKeyHash {
  std::size_t operator()(const ChannelKey& k) const noexcept {
    return std::hash<std::uint64_t>{}(k.a * 0x9e3779b97f4a7c15ULL ^ k.b);
  }
};

struct alignas(64) Vci {
  Vci(InstanceImpl* owner, int vci_id, VciClass c) : inst(owner), id(vci_id), cls(c) {}

  InstanceImpl* const inst;
  const int id;
  VciClass cls;
  /// Null means lock-free (serial-context streams and thread slots).
  std::mutex* guard = nullptr;
  std::mutex own_mutex;

  MpscQueue<Packet> inbound;
  std::deque<std::shared_ptr<P2pRequest>> posted;
  std::deque<Packet*> unexpected;
  std::unordered_map<std::uint64_t, std::shared_ptr<P2pRequest>> rndv_send;
  std::unordered_map<std::uint64_t, std::shared_ptr<P2pRequest>> rndv_recv;
  std::uint64_t next_rndv_id = 1;
  std::unordered_map<ChannelKey, std::uint64_t, ChannelKeyHash> send_seq;
  std::unordered_map<ChannelKey, std::uint64_t, ChannelKeyHash> recv_seq;

  std::atomic<std::uint64_t> acquisitions{0};
  std::atomic<std::int64_t> outstanding{0};
  std::atomic<std::uint64_t> counters[kCtrCount] = {};

  void bump(Counter c, std::uint64_t n = 1) noexcept {
    counters[c].fetch_add(n, std::memory_order_relaxed);
  }
  bool lock_free() const noexcept { return guard == nullptr; }
  /// Clears matching state when the VCI returns to its pool.
  void reset();
  ~Vci();
};

class VciGuard {
 public:
  explicit VciGuard(Vci& v) : mu_(v.guard) {
    if (mu_ != nullptr) {
      mu_->lock();
      v.acquisitions.fetch_add(1, std::memory_order_relaxed);
    }
  }
  ~VciGuard() {
    if (mu_ != nullptr) mu_->unlock();
  }
  VciGuard(const VciGuard&) = delete;
  VciGuard& operator=(const VciGuard&) = delete;

 private:
  std::mutex* mu_;
};

// Engine entry points (vci.cpp). Functions suffixed _locked expect the caller
// to hold the VCI guard (or to be the owning serial context).

/// Ingests inbound packets and advances protocol state. Takes the guard.
bool vci_poll(Vci& vci);
bool vci_poll_locked(Vci& vci);

/// Posts a receive: first-match against the unexpected queue, else queued.
void post_recv_locked(Vci& vci, const std::shared_ptr<P2pRequest>& req);

/// Sends a frame from `vci` to `dest_process`, stamping the channel sequence.
void send_frame_locked(Vci& vci, int dest_process, PacketPtr pkt);

/// Starts a message of `bytes` bytes taken from `data` (contiguous view).
/// Returns nullptr when the message completed eagerly. `keep` owns `data`
/// for rendezvous sends that staged their payload.
std::shared_ptr<P2pRequest> start_send_locked(Vci& vci, int dest_process, const FrameHeader& tmpl,
                                              const std::byte* data, std::int64_t bytes,
                                              std::vector<std::byte> keep, bool want_request);

// ---------------------------------------------------------------------------
// Routing

struct Route {
  /// By destination stream index; index -1 maps to entry 0.
  std::vector<Vci*> vcis;
  WindowImpl* window = nullptr;

  Vci* lookup(int idx) const noexcept {
    if (idx < 0) return vcis.empty() ? nullptr : vcis[0];
    if (static_cast<std::size_t>(idx) >= vcis.size()) return nullptr;
    return vcis[static_cast<std::size_t>(idx)];
  }
};

inline constexpr std::uint32_t kMaxCommIds = 1u << 16;
inline constexpr std::uint32_t kBootstrapContext = 0xffffffffu;

inline std::uint32_t wire_context(std::uint32_t comm_id, bool collective) {
  return comm_id * 2 + (collective ? 1 : 0);
}

// ---------------------------------------------------------------------------
// Backends

class Backend {
 public:
  virtual ~Backend() = default;
  /// Takes ownership. Frames to self are delivered locally by the caller.
  virtual void send(int dest_process, PacketPtr pkt) = 0;
  virtual void shutdown() = 0;
  virtual int open_connections() const { return 0; }
};

class Fabric {
 public:
  explicit Fabric(int size);
  ~Fabric();
  int size() const noexcept { return static_cast<int>(slots_.size()); }
  /// Errc::kState if the rank slot is taken. Frames that arrived before the
  /// rank attached are delivered now.
  void attach(int rank, InstanceImpl* inst);
  void detach(int rank);
  InstanceImpl* at(int rank) const noexcept { return slots_[static_cast<std::size_t>(rank)].load(std::memory_order_acquire); }
  /// Delivers to an attached rank, holds frames for a rank that has not
  /// attached yet, and drops frames for a rank that already left.
  void send(int dest, PacketPtr pkt);

 private:
  std::vector<std::atomic<InstanceImpl*>> slots_;
  std::vector<std::vector<Packet*>> early_;
  std::vector<bool> left_;
  std::mutex mu_;
};

std::unique_ptr<Backend> make_inproc_backend(InstanceImpl& inst, std::shared_ptr<Fabric> fabric);
std::unique_ptr<Backend> make_socket_backend(InstanceImpl& inst);

// ---------------------------------------------------------------------------
// Streams

struct GrequestRegistry {
  std::mutex mu;
  std::vector<std::shared_ptr<Grequest>> items;
  std::atomic<int> live{0};

  void add(const std::shared_ptr<Grequest>& g);
  /// Polls every incomplete grequest once. Returns whether any completed.
  bool poll_all();
};

struct StreamImpl {
  std::int64_t id = 0;
  StreamKind kind = StreamKind::kSerialContext;
  Vci* vci = nullptr;
  std::shared_ptr<DeviceQueueImpl> device;
  std::weak_ptr<InstanceImpl> inst;
  std::atomic<int> attached_comms{0};
  std::atomic<bool> freed{false};
  GrequestRegistry greqs;
};

// ---------------------------------------------------------------------------
// Communicators

struct ThreadcommState;

struct CommImpl {
  std::shared_ptr<InstanceImpl> inst;
  CommKind kind = CommKind::kConventional;
  std::uint32_t id = 0;
  int size = 1;
  /// Process rank of this participant (conventional numbering).
  int my_process = 0;
  /// Local attachments: conventional comms hold none.
  std::vector<Stream> local_streams;
  /// Per-process attachment counts (single: 0 or 1, multiplex: >= 1).
  std::vector<int> remote_counts;
  /// Sending/receiving VCI per local stream index; [0] is the implicit VCI
  /// when nothing is attached.
  std::vector<Vci*> local_vcis;
  std::unique_ptr<ThreadcommState> tc;
  std::atomic<bool> freed{false};

  /// Process hosting `rank` of this communicator.
  int process_of(int rank) const;
  ~CommImpl();
};

struct ThreadcommState {
  InstanceImpl* inst = nullptr;
  /// Thread counts per process and their prefix sums (size nprocs + 1).
  std::vector<int> counts;
  std::vector<int> prefix;
  int local_threads = 0;
  /// Owned by the instance so late frames never touch freed memory.
  std::vector<Vci*> slot_vcis;
  std::vector<std::atomic<std::thread::id>> owners;
  std::atomic<int> arrivals{0};
  std::atomic<bool> active{false};

  struct OnStart {
    ThreadcommState* s;
    void operator()() noexcept { s->active.store(true, std::memory_order_release); }
  };
  struct OnFinish {
    ThreadcommState* s;
    void operator()() noexcept;
  };
  std::unique_ptr<std::barrier<OnStart>> start_barrier;
  std::unique_ptr<std::barrier<OnFinish>> finish_barrier;

  /// Slot of the calling thread or -1.
  int slot_of_caller() const noexcept;
  /// (process, slot) of a thread rank.
  std::pair<int, int> locate(int rank) const noexcept;
};

// ---------------------------------------------------------------------------
// Instance

struct ProgressThread {
  std::thread thread;
  std::atomic<bool> stop{false};
};

struct InstanceImpl : std::enable_shared_from_this<InstanceImpl> {
  InstanceImpl(const Config& config);
  ~InstanceImpl();

  Config cfg;
  int rank = 0;
  int size = 1;
  std::atomic<bool> active{false};
  std::string participant_key;

  std::unique_ptr<Backend> backend;
  std::mutex global_mutex;

  std::vector<std::unique_ptr<Vci>> implicit_vcis;

  // Explicit VCI pool.
  std::mutex pool_mu;
  std::vector<std::unique_ptr<Vci>> pool_vcis;
  std::vector<bool> pool_used;
  std::int64_t pool_allocated = 0;

  // Routes by comm id.
  std::unique_ptr<std::atomic<Route*>[]> routes;
  std::mutex routes_mu;
  std::vector<std::unique_ptr<Route>> route_store;
  std::vector<Packet*> orphans;

  std::mutex create_mu;
  std::uint32_t next_comm_id = 0;
  std::shared_ptr<CommImpl> world;

  GrequestRegistry global_greqs;
  std::atomic<std::int64_t> outstanding_other{0};
  std::atomic<int> active_threadcomms{0};

  std::mutex streams_mu;
  std::vector<std::weak_ptr<StreamImpl>> streams;
  std::map<std::int64_t, std::unique_ptr<ProgressThread>> progress_threads;
  std::map<DeviceQueueImpl*, std::pair<Vci*, int>> device_vcis;

  // Thread-slot VCIs live outside the pool for the lifetime of the instance.
  std::mutex extra_vcis_mu;
  std::vector<std::unique_ptr<Vci>> extra_vcis;

  /// Test hook observing every frame leaving this instance.
  std::function<void(int dest_process, const Packet&)> frame_observer;

  void check_active() const;
  Vci& implicit_for(std::uint32_t comm_id) {
    return *implicit_vcis[comm_id % implicit_vcis.size()];
  }

  /// Hands a packet to the local VCI named by its context and stream index.
  void deliver(PacketPtr pkt);
  /// Local delivery or backend send.
  void transmit(int dest_process, PacketPtr pkt);

  void register_route(std::uint32_t comm_id, std::unique_ptr<Route> route);
  void unregister_route(std::uint32_t comm_id);

  Vci* allocate_pool_vci(VciClass cls);
  void release_pool_vci(Vci* vci);

  Vci* make_extra_vci(VciClass cls);

  /// One pass over implicit VCIs and null-scope grequests.
  bool progress_null();
  bool progress_stream(StreamImpl& s);

  std::int64_t outstanding_total();
  RuntimeStats stats();
};

/// Blocking wait for a P2P request by spinning on its VCI.
void wait_p2p(P2pRequest& req);

/// Spin helper shared by blocking waits. It polls the VCI and yields between
/// attempts; waits on implicit VCIs also drive null-stream progress now and then.
class Spinner {
 public:
  Spinner(InstanceImpl* inst, Vci* vci) : inst_(inst), vci_(vci) {}
  void step();

 private:
  InstanceImpl* inst_;
  Vci* vci_;
  std::uint32_t idle_ = 0;
};

/// GET_REQ / GET_RESP handling (window.cpp).
void window_packet_locked(Vci& vci, PacketPtr pkt);

// Internal p2p (p2p.cpp). `collective` selects the collective sub-context.
std::shared_ptr<P2pRequest> p2p_isend(const std::shared_ptr<CommImpl>& comm, const void* buf,
                                      std::int64_t count, const Datatype& type, int dest, int tag,
                                      int src_idx, int dst_idx, bool collective, bool blocking);
std::shared_ptr<P2pRequest> p2p_irecv(const std::shared_ptr<CommImpl>& comm, void* buf,
                                      std::int64_t count, const Datatype& type, int source,
                                      int tag, int src_idx, int dst_idx, bool collective);
/// Rank of the caller on `comm` (thread rank on thread communicators).
int comm_rank_of_caller(const CommImpl& comm);

/// Collectives over arbitrary comm kinds (comm.cpp).
void comm_barrier(const std::shared_ptr<CommImpl>& comm);
std::vector<std::int64_t> comm_allgather_i64(const std::shared_ptr<CommImpl>& comm,
                                             const std::vector<std::int64_t>& mine);

/// Collectively agrees on a fresh comm id over `parent` (takes create_mu).
std::uint32_t comm_allocate_id(const std::shared_ptr<CommImpl>& parent);

/// Completion of a status for a finished receive.
Status finish_status(const P2pRequest& req);

std::shared_ptr<StreamImpl> stream_impl_checked(const Stream& s);

/// Registered device queue for an 8-byte handle, or null (offload.cpp).
std::shared_ptr<DeviceQueueImpl> find_device_queue(std::uint64_t handle);

std::int64_t now_ns();

/// An ephemeral loopback port that was free a moment ago.
int free_loopback_port();

}  // namespace minimpi::detail
