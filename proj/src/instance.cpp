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
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <set>
#include <thread>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "detail/core.hpp"

namespace minimpi {

using detail::InstanceImpl;
using detail::Vci;
using detail::VciClass;

// ---------------------------------------------------------------------------
// Config

namespace {

std::optional<std::string> lookup(const ConfigMap& flags, const std::string& key) {
  if (auto it = flags.find(key); it != flags.end()) return it->second;
  std::string env = "MINIMPI_";
  for (char c : key) env.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (const char* v = std::getenv(env.c_str()); v != nullptr && *v != '\0') return std::string(v);
  return std::nullopt;
}

std::int64_t parse_int(const std::string& key, const std::string& text) {
  std::int64_t v = 0;
  const char* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end) fail(Errc::kArg, "config " + key + ": not an integer: " + text);
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "1" || text == "true" || text == "yes" || text == "on") return true;
  if (text == "0" || text == "false" || text == "no" || text == "off") return false;
  fail(Errc::kArg, "config " + key + ": not a boolean: " + text);
}

template <class T>
void read_int(const ConfigMap& flags, const std::string& key, T& out, std::int64_t lo, std::int64_t hi) {
  if (auto v = lookup(flags, key)) {
    const std::int64_t x = parse_int(key, *v);
    if (x < lo || x > hi) fail(Errc::kArg, "config " + key + " out of range: " + *v);
    out = static_cast<T>(x);
  }
}

}  // namespace

LockMode parse_lock_mode(const std::string& text) {
  if (text == "global") return LockMode::kGlobal;
  if (text == "pervci" || text == "per-vci" || text == "per_vci") return LockMode::kPerVci;
  fail(Errc::kArg, "unknown lock mode: " + text);
}

TransportKind parse_transport(const std::string& text) {
  if (text == "in-proc" || text == "inproc") return TransportKind::kInProc;
  if (text == "socket") return TransportKind::kSocket;
  fail(Errc::kArg, "unknown transport: " + text);
}

std::string to_string(LockMode mode) { return mode == LockMode::kGlobal ? "global" : "pervci"; }
std::string to_string(TransportKind kind) {
  return kind == TransportKind::kInProc ? "in-proc" : "socket";
}

Config Config::resolve(const ConfigMap& flags) {
  Config c;
  read_int(flags, "size", c.size, 1, 1 << 15);
  read_int(flags, "rank", c.rank, 0, 1 << 15);
  if (auto v = lookup(flags, "transport")) c.transport = parse_transport(*v);
  if (auto v = lookup(flags, "lock_mode")) c.lock_mode = parse_lock_mode(*v);
  read_int(flags, "vci_pool", c.vci_pool, 0, 4096);
  read_int(flags, "implicit_vcis", c.implicit_vcis, 1, 1024);
  read_int(flags, "eager_limit", c.eager_limit, 0, std::int64_t{1} << 40);
  read_int(flags, "chunk_size", c.chunk_size, 1, std::int64_t{1} << 40);
  read_int(flags, "progress_yield_us", c.progress_yield_us, 0, 10'000'000);
  read_int(flags, "connect_timeout_ms", c.connect_timeout_ms, 1, 3'600'000);
  if (auto v = lookup(flags, "root_addr")) c.root_addr = *v;
  if (auto v = lookup(flags, "trace_frames")) c.trace_frames = parse_bool("trace_frames", *v);
  if (c.rank >= c.size) fail(Errc::kArg, "rank " + std::to_string(c.rank) + " >= size " + std::to_string(c.size));
  return c;
}

ConfigMap Config::to_map() const {
  return {
      {"rank", std::to_string(rank)},
      {"size", std::to_string(size)},
      {"transport", to_string(transport)},
      {"lock_mode", to_string(lock_mode)},
      {"vci_pool", std::to_string(vci_pool)},
      {"implicit_vcis", std::to_string(implicit_vcis)},
      {"eager_limit", std::to_string(eager_limit)},
      {"chunk_size", std::to_string(chunk_size)},
      {"progress_yield_us", std::to_string(progress_yield_us)},
      {"root_addr", root_addr},
      {"connect_timeout_ms", std::to_string(connect_timeout_ms)},
      {"trace_frames", trace_frames ? "1" : "0"},
  };
}

// ---------------------------------------------------------------------------
// Fabric and participant registry

namespace detail {

Fabric::Fabric(int size)
    : slots_(static_cast<std::size_t>(size)), early_(static_cast<std::size_t>(size)),
      left_(static_cast<std::size_t>(size), false) {
  if (size < 1) fail(Errc::kArg, "fabric size must be >= 1");
}

Fabric::~Fabric() {
  for (auto& q : early_)
    for (Packet* p : q) delete p;
}

void Fabric::attach(int rank, InstanceImpl* inst) {
  std::lock_guard lk(mu_);
  if (rank < 0 || rank >= size()) fail(Errc::kArg, "rank outside fabric");
  const auto r = static_cast<std::size_t>(rank);
  if (slots_[r].load() != nullptr)
    fail(Errc::kState, "rank " + std::to_string(rank) + " already initialized on this fabric");
  slots_[r].store(inst, std::memory_order_release);
  left_[r] = false;
  for (Packet* p : early_[r]) inst->deliver(PacketPtr(p));
  early_[r].clear();
}

void Fabric::detach(int rank) {
  std::lock_guard lk(mu_);
  slots_[static_cast<std::size_t>(rank)].store(nullptr, std::memory_order_release);
  left_[static_cast<std::size_t>(rank)] = true;
}

void Fabric::send(int dest, PacketPtr pkt) {
  if (InstanceImpl* target = at(dest)) {
    target->deliver(std::move(pkt));
    return;
  }
  std::lock_guard lk(mu_);
  const auto r = static_cast<std::size_t>(dest);
  if (InstanceImpl* target = slots_[r].load(std::memory_order_acquire)) {
    target->deliver(std::move(pkt));
  } else if (!left_[r]) {
    early_[r].push_back(pkt.release());
  }
}

namespace {

class InProcBackend final : public Backend {
 public:
  InProcBackend(InstanceImpl& inst, std::shared_ptr<Fabric> fabric)
      : inst_(inst), fabric_(std::move(fabric)) {
    fabric_->attach(inst_.rank, &inst_);
  }
  ~InProcBackend() override { shutdown(); }

  void send(int dest, PacketPtr pkt) override {
    fabric_->send(dest, std::move(pkt));
  }
  void shutdown() override {
    if (attached_) {
      fabric_->detach(inst_.rank);
      attached_ = false;
    }
  }

 private:
  InstanceImpl& inst_;
  std::shared_ptr<Fabric> fabric_;
  bool attached_ = true;
};

std::mutex g_registry_mu;
std::set<std::string>& participants() {
  static std::set<std::string> s;
  return s;
}
std::map<int, std::shared_ptr<Fabric>>& default_fabrics() {
  static std::map<int, std::shared_ptr<Fabric>> m;
  return m;
}

void claim_participant(const std::string& key) {
  std::lock_guard lk(g_registry_mu);
  if (!participants().insert(key).second)
    fail(Errc::kState, "participant already initialized: " + key);
}

void release_participant(const std::string& key) {
  std::lock_guard lk(g_registry_mu);
  participants().erase(key);
}

std::shared_ptr<Fabric> default_fabric(int size) {
  std::lock_guard lk(g_registry_mu);
  auto& slot = default_fabrics()[size];
  if (!slot) slot = std::make_shared<Fabric>(size);
  return slot;
}

}  // namespace

std::unique_ptr<Backend> make_inproc_backend(InstanceImpl& inst, std::shared_ptr<Fabric> fabric) {
  return std::make_unique<InProcBackend>(inst, std::move(fabric));
}

// ---------------------------------------------------------------------------
// InstanceImpl

InstanceImpl::InstanceImpl(const Config& config)
    : cfg(config), rank(config.rank), size(config.size),
      routes(std::make_unique<std::atomic<Route*>[]>(kMaxCommIds)) {
  for (std::uint32_t i = 0; i < kMaxCommIds; ++i) routes[i].store(nullptr, std::memory_order_relaxed);
  for (int i = 0; i < cfg.implicit_vcis; ++i) {
    auto v = std::make_unique<Vci>(this, i, VciClass::kImplicit);
    v->guard = cfg.lock_mode == LockMode::kGlobal ? &global_mutex : &v->own_mutex;
    implicit_vcis.push_back(std::move(v));
  }
  pool_vcis.resize(static_cast<std::size_t>(cfg.vci_pool));
  pool_used.assign(static_cast<std::size_t>(cfg.vci_pool), false);
}

InstanceImpl::~InstanceImpl() {
  if (backend) backend->shutdown();
  if (!participant_key.empty() && active.load()) release_participant(participant_key);
  for (Packet* p : orphans) delete p;
}

void InstanceImpl::check_active() const {
  if (!active.load(std::memory_order_relaxed)) fail(Errc::kState, "instance is not initialized");
}

void InstanceImpl::deliver(PacketPtr pkt) {
  const std::uint32_t id = pkt->hdr.context_id >> 1;
  if (id >= kMaxCommIds) return;
  if (Route* r = routes[id].load(std::memory_order_acquire)) {
    if (Vci* v = r->lookup(pkt->hdr.dst_stream_idx)) v->inbound.push(pkt.release());
    return;
  }
  std::lock_guard lk(routes_mu);
  if (Route* r = routes[id].load(std::memory_order_acquire)) {
    if (Vci* v = r->lookup(pkt->hdr.dst_stream_idx)) v->inbound.push(pkt.release());
    return;
  }
  orphans.push_back(pkt.release());
}

void InstanceImpl::transmit(int dest_process, PacketPtr pkt) {
  if (cfg.trace_frames)
    std::fprintf(stderr, "minimpi[%d] -> %d %s\n", rank, dest_process, describe_frame(pkt->hdr).c_str());
  if (frame_observer) frame_observer(dest_process, *pkt);
  if (dest_process == rank) {
    deliver(std::move(pkt));
  } else {
    backend->send(dest_process, std::move(pkt));
  }
}

void InstanceImpl::register_route(std::uint32_t comm_id, std::unique_ptr<Route> route) {
  if (comm_id >= kMaxCommIds) fail(Errc::kExhausted, "context ids exhausted");
  std::lock_guard lk(routes_mu);
  Route* r = route.get();
  route_store.push_back(std::move(route));
  routes[comm_id].store(r, std::memory_order_release);
  std::vector<Packet*> keep;
  for (Packet* p : orphans) {
    if ((p->hdr.context_id >> 1) == comm_id) {
      if (Vci* v = r->lookup(p->hdr.dst_stream_idx)) {
        v->inbound.push(p);
      } else {
        delete p;
      }
    } else {
      keep.push_back(p);
    }
  }
  orphans.swap(keep);
}

void InstanceImpl::unregister_route(std::uint32_t comm_id) {
  std::lock_guard lk(routes_mu);
  if (comm_id < kMaxCommIds) routes[comm_id].store(nullptr, std::memory_order_release);
}

Vci* InstanceImpl::allocate_pool_vci(VciClass cls) {
  std::lock_guard lk(pool_mu);
  for (std::size_t i = 0; i < pool_used.size(); ++i) {
    if (pool_used[i]) continue;
    if (!pool_vcis[i])
      pool_vcis[i] = std::make_unique<Vci>(this, cfg.implicit_vcis + static_cast<int>(i), cls);
    Vci* v = pool_vcis[i].get();
    v->cls = cls;
    if (cls == VciClass::kDevice) {
      v->guard = cfg.lock_mode == LockMode::kGlobal ? &global_mutex : &v->own_mutex;
    } else {
      v->guard = nullptr;
    }
    pool_used[i] = true;
    ++pool_allocated;
    return v;
  }
  fail(Errc::kExhausted, "VCI pool exhausted (capacity " + std::to_string(cfg.vci_pool) + ")");
}

void InstanceImpl::release_pool_vci(Vci* v) {
  std::lock_guard lk(pool_mu);
  const auto i = static_cast<std::size_t>(v->id - cfg.implicit_vcis);
  v->reset();
  pool_used[i] = false;
  --pool_allocated;
}

Vci* InstanceImpl::make_extra_vci(VciClass cls) {
  std::lock_guard lk(extra_vcis_mu);
  const int id = cfg.implicit_vcis + cfg.vci_pool + static_cast<int>(extra_vcis.size());
  extra_vcis.push_back(std::make_unique<Vci>(this, id, cls));
  return extra_vcis.back().get();
}

bool InstanceImpl::progress_null() {
  bool did = false;
  for (auto& v : implicit_vcis) did |= vci_poll(*v);
  did |= global_greqs.poll_all();
  return did;
}

bool InstanceImpl::progress_stream(StreamImpl& s) {
  bool did = vci_poll(*s.vci);
  did |= s.greqs.poll_all();
  return did;
}

std::int64_t InstanceImpl::outstanding_total() {
  std::int64_t n = outstanding_other.load();
  for (auto& v : implicit_vcis) n += v->outstanding.load();
  {
    std::lock_guard lk(pool_mu);
    for (auto& v : pool_vcis)
      if (v) n += v->outstanding.load();
  }
  std::lock_guard lk(extra_vcis_mu);
  for (auto& v : extra_vcis) n += v->outstanding.load();
  return n;
}

RuntimeStats InstanceImpl::stats() {
  std::uint64_t c[kCtrCount] = {};
  std::uint64_t guards = 0;
  auto add = [&](const Vci& v) {
    for (int i = 0; i < kCtrCount; ++i) c[i] += v.counters[i].load(std::memory_order_relaxed);
    guards += v.acquisitions.load(std::memory_order_relaxed);
  };
  for (auto& v : implicit_vcis) add(*v);
  {
    std::lock_guard lk(pool_mu);
    for (auto& v : pool_vcis)
      if (v) add(*v);
  }
  {
    std::lock_guard lk(extra_vcis_mu);
    for (auto& v : extra_vcis) add(*v);
  }
  RuntimeStats s;
  s.frames_sent = c[kCtrFramesSent];
  s.frames_processed = c[kCtrFramesProcessed];
  s.eager_frames = c[kCtrEager];
  s.rts_frames = c[kCtrRts];
  s.cts_frames = c[kCtrCts];
  s.chunk_frames = c[kCtrChunk];
  s.get_req_frames = c[kCtrGetReq];
  s.get_resp_frames = c[kCtrGetResp];
  s.seq_violations = c[kCtrSeqViolations];
  s.single_copies = c[kCtrSingleCopies];
  s.inline_sends = c[kCtrInlineSends];
  s.send_requests = c[kCtrSendRequests];
  s.guard_acquisitions = guards;
  return s;
}

namespace {

std::shared_ptr<InstanceImpl> start_instance(const Config& cfg, const std::string& key,
                                             const std::shared_ptr<Fabric>& fabric) {
  claim_participant(key);
  try {
    auto impl = std::make_shared<InstanceImpl>(cfg);
    impl->participant_key = key;

    auto world = std::make_shared<CommImpl>();
    world->inst = impl;
    world->kind = CommKind::kConventional;
    world->id = 0;
    world->size = cfg.size;
    world->my_process = cfg.rank;
    world->local_vcis = {&impl->implicit_for(0)};
    auto route = std::make_unique<Route>();
    route->vcis = world->local_vcis;
    impl->register_route(0, std::move(route));
    impl->world = world;
    impl->next_comm_id = 1;

    if (cfg.transport == TransportKind::kInProc) {
      impl->backend = make_inproc_backend(*impl, fabric);
    } else {
      impl->backend = make_socket_backend(*impl);
    }
    impl->active.store(true);
    return impl;
  } catch (...) {
    release_participant(key);
    throw;
  }
}

}  // namespace
}  // namespace detail

Fabric make_inproc_fabric(int size) { return std::make_shared<detail::Fabric>(size); }

// ---------------------------------------------------------------------------
// Instance

Instance Instance::init(const ConfigMap& config) {
  Config cfg = Config::resolve(config);
  if (cfg.transport == TransportKind::kSocket) {
    const std::string key = "socket:" + cfg.root_addr + ":" + std::to_string(cfg.rank);
    return Instance(detail::start_instance(cfg, key, nullptr));
  }
  auto fabric = detail::default_fabric(cfg.size);
  char buf[64];
  std::snprintf(buf, sizeof buf, "inproc:%p:%d", static_cast<void*>(fabric.get()), cfg.rank);
  return Instance(detail::start_instance(cfg, buf, fabric));
}

Instance Instance::init(const ConfigMap& config, const Fabric& fabric) {
  if (!fabric) fail(Errc::kArg, "null fabric");
  ConfigMap flags = config;
  flags["size"] = std::to_string(fabric->size());
  flags["transport"] = "in-proc";
  Config cfg = Config::resolve(flags);
  char buf[64];
  std::snprintf(buf, sizeof buf, "inproc:%p:%d", static_cast<void*>(fabric.get()), cfg.rank);
  return Instance(detail::start_instance(cfg, buf, fabric));
}

namespace {
InstanceImpl& checked(const std::shared_ptr<InstanceImpl>& impl) {
  if (!impl) fail(Errc::kState, "instance is not initialized");
  impl->check_active();
  return *impl;
}
}  // namespace

void Instance::finalize() {
  InstanceImpl& inst = checked(impl_);
  if (inst.outstanding_total() > 0) fail(Errc::kPending, "finalize with outstanding requests");
  if (inst.active_threadcomms.load() > 0) fail(Errc::kState, "finalize with an active thread communicator");
  {
    std::lock_guard lk(inst.streams_mu);
    if (!inst.progress_threads.empty()) fail(Errc::kState, "finalize with a running progress thread");
  }
  detail::comm_barrier(inst.world);
  inst.active.store(false);
  inst.backend->shutdown();
  detail::release_participant(inst.participant_key);
  inst.world.reset();
}

bool Instance::active() const { return impl_ && impl_->active.load(); }
int Instance::rank() const { return checked(impl_).rank; }
int Instance::size() const { return checked(impl_).size; }
const Config& Instance::config() const {
  if (!impl_) fail(Errc::kState, "instance is not initialized");
  return impl_->cfg;
}
LockMode Instance::lock_mode() const { return config().lock_mode; }
TransportKind Instance::transport() const { return config().transport; }
Communicator Instance::world() const { return Communicator(checked(impl_).world); }

std::int64_t Instance::vci_pool_capacity() const { return checked(impl_).cfg.vci_pool; }
std::int64_t Instance::vci_pool_allocated() const {
  InstanceImpl& inst = checked(impl_);
  std::lock_guard lk(inst.pool_mu);
  return inst.pool_allocated;
}

RuntimeStats Instance::stats() const {
  if (!impl_) fail(Errc::kState, "instance is not initialized");
  return impl_->stats();
}

std::uint64_t Instance::guard_acquisitions(int vci_id) const {
  if (!impl_) fail(Errc::kState, "instance is not initialized");
  InstanceImpl& inst = *impl_;
  if (vci_id >= 0 && vci_id < inst.cfg.implicit_vcis)
    return inst.implicit_vcis[static_cast<std::size_t>(vci_id)]->acquisitions.load();
  const int pool_idx = vci_id - inst.cfg.implicit_vcis;
  if (pool_idx >= 0 && pool_idx < inst.cfg.vci_pool) {
    std::lock_guard lk(inst.pool_mu);
    auto& v = inst.pool_vcis[static_cast<std::size_t>(pool_idx)];
    return v ? v->acquisitions.load() : 0;
  }
  const int extra_idx = pool_idx - inst.cfg.vci_pool;
  std::lock_guard lk(inst.extra_vcis_mu);
  if (extra_idx >= 0 && extra_idx < static_cast<int>(inst.extra_vcis.size()))
    return inst.extra_vcis[static_cast<std::size_t>(extra_idx)]->acquisitions.load();
  fail(Errc::kArg, "unknown VCI id " + std::to_string(vci_id));
}

int Instance::open_connections() const {
  if (!impl_ || !impl_->backend) return 0;
  return impl_->backend->open_connections();
}

// ---------------------------------------------------------------------------
// Helpers for multi-participant programs

namespace detail {

int free_loopback_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) fail(Errc::kTransport, "socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  socklen_t len = sizeof addr;
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
      ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
    ::close(fd);
    fail(Errc::kTransport, "cannot probe a free port");
  }
  ::close(fd);
  return ntohs(addr.sin_port);
}

}  // namespace detail

void run_world(int n, const ConfigMap& config, const std::function<void(Instance&)>& body) {
  if (n < 1) fail(Errc::kArg, "run_world needs n >= 1");
  ConfigMap base = config;
  const Config probe = Config::resolve([&] {
    ConfigMap m = base;
    m["size"] = std::to_string(n);
    m["rank"] = "0";
    return m;
  }());
  base["size"] = std::to_string(n);
  base["transport"] = to_string(probe.transport);
  Fabric fabric;
  if (probe.transport == TransportKind::kInProc) {
    fabric = make_inproc_fabric(n);
  } else if (base.find("root_addr") == base.end()) {
    base["root_addr"] = "127.0.0.1:" + std::to_string(detail::free_loopback_port());
  }

  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) {
    threads.emplace_back([&, r] {
      try {
        ConfigMap cfg = base;
        cfg["rank"] = std::to_string(r);
        Instance inst = fabric ? Instance::init(cfg, fabric) : Instance::init(cfg);
        body(inst);
        if (inst.active()) inst.finalize();
      } catch (...) {
        errors[static_cast<std::size_t>(r)] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

int run_participants(const std::function<void(Instance&)>& body, const ConfigMap& flags) {
  try {
    const Config cfg = Config::resolve(flags);
    const bool launched_rank = std::getenv("MINIMPI_RANK") != nullptr;
    if (launched_rank || cfg.transport == TransportKind::kSocket) {
      Instance inst = Instance::init(flags);
      body(inst);
      if (inst.active()) inst.finalize();
    } else if (cfg.size > 1) {
      ConfigMap m = flags;
      m["transport"] = "in-proc";
      run_world(cfg.size, m, body);
    } else {
      Instance inst = Instance::init(flags);
      body(inst);
      if (inst.active()) inst.finalize();
    }
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "minimpi: %s\n", e.what());
    return 1;
  }
}

}  // namespace minimpi
