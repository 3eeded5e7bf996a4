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

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <sys/uio.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <sstream>
#include <string>
#include <thread>

#include "detail/core.hpp"

namespace minimpi::detail {

namespace {

using Clock = std::chrono::steady_clock;

constexpr char kHelloMagic[4] = {'M', 'M', 'P', 'H'};
constexpr std::size_t kHelloBytes = 12;

struct Endpoint {
  std::string host;
  int port = 0;
};

Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) fail(Errc::kArg, "address must be host:port: " + text);
  Endpoint ep;
  ep.host = text.substr(0, colon);
  try {
    ep.port = std::stoi(text.substr(colon + 1));
  } catch (const std::exception&) {
    fail(Errc::kArg, "bad port in address: " + text);
  }
  if (ep.port < 0 || ep.port > 65535) fail(Errc::kArg, "bad port in address: " + text);
  if (ep.host.empty() || ep.host == "localhost") ep.host = "127.0.0.1";
  return ep;
}

sockaddr_in resolve(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(ep.port));
  if (::inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(ep.host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr)
    fail(Errc::kTransport, "cannot resolve host " + ep.host);
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  ::freeaddrinfo(res);
  return addr;
}

bool write_all(int fd, iovec* iov, int cnt) {
  while (cnt > 0) {
    msghdr msg{};
    msg.msg_iov = iov;
    msg.msg_iovlen = static_cast<std::size_t>(cnt);
    const ssize_t n = ::sendmsg(fd, &msg, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    auto left = static_cast<std::size_t>(n);
    while (cnt > 0 && left >= iov->iov_len) {
      left -= iov->iov_len;
      ++iov;
      --cnt;
    }
    if (cnt > 0) {
      iov->iov_base = static_cast<char*>(iov->iov_base) + left;
      iov->iov_len -= left;
    }
  }
  return true;
}

bool read_all(int fd, void* buf, std::size_t len) {
  auto* p = static_cast<char*>(buf);
  while (len > 0) {
    const ssize_t n = ::recv(fd, p, len, 0);
    if (n == 0) return false;
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    p += n;
    len -= static_cast<std::size_t>(n);
  }
  return true;
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

struct Link {
  int fd = -1;
  int peer = -1;
  std::mutex write_mu;
  std::thread reader;
};

class SocketBackend final : public Backend {
 public:
  explicit SocketBackend(InstanceImpl& inst) : inst_(inst), links_(static_cast<std::size_t>(inst.size)) {
    table_.resize(static_cast<std::size_t>(inst.size));
    const Endpoint root = parse_endpoint(inst.cfg.root_addr);
    deadline_ = Clock::now() + std::chrono::milliseconds(inst.cfg.connect_timeout_ms);
    open_listener(inst.rank == 0 ? root : Endpoint{"0.0.0.0", 0});
    acceptor_ = std::thread([this] { accept_loop(); });
    try {
      if (inst.rank == 0) {
        bootstrap_root();
      } else {
        bootstrap_peer(root);
      }
    } catch (...) {
      shutdown();
      throw;
    }
  }

  ~SocketBackend() override { shutdown(); }

  void send(int dest, PacketPtr pkt) override {
    Link* link = link_to(dest);
    if (link == nullptr) return;
    write_frame(*link, pkt->hdr, pkt->payload.data(), pkt->payload.size());
  }

  void shutdown() override {
    if (stopped_.exchange(true)) return;
    if (listen_fd_ >= 0) ::shutdown(listen_fd_, SHUT_RDWR);
    if (acceptor_.joinable()) acceptor_.join();
    if (listen_fd_ >= 0) ::close(listen_fd_);
    listen_fd_ = -1;
    std::vector<std::shared_ptr<Link>> all;
    {
      std::lock_guard lk(mu_);
      all = all_links_;
    }
    for (auto& l : all) ::shutdown(l->fd, SHUT_RDWR);
    for (auto& l : all)
      if (l->reader.joinable()) l->reader.join();
    std::lock_guard lk(mu_);
    for (auto& l : all_links_) ::close(l->fd);
    all_links_.clear();
    for (auto& l : links_) l.reset();
  }

  int open_connections() const override {
    std::lock_guard lk(mu_);
    return static_cast<int>(all_links_.size());
  }

 private:
  void open_listener(const Endpoint& ep) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (listen_fd_ < 0) fail(Errc::kTransport, "socket() failed");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr = resolve(ep);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
        ::listen(listen_fd_, 128) != 0) {
      const std::string err = std::strerror(errno);
      ::close(listen_fd_);
      listen_fd_ = -1;
      fail(Errc::kTransport, "cannot listen on " + ep.host + ":" + std::to_string(ep.port) + ": " + err);
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    listen_port_ = ntohs(addr.sin_port);
  }

  void accept_loop() {
    while (!stopped_.load()) {
      sockaddr_in peer{};
      socklen_t len = sizeof peer;
      const int fd = ::accept4(listen_fd_, reinterpret_cast<sockaddr*>(&peer), &len, SOCK_CLOEXEC);
      if (fd < 0) {
        if (errno == EINTR || errno == ECONNABORTED) continue;
        return;
      }
      char hello[kHelloBytes];
      if (!read_all(fd, hello, sizeof hello) || std::memcmp(hello, kHelloMagic, 4) != 0) {
        ::close(fd);
        continue;
      }
      std::int32_t rank = 0, port = 0;
      std::memcpy(&rank, hello + 4, 4);
      std::memcpy(&port, hello + 8, 4);
      if (rank < 0 || rank >= inst_.size) {
        ::close(fd);
        continue;
      }
      set_nodelay(fd);
      char ip[INET_ADDRSTRLEN] = {};
      ::inet_ntop(AF_INET, &peer.sin_addr, ip, sizeof ip);
      std::lock_guard lk(mu_);
      if (stopped_.load()) {
        ::close(fd);
        return;
      }
      if (inst_.rank == 0 && table_[static_cast<std::size_t>(rank)].empty())
        table_[static_cast<std::size_t>(rank)] = std::string(ip) + ":" + std::to_string(port);
      add_link_locked(fd, rank);
      cv_.notify_all();
    }
  }

  /// Registers a connection; the first link per peer carries our sends.
  Link* add_link_locked(int fd, int peer) {
    auto link = std::make_shared<Link>();
    link->fd = fd;
    link->peer = peer;
    all_links_.push_back(link);
    auto& primary = links_[static_cast<std::size_t>(peer)];
    if (!primary) primary = link;
    Link* raw = link.get();
    raw->reader = std::thread([this, raw] { read_loop(*raw); });
    return primary.get();
  }

  void read_loop(Link& link) {
    for (;;) {
      EncodedHeader head;
      if (!read_all(link.fd, head.data(), head.size())) return;
      FrameHeader h;
      try {
        h = decode_header(head);
      } catch (const Error& e) {
        std::fprintf(stderr, "minimpi[%d]: dropping connection: %s\n", inst_.rank, e.what());
        return;
      }
      auto pkt = std::make_unique<Packet>();
      pkt->hdr = h;
      pkt->payload.resize(static_cast<std::size_t>(h.payload_len));
      if (h.payload_len > 0 && !read_all(link.fd, pkt->payload.data(), pkt->payload.size())) return;
      if (h.kind == FrameKind::kCtrl && h.context_id == kBootstrapContext) {
        accept_table(*pkt);
        continue;
      }
      inst_.deliver(std::move(pkt));
    }
  }

  void accept_table(const Packet& pkt) {
    std::string text(reinterpret_cast<const char*>(pkt.payload.data()), pkt.payload.size());
    std::istringstream in(text);
    std::lock_guard lk(mu_);
    std::string line;
    for (std::size_t r = 0; r < table_.size() && std::getline(in, line); ++r) table_[r] = line;
    table_ready_ = true;
    cv_.notify_all();
  }

  void write_frame(Link& link, const FrameHeader& h, const std::byte* payload, std::size_t len) {
    FrameHeader hdr = h;
    hdr.payload_len = len;
    EncodedHeader head = encode_header(hdr);
    iovec iov[2];
    iov[0].iov_base = head.data();
    iov[0].iov_len = head.size();
    iov[1].iov_base = const_cast<std::byte*>(payload);
    iov[1].iov_len = len;
    std::lock_guard lk(link.write_mu);
    if (!write_all(link.fd, iov, len > 0 ? 2 : 1) && !stopped_.load())
      std::fprintf(stderr, "minimpi[%d]: write to rank %d failed: %s\n", inst_.rank, link.peer,
                   std::strerror(errno));
  }

  int connect_once(const Endpoint& ep) {
    const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd < 0) fail(Errc::kTransport, "socket() failed");
    sockaddr_in addr = resolve(ep);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      ::close(fd);
      return -1;
    }
    set_nodelay(fd);
    char hello[kHelloBytes];
    std::memcpy(hello, kHelloMagic, 4);
    const std::int32_t rank = inst_.rank, port = listen_port_;
    std::memcpy(hello + 4, &rank, 4);
    std::memcpy(hello + 8, &port, 4);
    iovec iov{hello, sizeof hello};
    if (!write_all(fd, &iov, 1)) {
      ::close(fd);
      return -1;
    }
    return fd;
  }

  int connect_with_retry(const Endpoint& ep) {
    for (;;) {
      const int fd = connect_once(ep);
      if (fd >= 0) return fd;
      if (Clock::now() >= deadline_)
        fail(Errc::kTransport, "cannot reach rendezvous address " + ep.host + ":" + std::to_string(ep.port));
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  }

  void bootstrap_root() {
    std::unique_lock lk(mu_);
    table_[0] = "127.0.0.1:" + std::to_string(listen_port_);
    const bool ok = cv_.wait_until(lk, deadline_, [&] {
      for (std::size_t r = 1; r < table_.size(); ++r)
        if (table_[r].empty()) return false;
      return true;
    });
    if (!ok) fail(Errc::kTransport, "timed out waiting for peers to join");
    std::string text;
    for (auto& e : table_) text += e + "\n";
    table_ready_ = true;
    std::vector<Link*> targets;
    for (std::size_t r = 1; r < links_.size(); ++r) targets.push_back(links_[r].get());
    lk.unlock();
    FrameHeader h;
    h.kind = FrameKind::kCtrl;
    h.context_id = kBootstrapContext;
    for (Link* l : targets)
      write_frame(*l, h, reinterpret_cast<const std::byte*>(text.data()), text.size());
  }

  void bootstrap_peer(const Endpoint& root) {
    const int fd = connect_with_retry(root);
    std::unique_lock lk(mu_);
    add_link_locked(fd, 0);
    if (!cv_.wait_until(lk, deadline_, [&] { return table_ready_; }))
      fail(Errc::kTransport, "timed out waiting for the address table");
  }

  Link* link_to(int dest) {
    std::lock_guard lk(mu_);
    if (stopped_.load()) return nullptr;
    if (auto& l = links_[static_cast<std::size_t>(dest)]) return l.get();
    const Endpoint ep = parse_endpoint(table_[static_cast<std::size_t>(dest)]);
    deadline_ = Clock::now() + std::chrono::milliseconds(inst_.cfg.connect_timeout_ms);
    const int fd = connect_with_retry(ep);
    return add_link_locked(fd, dest);
  }

  InstanceImpl& inst_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::shared_ptr<Link>> links_;
  std::vector<std::shared_ptr<Link>> all_links_;
  std::vector<std::string> table_;
  bool table_ready_ = false;
  int listen_fd_ = -1;
  int listen_port_ = 0;
  Clock::time_point deadline_;
  std::thread acceptor_;
  std::atomic<bool> stopped_{false};
};

}  // namespace

std::unique_ptr<Backend> make_socket_backend(InstanceImpl& inst) {
  return std::make_unique<SocketBackend>(inst);
}

}  // namespace minimpi::detail
