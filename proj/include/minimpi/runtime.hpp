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
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "minimpi/comm.hpp"
#include "minimpi/info.hpp"
#include "minimpi/request.hpp"
#include "minimpi/stream.hpp"
#include "minimpi/types.hpp"

namespace minimpi {

namespace detail {
struct InstanceImpl;
class Fabric;
}  // namespace detail

using ConfigMap = std::map<std::string, std::string>;

/// Resolved runtime configuration. Keys of the flag map are the lower-case
/// env names without prefix (for example "eager_limit" for
/// MINIMPI_EAGER_LIMIT). Flags override env values, which override defaults.
struct Config {
  int rank = 0;
  int size = 1;
  TransportKind transport = TransportKind::kInProc;
  LockMode lock_mode = LockMode::kPerVci;
  int vci_pool = 64;
  int implicit_vcis = 16;
  std::int64_t eager_limit = 64 * 1024;
  std::int64_t chunk_size = 16 * 1024;
  int progress_yield_us = 50;
  std::string root_addr = "127.0.0.1:0";
  int connect_timeout_ms = 10000;
  bool trace_frames = false;

  static Config resolve(const ConfigMap& flags = {});
  ConfigMap to_map() const;
};

LockMode parse_lock_mode(const std::string& text);
TransportKind parse_transport(const std::string& text);
std::string to_string(LockMode mode);
std::string to_string(TransportKind kind);

/// Counters summed over every VCI of an instance.
struct RuntimeStats {
  std::uint64_t frames_sent = 0;
  std::uint64_t frames_processed = 0;
  std::uint64_t eager_frames = 0;
  std::uint64_t rts_frames = 0;
  std::uint64_t cts_frames = 0;
  std::uint64_t chunk_frames = 0;
  std::uint64_t get_req_frames = 0;
  std::uint64_t get_resp_frames = 0;
  std::uint64_t seq_violations = 0;
  /// Receiver copies straight out of a local sender's buffer.
  std::uint64_t single_copies = 0;
  /// Local sends that used the inline cell and allocated no request.
  std::uint64_t inline_sends = 0;
  /// Sender-side request objects allocated.
  std::uint64_t send_requests = 0;
  std::uint64_t guard_acquisitions = 0;
};

/// A set of in-process instances that exchange frames through shared queues.
using Fabric = std::shared_ptr<detail::Fabric>;
Fabric make_inproc_fabric(int size);

class Instance {
 public:
  Instance() = default;

  /// Joins the process-default fabric (in-proc) or the socket world named by
  /// the configuration.
  static Instance init(const ConfigMap& config = {});
  /// Joins an explicit in-proc fabric as rank config["rank"].
  static Instance init(const ConfigMap& config, const Fabric& fabric);

  void finalize();
  bool active() const;

  int rank() const;
  int size() const;
  const Config& config() const;
  LockMode lock_mode() const;
  TransportKind transport() const;
  Communicator world() const;

  /// info == nullptr means NULL_INFO.
  Stream stream_create(const Info* info = nullptr);
  void stream_free(Stream& stream);
  std::int64_t vci_pool_capacity() const;
  std::int64_t vci_pool_allocated() const;

  void stream_progress(const Stream& stream = Stream());
  void start_progress_thread(const Stream& stream = Stream());
  void stop_progress_thread(const Stream& stream = Stream());

  /// poll_fn and wait_fn may be null. A non-null `stream` scopes polling to
  /// stream_progress on that stream instead of the null stream.
  Request grequest_start(GrequestQueryFn query_fn, GrequestFreeFn free_fn,
                         GrequestCancelFn cancel_fn, GrequestPollFn poll_fn,
                         GrequestWaitFn wait_fn, void* extra_state,
                         const Stream& stream = Stream());

  RuntimeStats stats() const;
  /// Guard acquisitions recorded on one VCI (see Stream::vci_id).
  std::uint64_t guard_acquisitions(int vci_id) const;
  /// Open transport connections (socket backend), for resource checks.
  int open_connections() const;

  const std::shared_ptr<detail::InstanceImpl>& impl() const noexcept { return impl_; }

 private:
  explicit Instance(std::shared_ptr<detail::InstanceImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::InstanceImpl> impl_;
};

/// Runs `body` on `n` participants inside this process, one thread each,
/// over a fresh fabric (in-proc) or loopback sockets. Instances still active
/// when `body` returns are finalized. The first exception is rethrown.
void run_world(int n, const ConfigMap& config, const std::function<void(Instance&)>& body);

/// Entry helper for programs started by the launcher: with MINIMPI_RANK set it
/// runs a single participant, otherwise MINIMPI_SIZE in-proc participants on
/// threads (singleton when unset). Returns a process exit code.
int run_participants(const std::function<void(Instance&)>& body, const ConfigMap& flags = {});

struct LaunchResult {
  std::vector<int> exit_codes;
  /// First nonzero exit code, or 0.
  int combined = 0;
};

/// Starts `n` participants of `program`. Socket transport forks n processes
/// with MINIMPI_RANK/SIZE/ROOT_ADDR; in-proc starts one process hosting n
/// participants. Errc::kSpawn if the program cannot be started.
LaunchResult launch(int n, const std::string& program, const std::vector<std::string>& args,
                    TransportKind transport, const ConfigMap& extra_env = {});

}  // namespace minimpi
