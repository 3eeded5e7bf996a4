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

#include "bench.hpp"

#include <algorithm>
#include <atomic>
#include <barrier>
#include <chrono>
#include <cstring>
#include <mutex>
#include <ostream>
#include <thread>

#include "minimpi/runtime.hpp"
#include "minimpi/window.hpp"

namespace minimpi::bench {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void check_positive(const char* what, std::int64_t v) {
  if (v < 1) fail(Errc::kArg, std::string(what) + " must be >= 1");
}

/// Message word: high half is the sequence number, low half its checksum.
std::uint64_t stamp(std::uint32_t seq) { return (static_cast<std::uint64_t>(seq) << 32) | (seq * 2654435761u); }
bool stamp_ok(std::uint64_t w) {
  const auto seq = static_cast<std::uint32_t>(w >> 32);
  return static_cast<std::uint32_t>(w) == seq * 2654435761u;
}

}  // namespace

Summary summarize(std::vector<double> samples) {
  Summary s;
  s.samples = samples;
  if (samples.empty()) return s;
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  s.median = n % 2 == 1 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
  s.min = samples.front();
  s.max = samples.back();
  return s;
}

RateMode parse_rate_mode(const std::string& text) {
  if (text == "global") return RateMode::kGlobal;
  if (text == "pervci") return RateMode::kPerVci;
  if (text == "stream") return RateMode::kStream;
  fail(Errc::kArg, "unknown mode: " + text);
}

std::string to_string(RateMode mode) {
  switch (mode) {
    case RateMode::kGlobal: return "global";
    case RateMode::kPerVci: return "pervci";
    case RateMode::kStream: return "stream";
  }
  return "?";
}

Pattern parse_pattern(const std::string& text) {
  if (text == "latency") return Pattern::kLatency;
  if (text == "bandwidth") return Pattern::kBandwidth;
  fail(Errc::kArg, "unknown pattern: " + text);
}

Placement parse_placement(const std::string& text) {
  if (text == "threadcomm") return Placement::kThreadcomm;
  if (text == "instances") return Placement::kInstances;
  fail(Errc::kArg, "unknown placement: " + text);
}

std::string to_string(Pattern p) { return p == Pattern::kLatency ? "latency" : "bandwidth"; }
std::string to_string(Placement p) { return p == Placement::kThreadcomm ? "threadcomm" : "instances"; }

ProgressKind parse_progress(const std::string& text) {
  if (text == "none") return ProgressKind::kNone;
  if (text == "thread") return ProgressKind::kThread;
  fail(Errc::kArg, "unknown progress kind: " + text);
}

std::string to_string(ProgressKind p) { return p == ProgressKind::kNone ? "none" : "thread"; }

// ---------------------------------------------------------------------------
// Message rate

MsgrateResult run_msgrate(const MsgrateOptions& o) {
  check_positive("threads", o.threads);
  check_positive("window", o.window);
  check_positive("iters", o.iters);
  check_positive("reps", o.reps);

  const ConfigMap cfg = {{"transport", minimpi::to_string(o.transport)},
                         {"lock_mode", o.mode == RateMode::kGlobal ? "global" : "pervci"}};
  MsgrateResult result;
  result.options = o;
  std::vector<double> rates;
  std::atomic<bool> corrupt{false};
  std::atomic<std::uint64_t> stream_locks{0};

  run_world(2, cfg, [&](Instance& inst) {
    Communicator world = inst.world();
    std::vector<Stream> streams;
    std::vector<Communicator> comms;
    for (int t = 0; t < o.threads; ++t) {
      if (o.mode == RateMode::kStream) {
        streams.push_back(inst.stream_create());
        comms.push_back(world.stream_comm_create(streams.back()));
      } else {
        comms.push_back(world.dup());
      }
    }
    const bool sender = world.rank() == 0;
    const auto w = static_cast<std::size_t>(o.window);

    // The calling thread acts as thread 0 so exactly `threads` threads run
    // communication per process.
    std::barrier sync(o.threads);
    std::vector<double> elapsed(static_cast<std::size_t>(o.threads));
    auto body = [&](int t) {
      const Communicator& c = comms[static_cast<std::size_t>(t)];
      std::vector<std::uint64_t> bufs(w);
      std::vector<Request> reqs(w);
      std::uint32_t seq = 0;
      for (int rep = 0; rep < o.reps + 1; ++rep) {  // rep 0 warms up
        sync.arrive_and_wait();
        if (t == 0) world.barrier();
        sync.arrive_and_wait();
        const auto t0 = Clock::now();
        for (int it = 0; it < o.iters; ++it) {
          for (std::size_t i = 0; i < w; ++i) {
            if (sender) {
              bufs[i] = stamp(seq++);
              reqs[i] = c.isend(&bufs[i], 1, Datatype::int64(), 1, 0);
            } else {
              reqs[i] = c.irecv(&bufs[i], 1, Datatype::int64(), 0, 0);
            }
          }
          waitall(reqs);
          if (sender) {
            c.recv(nullptr, 0, Datatype::byte(), 1, 1);
          } else {
            for (std::uint64_t v : bufs)
              if (!stamp_ok(v)) corrupt = true;
            c.send(nullptr, 0, Datatype::byte(), 0, 1);
          }
        }
        if (rep > 0) elapsed[static_cast<std::size_t>(t)] = seconds_since(t0);
        sync.arrive_and_wait();
        if (t == 0 && rep > 0 && sender) {
          const double slowest = *std::max_element(elapsed.begin(), elapsed.end());
          const double msgs = static_cast<double>(o.threads) * o.iters * o.window;
          rates.push_back(msgs / slowest);
        }
      }
    };
    std::uint64_t locks_before = 0;
    for (auto& s : streams) locks_before += inst.guard_acquisitions(s.vci_id());
    std::vector<std::thread> threads;
    for (int t = 1; t < o.threads; ++t) threads.emplace_back(body, t);
    body(0);
    for (auto& th : threads) th.join();
    std::uint64_t locks_after = 0;
    for (auto& s : streams) locks_after += inst.guard_acquisitions(s.vci_id());
    stream_locks += locks_after - locks_before;

    world.barrier();
    for (auto& c : comms) c.free();
    for (auto& s : streams) inst.stream_free(s);
  });
  if (corrupt) fail(Errc::kInternal, "message rate payload checksum mismatch");
  result.rate = summarize(rates);
  result.stream_guard_acquisitions = stream_locks.load();
  return result;
}

// ---------------------------------------------------------------------------
// Latency and bandwidth

namespace {

/// One timed repetition between "me" (0 or 1) and the peer on `c`.
double p2p_rep(const Communicator& c, int me, const P2pOptions& o, std::int64_t size, std::vector<std::uint8_t>& buf,
               bool& corrupt) {
  const int peer = 1 - me;
  c.barrier();
  const auto t0 = Clock::now();
  if (o.pattern == Pattern::kLatency) {
    for (int i = 0; i < o.iters; ++i) {
      if (me == 0) {
        if (size > 0) buf[0] = static_cast<std::uint8_t>(i);
        c.send(buf.data(), size, Datatype::byte(), peer, 0);
        c.recv(buf.data(), size, Datatype::byte(), peer, 0);
        if (size > 0 && buf[0] != static_cast<std::uint8_t>(i + 1)) corrupt = true;
      } else {
        c.recv(buf.data(), size, Datatype::byte(), peer, 0);
        if (size > 0) buf[0] = static_cast<std::uint8_t>(buf[0] + 1);
        c.send(buf.data(), size, Datatype::byte(), peer, 0);
      }
    }
    return seconds_since(t0) * 1e6 / (2.0 * o.iters);
  }
  std::vector<Request> reqs(static_cast<std::size_t>(o.window));
  for (int i = 0; i < o.iters; ++i) {
    for (auto& r : reqs) {
      r = me == 0 ? c.isend(buf.data(), size, Datatype::byte(), peer, 0)
                  : c.irecv(buf.data(), size, Datatype::byte(), peer, 0);
    }
    waitall(reqs);
    if (me == 0) {
      c.recv(nullptr, 0, Datatype::byte(), peer, 1);
    } else {
      if (size > 0 && buf[static_cast<std::size_t>(size - 1)] != 0x5a) corrupt = true;
      c.send(nullptr, 0, Datatype::byte(), peer, 1);
    }
  }
  const double secs = seconds_since(t0);
  const double bytes = static_cast<double>(size) * o.iters * o.window;
  return bytes / (1024.0 * 1024.0) / secs;
}

}  // namespace

std::vector<P2pRow> run_p2p(const P2pOptions& o) {
  check_positive("iters", o.iters);
  check_positive("window", o.window);
  check_positive("reps", o.reps);
  if (o.sizes.empty()) fail(Errc::kArg, "no message sizes given");
  for (std::int64_t s : o.sizes)
    if (s < 0) fail(Errc::kArg, "negative message size");

  std::vector<P2pRow> rows;
  for (std::int64_t size : o.sizes) {
    P2pRow row;
    row.size = size;
    row.metric = o.pattern == Pattern::kLatency ? "latency_us" : "bandwidth_mib_s";
    std::vector<double> samples(static_cast<std::size_t>(o.reps));
    bool corrupt = false;
    std::mutex mu;

    auto pair_body = [&](const Communicator& c, int me) {
      std::vector<std::uint8_t> buf(static_cast<std::size_t>(std::max<std::int64_t>(size, 1)), 0x5a);
      bool bad = false;
      p2p_rep(c, me, o, size, buf, bad);  // warm-up
      for (int rep = 0; rep < o.reps; ++rep) {
        std::fill(buf.begin(), buf.end(), 0x5a);
        const double v = p2p_rep(c, me, o, size, buf, bad);
        if (me == 0) samples[static_cast<std::size_t>(rep)] = v;
      }
      std::lock_guard lk(mu);
      corrupt |= bad;
    };

    if (o.placement == Placement::kInstances) {
      run_world(2, {{"transport", "in-proc"}}, [&](Instance& inst) { pair_body(inst.world(), inst.rank()); });
    } else {
      Instance inst = Instance::init({{"transport", "in-proc"}, {"rank", "0"}}, make_inproc_fabric(1));
      Communicator tc = inst.world().threadcomm_init(2);
      auto thread_body = [&] {
        const int me = tc.threadcomm_start();
        pair_body(tc, me);
        tc.threadcomm_finish();
      };
      std::thread other(thread_body);
      thread_body();
      other.join();
      tc.free();
      inst.finalize();
    }
    if (corrupt) fail(Errc::kInternal, "payload check failed at size " + std::to_string(size));
    row.value = summarize(samples);
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Passive-target progress demo

ProgressDemoResult run_progress_demo(const ProgressDemoOptions& o) {
  if (o.busy_seconds < 0) fail(Errc::kArg, "busy-seconds must be >= 0");
  check_positive("gets", o.gets);
  ProgressDemoResult result;
  result.options = o;
  std::atomic<bool> ok{true};

  run_world(2, {{"transport", minimpi::to_string(o.transport)}}, [&](Instance& inst) {
    constexpr int kOrigin = 0;
    constexpr int kTarget = 1;
    Communicator world = inst.world();
    const auto n = static_cast<std::size_t>(o.gets);
    std::vector<std::int32_t> win_buf(n), buf(n, -1);
    for (std::size_t i = 0; i < n; ++i) win_buf[i] = static_cast<std::int32_t>(i);
    if (inst.rank() == kTarget && o.progress == ProgressKind::kThread) inst.start_progress_thread();

    Window win = Window::create(win_buf.data(), static_cast<std::int64_t>(n * sizeof(std::int32_t)), 4, world);
    // Both sides leave this point together, so the target's busy phase
    // overlaps the whole epoch.
    world.barrier();
    if (inst.rank() == kOrigin) {
      // Give the target a moment to leave the barrier, so that no get is
      // served by its last barrier poll. This settle time is not measured.
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
      const auto t0 = Clock::now();
      win.lock(LockType::kShared, kTarget);
      for (std::size_t i = 0; i < n; ++i)
        win.get(&buf[i], 1, Datatype::int32(), kTarget, static_cast<std::int64_t>(i), 1, Datatype::int32());
      win.unlock(kTarget);
      result.epoch_seconds = seconds_since(t0);
      for (std::size_t i = 0; i < n; ++i)
        if (buf[i] != static_cast<std::int32_t>(i)) ok = false;
    } else {
      // Busy computation that never enters the runtime.
      std::this_thread::sleep_for(std::chrono::duration<double>(o.busy_seconds));
    }
    world.barrier();
    if (inst.rank() == kTarget && o.progress == ProgressKind::kThread) inst.stop_progress_thread();
    win.free();
  });
  result.data_ok = ok.load();
  return result;
}

// ---------------------------------------------------------------------------
// CSV

void write_msgrate_header(std::ostream& os) {
  os << "mode,threads,window,iters,reps,median_msgs_per_s,min_msgs_per_s,max_msgs_per_s\n";
}

void write_msgrate_row(std::ostream& os, const MsgrateResult& r) {
  const auto& o = r.options;
  os << to_string(o.mode) << ',' << o.threads << ',' << o.window << ',' << o.iters << ',' << o.reps << ','
     << r.rate.median << ',' << r.rate.min << ',' << r.rate.max << '\n';
}

void write_p2p_header(std::ostream& os) { os << "placement,pattern,size,metric,median,min,max\n"; }

void write_p2p_rows(std::ostream& os, const P2pOptions& o, const std::vector<P2pRow>& rows) {
  for (const auto& r : rows)
    os << to_string(o.placement) << ',' << to_string(o.pattern) << ',' << r.size << ',' << r.metric << ','
       << r.value.median << ',' << r.value.min << ',' << r.value.max << '\n';
}

void write_progress_header(std::ostream& os) { os << "busy_seconds,progress,gets,epoch_seconds,data_ok\n"; }

void write_progress_row(std::ostream& os, const ProgressDemoResult& r) {
  os << r.options.busy_seconds << ',' << to_string(r.options.progress) << ',' << r.options.gets << ','
     << r.epoch_seconds << ',' << (r.data_ok ? 1 : 0) << '\n';
}

}  // namespace minimpi::bench
