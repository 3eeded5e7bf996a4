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

// Acceptance checks. Prints one PASS/FAIL line per criterion; with numeric
// arguments only those criteria run. The exit status is non-zero when any
// selected criterion fails.
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "bench.hpp"
#include "minimpi/offload.hpp"
#include "minimpi/runtime.hpp"
#include "support/stress.hpp"
#include "support/type_oracle.hpp"

namespace minimpi {
namespace {

using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;

const ConfigMap kInProc = {{"transport", "in-proc"}};

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <class Fn>
Errc code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::kSuccess;
}

// 1. Random datatypes against the brute-force flatten oracle.
Verdict datatype_oracle() {
  const auto t0 = Clock::now();
  testing::TypeSpecGenerator gen(20241019);
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    auto spec = gen.generate(4, 20000);
    Datatype t = testing::build_type(*spec).commit();
    const auto expected = testing::oracle_segments(*spec);
    std::int64_t bytes = 0;
    for (const auto& s : expected) bytes += s.length;
    const auto count = static_cast<std::int64_t>(expected.size());
    const bool ok = t.segment_count() == count && t.size() == bytes &&
                    type_iov(t, 0, count + 1) == expected &&
                    type_iov_len(t, -1) == IovLenResult{count, bytes};
    if (!ok) ++mismatches;
  }
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << "1000 types, " << mismatches << " mismatches, " << secs << " s";
  return {mismatches == 0 && secs < 60.0, d.str()};
}

// 2. The 100^3 sub-volume of a 1000^3 array of 16-byte values.
Verdict subarray_example() {
  const std::int64_t full[] = {1000, 1000, 1000};
  const std::int64_t sub[] = {100, 100, 100};
  const std::int64_t off[] = {300, 300, 300};
  Datatype t = Datatype::subarray(full, sub, off, Datatype::contiguous(16, Datatype::byte())).commit();
  const IovLenResult len = type_iov_len(t, 2147483647);
  const auto segs = type_iov(t, 0, 4);
  bool first_ok = segs.size() == 4;
  // Row-major: element (300, 300 + i, 300) sits at 16 * ((300 * 1000 + 300 + i) * 1000 + 300).
  for (std::size_t i = 0; first_ok && i < 4; ++i) {
    const std::int64_t want = 16 * ((300 * 1000 + 300 + static_cast<std::int64_t>(i)) * 1000 + 300);
    first_ok = segs[i].length == 1600 && segs[i].base_offset == want;
  }
  std::ostringstream d;
  d << "iov_len " << len.iov_len << ", bytes " << len.actual_iov_bytes << ", nodes " << t.node_count();
  return {len.iov_len == 10000 && len.actual_iov_bytes == 16'000'000 && first_ok && t.node_count() <= 8, d.str()};
}

// 3. Generalized requests.
struct Work {
  Request self;
  int complete_on = 0;
  std::atomic<int> polls{0};
};

int query_fn(void*, Status* st) {
  st->source = 0;
  st->tag = 0;
  return 0;
}
int free_fn(void*) { return 0; }
int cancel_fn(void*, int) { return 0; }
int poll_fn(void* s, Status*) {
  auto* w = static_cast<Work*>(s);
  if (++w->polls == w->complete_on) grequest_complete(w->self);
  return 0;
}

std::atomic<int> g_wait_calls{0};
std::atomic<int> g_wait_count{0};
int wait_fn(int count, void** states, double, Status*) {
  ++g_wait_calls;
  g_wait_count = count;
  for (int i = 0; i < count; ++i) grequest_complete(static_cast<Work*>(states[i])->self);
  return 0;
}

Verdict grequests() {
  bool a = true, b = false, c = false;
  double released_after = 0;
  run_world(1, kInProc, [&](Instance& inst) {
    for (int k = 1; k <= 10; ++k) {
      Work w;
      w.complete_on = k;
      w.self = inst.grequest_start(query_fn, free_fn, cancel_fn, poll_fn, nullptr, &w);
      Request r = w.self;
      const auto t0 = Clock::now();
      wait(r);
      a = a && w.polls.load() == k && seconds_since(t0) < 5.0;
      w.self.reset();
    }

    g_wait_calls = 0;
    std::vector<Work> works(4);
    std::vector<Request> reqs;
    for (auto& w : works) {
      w.self = inst.grequest_start(query_fn, free_fn, cancel_fn, nullptr, wait_fn, &w);
      reqs.push_back(w.self);
    }
    waitall(reqs);
    b = g_wait_calls.load() == 1 && g_wait_count.load() == 4;
    for (auto& w : works) w.self.reset();

    Work w;
    w.self = inst.grequest_start(query_fn, free_fn, cancel_fn, nullptr, nullptr, &w);
    std::atomic<bool> completed_externally{false};
    std::thread helper([&] {
      std::this_thread::sleep_for(300ms);
      completed_externally = true;
      grequest_complete(w.self);
    });
    Request r = w.self;
    const auto t0 = Clock::now();
    wait(r);
    released_after = seconds_since(t0);
    c = completed_externally.load() && released_after >= 0.25;
    helper.join();
    w.self.reset();
  });
  std::ostringstream d;
  d << "(a) poll_fn k=1..10 " << (a ? "ok" : "bad") << ", (b) wait_fn batched " << (b ? "ok" : "bad")
    << ", (c) poll-less released after " << released_after << " s";
  return {a && b && c, d.str()};
}

// 4. Ordering and integrity stress over every transport and regime.
Verdict stress() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::ostringstream d;
  std::int64_t total = 0;
  for (TransportKind tk : {TransportKind::kInProc, TransportKind::kSocket}) {
    for (stress::Regime rg : {stress::Regime::kGlobal, stress::Regime::kPerVci, stress::Regime::kStream}) {
      const stress::Result r = stress::run(tk, rg);
      const bool good = r.messages == 100000 && r.reorderings == 0 && r.oracle_mismatches == 0 &&
                        r.checksum_mismatches == 0 && r.seq_violations == 0;
      ok = ok && good;
      total += r.messages;
      if (!good)
        d << to_string(tk) << "/" << stress::regime_name(rg) << " failed (msgs " << r.messages << ", reorder "
          << r.reorderings << ", oracle " << r.oracle_mismatches << ", checksum " << r.checksum_mismatches
          << ", seq " << r.seq_violations << "); ";
    }
  }
  const double secs = seconds_since(t0);
  d << total << " messages in 6 configurations, " << secs << " s";
  return {ok && secs < 300.0, d.str()};
}

// 5. Thread communicator over 2 processes x 4 threads, activated 100 times.
Verdict threadcomm() {
  constexpr int kCycles = 100;
  std::mutex mu;
  bool ok = true;
  int cycles = 0;
  run_world(2, kInProc, [&](Instance& inst) {
    Communicator tc = inst.world().threadcomm_init(4);
    for (int cycle = 0; cycle < kCycles; ++cycle) {
      std::multiset<int> ranks;
      bool cycle_ok = true;
      std::vector<std::thread> team;
      for (int t = 0; t < 4; ++t) {
        team.emplace_back([&] {
          const int r = tc.threadcomm_start();
          std::int64_t mine = r, sum = 0;
          tc.allreduce(&mine, &sum, 1, ReduceType::kInt64);
          const int size = tc.size();
          tc.threadcomm_finish();
          std::lock_guard lk(mu);
          ranks.insert(r);
          cycle_ok = cycle_ok && size == 8 && sum == 28;
        });
      }
      for (auto& t : team) t.join();
      // This process owns ranks 0..3 or 4..7.
      const int base = inst.rank() * 4;
      cycle_ok = cycle_ok && ranks == std::multiset<int>{base, base + 1, base + 2, base + 3} && !tc.threadcomm_active();
      std::lock_guard lk(mu);
      ok = ok && cycle_ok;
      if (inst.rank() == 0 && cycle_ok) ++cycles;
    }
    tc.free();
  });
  std::ostringstream d;
  d << "size 8, ranks 0..7, allreduce 28 in " << cycles << "/" << kCycles << " activation cycles";
  return {ok && cycles == kCycles, d.str()};
}

// 6. Message rate scaling. Requires a machine with at least 8 cores.
Verdict message_rate() {
  auto rate = [](bench::RateMode mode, int threads) {
    bench::MsgrateOptions o;
    o.mode = mode;
    o.threads = threads;
    o.iters = 400;
    o.reps = 5;
    return bench::run_msgrate(o);
  };
  const auto g1 = rate(bench::RateMode::kGlobal, 1);
  const auto g4 = rate(bench::RateMode::kGlobal, 4);
  const auto p1 = rate(bench::RateMode::kPerVci, 1);
  const auto p4 = rate(bench::RateMode::kPerVci, 4);
  const auto s4 = rate(bench::RateMode::kStream, 4);
  const unsigned cores = std::thread::hardware_concurrency();
  const double stream_vs_pervci = s4.rate.median / p4.rate.median;
  const double pervci_scaling = p4.rate.median / p1.rate.median;
  const double global_scaling = g4.rate.median / g1.rate.median;
  const bool enough_cores = cores >= 8;
  const bool ok = enough_cores && stream_vs_pervci >= 1.05 && pervci_scaling >= 2.0 && global_scaling <= 1.5 &&
                  s4.stream_guard_acquisitions == 0;
  std::ostringstream d;
  d << "cores " << cores << (enough_cores ? "" : " (needs >= 8)") << ", stream/pervci at T=4 " << stream_vs_pervci
    << ", pervci T4/T1 " << pervci_scaling << ", global T4/T1 " << global_scaling << ", stream-path locks "
    << s4.stream_guard_acquisitions;
  return {ok, d.str()};
}

// 7. Thread communicator versus separate instances in one process.
Verdict threadcomm_vs_instances() {
  auto run = [](bench::Pattern pattern, bench::Placement placement, std::int64_t size) {
    bench::P2pOptions o;
    o.pattern = pattern;
    o.placement = placement;
    o.sizes = {size};
    o.iters = pattern == bench::Pattern::kLatency ? 2000 : 50;
    o.window = 16;
    o.reps = 7;
    return bench::run_p2p(o).at(0).value;
  };
  const auto lat_tc = run(bench::Pattern::kLatency, bench::Placement::kThreadcomm, 8);
  const auto lat_in = run(bench::Pattern::kLatency, bench::Placement::kInstances, 8);
  const auto bw_tc = run(bench::Pattern::kBandwidth, bench::Placement::kThreadcomm, 1 << 20);
  const auto bw_in = run(bench::Pattern::kBandwidth, bench::Placement::kInstances, 1 << 20);
  const bool reps_ok = lat_tc.samples.size() >= 5 && bw_tc.samples.size() >= 5;
  std::ostringstream d;
  d << "8 B latency " << lat_tc.median << " us vs " << lat_in.median << " us, 1 MiB bandwidth " << bw_tc.median
    << " vs " << bw_in.median << " MiB/s, " << lat_tc.samples.size() << " reps";
  return {reps_ok && lat_tc.median <= lat_in.median && bw_tc.median >= bw_in.median, d.str()};
}

// 8. Progress: passive-target demo and a stalled rendezvous.
Verdict progress() {
  bench::ProgressDemoOptions o;
  o.busy_seconds = 2.0;
  o.progress = bench::ProgressKind::kNone;
  const auto none = bench::run_progress_demo(o);
  o.progress = bench::ProgressKind::kThread;
  const auto with_thread = bench::run_progress_demo(o);

  bool stalled = false, completed = false;
  run_world(2, kInProc, [&](Instance& inst) {
    Stream s = inst.stream_create();
    Communicator sc = inst.world().stream_comm_create(s);
    std::vector<std::uint8_t> buf(256 * 1024, 7);
    if (sc.rank() == 0) {
      Request r = sc.isend(buf.data(), static_cast<std::int64_t>(buf.size()), Datatype::byte(), 1, 0);
      const auto t0 = Clock::now();
      bool early = false;
      while (!early && Clock::now() - t0 < 1s) {
        early = test(r).has_value();
        std::this_thread::sleep_for(1ms);
      }
      stalled = !early;
      int go = 1;
      sc.send(&go, 0, Datatype::int32(), 1, 9);
      wait(r);
    } else {
      std::vector<std::uint8_t> in(buf.size());
      Request r = sc.irecv(in.data(), static_cast<std::int64_t>(in.size()), Datatype::byte(), 0, 0);
      std::this_thread::sleep_for(1200ms);
      int go = 0;
      sc.recv(&go, 0, Datatype::int32(), 0, 9);
      while (!r.is_complete()) inst.stream_progress(s);
      wait(r);
      completed = in == buf;
    }
    sc.free();
    inst.stream_free(s);
  });
  std::ostringstream d;
  d << "no progress " << none.epoch_seconds << " s, progress thread " << with_thread.epoch_seconds
    << " s, rendezvous " << (stalled ? "stalled" : "did not stall") << " then "
    << (completed ? "completed" : "did not complete");
  return {none.epoch_seconds >= 1.8 && with_thread.epoch_seconds <= 0.2 && none.data_ok && with_thread.data_ok &&
              stalled && completed,
          d.str()};
}

// 9. Enqueued saxpy and overlap of unrelated queue work with a pending receive.
Verdict enqueue() {
  constexpr int n = 1 << 16;
  std::vector<float> result;
  run_world(2, kInProc, [&](Instance& inst) {
    DeviceQueue queue = DeviceQueue::create();
    const Info info = queue.stream_info();
    Stream stream = inst.stream_create(&info);
    Communicator sc = inst.world().stream_comm_create(stream);
    if (sc.rank() == 0) {
      std::vector<float> x(n, 1.0f);
      sc.send_enqueue(x.data(), n, Datatype::float32(), 1, 0);
      queue.destroy();
    } else {
      std::vector<float> y(n, 2.0f), d_x(n), d_y(n);
      queue.enqueue_memcpy(d_y.data(), y.data(), n * sizeof(float));
      sc.recv_enqueue(d_x.data(), n, Datatype::float32(), 0, 0);
      queue.enqueue_compute([&] {
        for (std::size_t i = 0; i < d_y.size(); ++i) d_y[i] = 2.0f * d_x[i] + d_y[i];
      });
      queue.enqueue_memcpy(y.data(), d_y.data(), n * sizeof(float));
      // Destroying the queue drains it; no synchronize call is made.
      queue.destroy();
      result = y;
    }
    sc.free();
    inst.stream_free(stream);
  });
  const bool saxpy_ok =
      result.size() == static_cast<std::size_t>(n) &&
      std::all_of(result.begin(), result.end(), [](float v) { return v == 4.0f; });

  std::vector<TaskTrace> trace;
  run_world(2, kInProc, [&](Instance& inst) {
    DeviceQueue queue = DeviceQueue::create();
    const Info info = queue.stream_info();
    Stream stream = inst.stream_create(&info);
    Communicator sc = inst.world().stream_comm_create(stream);
    int token = 0;
    if (sc.rank() == 0) {
      // Hold the payload back until the receiver has queued its unrelated work.
      sc.recv_enqueue(&token, 0, Datatype::int32(), 1, 99);
      int v = 17;
      sc.send_enqueue(&v, 1, Datatype::int32(), 1, 0);
      queue.destroy();
    } else {
      int v = 0;
      Request r = sc.irecv_enqueue(&v, 1, Datatype::int32(), 0, 0);
      queue.enqueue_compute([] { std::this_thread::sleep_for(20ms); }, "unrelated");
      sc.send_enqueue(&token, 0, Datatype::int32(), 0, 99);
      wait_enqueue(r);
      // This run only inspects the trace, so it may synchronize.
      queue.synchronize();
      trace = queue.trace();
      queue.destroy();
    }
    sc.free();
    inst.stream_free(stream);
  });
  const TaskTrace* start = nullptr;
  const TaskTrace* unrelated = nullptr;
  const TaskTrace* finish = nullptr;
  for (const auto& t : trace) {
    if (t.kind == TaskKind::kCommStart && start == nullptr) start = &t;
    if (t.label == "unrelated") unrelated = &t;
    if (t.kind == TaskKind::kCommWait) finish = &t;
  }
  const bool overlap = start && unrelated && finish && start->end_ns <= unrelated->start_ns &&
                       unrelated->end_ns <= finish->end_ns;
  std::ostringstream d;
  d << "saxpy y " << (saxpy_ok ? "= 4.0 everywhere" : "wrong") << ", unrelated task "
    << (overlap ? "inside" : "outside") << " the irecv_enqueue/wait_enqueue window";
  return {saxpy_ok && overlap, d.str()};
}

// 10. Stream pool limits and unsupported handle types.
Verdict stream_limits() {
  constexpr int kCapacity = 8;
  Instance inst = Instance::init({{"transport", "in-proc"}, {"rank", "0"}, {"vci_pool", std::to_string(kCapacity)}},
                                 make_inproc_fabric(1));
  std::vector<Stream> streams;
  for (int i = 0; i < kCapacity; ++i) streams.push_back(inst.stream_create());
  const Errc over = code_of([&] { inst.stream_create(); });
  for (auto& s : streams) inst.stream_free(s);
  int cycles = 0;
  for (int i = 0; i < 10 * kCapacity; ++i) {
    if (code_of([&] {
          Stream s = inst.stream_create();
          inst.stream_free(s);
        }) == Errc::kSuccess)
      ++cycles;
  }
  Info cuda;
  cuda.set("type", "cudaStream_t");
  std::uint64_t handle = 1;
  cuda.set_hex("value", &handle, sizeof handle);
  const Errc unsupported = code_of([&] { inst.stream_create(&cuda); });
  inst.finalize();
  std::ostringstream d;
  d << "capacity+1 -> " << errc_name(over) << ", " << cycles << "/" << 10 * kCapacity << " cycles, cudaStream_t -> "
    << errc_name(unsupported);
  return {over == Errc::kExhausted && cycles == 10 * kCapacity && unsupported == Errc::kUnsupported, d.str()};
}

const std::vector<std::pair<const char*, std::function<Verdict()>>> kCriteria = {
    {"datatype oracle", datatype_oracle},
    {"subarray iov", subarray_example},
    {"generalized requests", grequests},
    {"ordering stress", stress},
    {"thread communicator", threadcomm},
    {"message rate scaling", message_rate},
    {"threadcomm vs instances", threadcomm_vs_instances},
    {"progress", progress},
    {"enqueue", enqueue},
    {"stream limits", stream_limits},
};

}  // namespace
}  // namespace minimpi

int main(int argc, char** argv) {
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  if (selected.empty())
    for (int i = 1; i <= static_cast<int>(minimpi::kCriteria.size()); ++i) selected.push_back(i);
  int failures = 0;
  for (int n : selected) {
    if (n < 1 || n > static_cast<int>(minimpi::kCriteria.size())) {
      std::fprintf(stderr, "unknown criterion %d\n", n);
      return 2;
    }
    const auto& [name, fn] = minimpi::kCriteria[static_cast<std::size_t>(n - 1)];
    minimpi::Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d (%s): %s: %s\n", n, name, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
    if (!v.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
