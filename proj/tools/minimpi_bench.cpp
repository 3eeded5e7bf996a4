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

// minimpi-bench: runs the benchmark scenarios and prints CSV.
// CSV goes to standard output, a human summary to standard error.
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bench.hpp"
#include "minimpi/runtime.hpp"

namespace b = minimpi::bench;

int main(int argc, char** argv) {
  CLI::App app{"minimpi benchmark harness"};
  app.require_subcommand(1);
  bool no_header = false;
  app.add_flag("--no-header", no_header, "Omit the CSV header row");

  auto* msgrate = app.add_subcommand("msgrate", "Multithreaded 8-byte message rate");
  std::vector<int> threads{1};
  std::vector<std::string> modes{"pervci"};
  b::MsgrateOptions mo;
  std::string rate_transport = "in-proc";
  msgrate->add_option("--threads", threads, "Threads per process (list)")->delimiter(',');
  msgrate->add_option("--mode", modes, "global, pervci or stream (list)")->delimiter(',');
  msgrate->add_option("--window", mo.window, "Messages in flight per window");
  msgrate->add_option("--iters", mo.iters, "Windows per repetition");
  msgrate->add_option("--reps", mo.reps, "Timed repetitions (median reported)");
  msgrate->add_option("--transport", rate_transport, "in-proc or socket");

  auto* p2p = app.add_subcommand("p2p", "Latency or bandwidth, threadcomm vs instances");
  std::string pattern = "latency";
  std::vector<std::string> placements{"threadcomm"};
  b::P2pOptions po;
  p2p->add_option("--pattern", pattern, "latency or bandwidth");
  p2p->add_option("--placement", placements, "threadcomm or instances (list)")->delimiter(',');
  p2p->add_option("--sizes", po.sizes, "Message sizes in bytes (list)")->delimiter(',');
  p2p->add_option("--iters", po.iters, "Iterations per repetition");
  p2p->add_option("--window", po.window, "Messages per bandwidth window");
  p2p->add_option("--reps", po.reps, "Timed repetitions (median reported)");

  auto* demo = app.add_subcommand("progress-demo", "Passive-target gets against a busy target");
  b::ProgressDemoOptions dopt;
  std::vector<std::string> progress{"none"};
  std::string demo_transport = "in-proc";
  demo->add_option("--busy-seconds", dopt.busy_seconds, "How long the target stays busy");
  demo->add_option("--progress", progress, "none or thread (list)")->delimiter(',');
  demo->add_option("--gets", dopt.gets, "Number of single-int gets in the epoch");
  demo->add_option("--transport", demo_transport, "in-proc or socket");

  CLI11_PARSE(app, argc, argv);

  try {
    if (msgrate->parsed()) {
      mo.transport = minimpi::parse_transport(rate_transport);
      if (!no_header) b::write_msgrate_header(std::cout);
      for (const auto& m : modes) {
        for (int t : threads) {
          mo.mode = b::parse_rate_mode(m);
          mo.threads = t;
          const auto r = b::run_msgrate(mo);
          b::write_msgrate_row(std::cout, r);
          std::cout.flush();
          std::fprintf(stderr, "msgrate mode=%s threads=%d: median %.0f msg/s (min %.0f, max %.0f)\n", m.c_str(), t,
                       r.rate.median, r.rate.min, r.rate.max);
        }
      }
    } else if (p2p->parsed()) {
      po.pattern = b::parse_pattern(pattern);
      if (!no_header) b::write_p2p_header(std::cout);
      for (const auto& pl : placements) {
        po.placement = b::parse_placement(pl);
        const auto rows = b::run_p2p(po);
        b::write_p2p_rows(std::cout, po, rows);
        std::cout.flush();
        for (const auto& r : rows)
          std::fprintf(stderr, "p2p %s %s size=%lld: median %.3f %s\n", pl.c_str(), pattern.c_str(),
                       static_cast<long long>(r.size), r.value.median, r.metric.c_str());
      }
    } else if (demo->parsed()) {
      dopt.transport = minimpi::parse_transport(demo_transport);
      if (!no_header) b::write_progress_header(std::cout);
      for (const auto& p : progress) {
        dopt.progress = b::parse_progress(p);
        const auto r = b::run_progress_demo(dopt);
        b::write_progress_row(std::cout, r);
        std::cout.flush();
        std::fprintf(stderr, "Completed all gets in %.3f seconds (progress=%s, busy=%.2f s)%s\n", r.epoch_seconds,
                     p.c_str(), dopt.busy_seconds, r.data_ok ? "" : " DATA MISMATCH");
      }
    }
  } catch (const minimpi::Error& e) {
    std::fprintf(stderr, "minimpi-bench: %s\n", e.what());
    return 2;
  }
  return 0;
}
