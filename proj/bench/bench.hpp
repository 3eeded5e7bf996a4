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

// Benchmark scenarios behind `minimpi-bench`. Each one returns summaries that
// the tool prints as CSV.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "minimpi/types.hpp"

namespace minimpi::bench {

/// Median and range over repetitions.
struct Summary {
  double median = 0;
  double min = 0;
  double max = 0;
  std::vector<double> samples;
};

Summary summarize(std::vector<double> samples);

enum class RateMode { kGlobal, kPerVci, kStream };
RateMode parse_rate_mode(const std::string& text);
std::string to_string(RateMode mode);

struct MsgrateOptions {
  int threads = 1;
  RateMode mode = RateMode::kPerVci;
  int window = 64;
  int iters = 1000;
  int reps = 5;
  TransportKind transport = TransportKind::kInProc;
};

struct MsgrateResult {
  MsgrateOptions options;
  /// Aggregate messages per second over all sending threads.
  Summary rate;
  /// Guard acquisitions on the stream VCIs during the timed loops (stream
  /// mode only).
  std::uint64_t stream_guard_acquisitions = 0;
};

/// Two participants with `threads` threads each. Thread t of rank 0 streams
/// 8-byte messages to thread t of rank 1 in windows of `window`; each window
/// is acknowledged by a zero-byte reply. Payloads carry a checksum.
MsgrateResult run_msgrate(const MsgrateOptions& options);

enum class Pattern { kLatency, kBandwidth };
enum class Placement { kThreadcomm, kInstances };
Pattern parse_pattern(const std::string& text);
Placement parse_placement(const std::string& text);
std::string to_string(Pattern p);
std::string to_string(Placement p);

struct P2pOptions {
  Pattern pattern = Pattern::kLatency;
  Placement placement = Placement::kThreadcomm;
  std::vector<std::int64_t> sizes{8};
  int iters = 200;
  int window = 16;
  int reps = 5;
};

struct P2pRow {
  std::int64_t size = 0;
  /// "latency_us" (half round trip) or "bandwidth_mib_s".
  std::string metric;
  Summary value;
};

/// Ping-pong latency or windowed bandwidth between two threads of one
/// process, placed on a thread communicator of size 2 or on two in-proc
/// instances.
std::vector<P2pRow> run_p2p(const P2pOptions& options);

enum class ProgressKind { kNone, kThread };
ProgressKind parse_progress(const std::string& text);
std::string to_string(ProgressKind p);

struct ProgressDemoOptions {
  double busy_seconds = 2.0;
  ProgressKind progress = ProgressKind::kNone;
  int gets = 1024;
  TransportKind transport = TransportKind::kInProc;
};

struct ProgressDemoResult {
  ProgressDemoOptions options;
  /// Whole access epoch as seen by the origin.
  double epoch_seconds = 0;
  bool data_ok = false;
};

/// Origin rank 0 runs a shared-lock epoch of single-int gets against rank 1
/// while rank 1 is busy (sleeping outside the runtime) for busy_seconds,
/// optionally with a progress thread on the null stream.
ProgressDemoResult run_progress_demo(const ProgressDemoOptions& options);

// CSV with fixed header rows.
void write_msgrate_header(std::ostream& os);
void write_msgrate_row(std::ostream& os, const MsgrateResult& r);
void write_p2p_header(std::ostream& os);
void write_p2p_rows(std::ostream& os, const P2pOptions& o, const std::vector<P2pRow>& rows);
void write_progress_header(std::ostream& os);
void write_progress_row(std::ostream& os, const ProgressDemoResult& r);

}  // namespace minimpi::bench
