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

#include "minimpi/error.hpp"

namespace minimpi {

inline constexpr int kAnySource = -1;
inline constexpr int kAnyTag = -1;
/// Receive-side wildcard for the sender's stream index.
inline constexpr int kAnyStream = -1;
/// Status::source_stream_idx on communicators without attached streams.
inline constexpr int kNoStream = -1;

enum class LockMode { kGlobal, kPerVci };
enum class TransportKind { kInProc, kSocket };

struct Status {
  int source = kAnySource;
  int tag = kAnyTag;
  Errc error = Errc::kSuccess;
  /// Received elements of the receive datatype.
  std::int64_t count = 0;
  std::int64_t bytes = 0;
  int source_stream_idx = kNoStream;
};

}  // namespace minimpi
