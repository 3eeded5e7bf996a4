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

// Passive-target gets against a busy target. With MINIMPI_DEMO_PROGRESS=1
// the target runs a background progress thread that polls the null stream
// only while it is needed, and the gets complete right away.
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <thread>

#include "minimpi/runtime.hpp"
#include "minimpi/window.hpp"

namespace {

constexpr int kMaxData = 1024;

enum { kProgressIdle, kProgressBusy, kProgressExit };

}  // namespace

int main() {
  const char* env = std::getenv("MINIMPI_DEMO_PROGRESS");
  const bool with_progress = env != nullptr && std::strcmp(env, "1") == 0;
  const char* busy_env = std::getenv("MINIMPI_DEMO_BUSY_SECONDS");
  const double busy = busy_env != nullptr ? std::atof(busy_env) : 2.0;

  return minimpi::run_participants([&](minimpi::Instance& inst) {
    int buf[kMaxData] = {};
    int win_buf[kMaxData];
    for (int i = 0; i < kMaxData; ++i) win_buf[i] = i;

    const int origin_rank = 0;
    const int target_rank = 1;
    std::atomic<int> need_progress{kProgressIdle};
    std::thread thread;
    if (inst.rank() == target_rank && with_progress) {
      thread = std::thread([&] {
        for (;;) {
          const int state = need_progress.load();
          if (state == kProgressIdle) {
            std::this_thread::sleep_for(std::chrono::milliseconds(1));
          } else if (state == kProgressBusy) {
            inst.stream_progress();
          } else {
            break;
          }
        }
      });
    }

    minimpi::Communicator world = inst.world();
    minimpi::Window win = minimpi::Window::create(win_buf, sizeof win_buf, 4, world);
    if (inst.rank() == origin_rank) {
      // Let the target leave the creation barrier and start its busy phase.
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
      const auto t0 = std::chrono::steady_clock::now();
      win.lock(minimpi::LockType::kShared, target_rank);
      for (int i = 0; i < kMaxData; ++i)
        win.get(buf + i, 1, minimpi::Datatype::int32(), target_rank, i, 1, minimpi::Datatype::int32());
      win.unlock(target_rank);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::printf("Completed all gets in %.3f seconds\n", secs);
    } else if (inst.rank() == target_rank) {
      need_progress = kProgressBusy;
      // Busy computation outside the runtime.
      std::this_thread::sleep_for(std::chrono::duration<double>(busy));
    }

    world.barrier();
    if (inst.rank() == target_rank) need_progress = kProgressExit;
    win.free();
    if (thread.joinable()) thread.join();
  });
}
