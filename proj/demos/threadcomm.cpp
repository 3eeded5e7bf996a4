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

// Each of NT threads per process becomes a rank of a thread communicator.
#include <cstdio>
#include <thread>
#include <vector>

#include "minimpi/runtime.hpp"

constexpr int kThreads = 4;

int main() {
  return minimpi::run_participants([](minimpi::Instance& inst) {
    minimpi::Communicator threadcomm = inst.world().threadcomm_init(kThreads);
    std::vector<std::thread> team;
    for (int t = 0; t < kThreads; ++t) {
      team.emplace_back([&] {
        threadcomm.threadcomm_start();
        const int size = threadcomm.size();
        const int rank = threadcomm.rank();
        std::printf("    Rank %d / %d\n", rank, size);
        std::fflush(stdout);
        threadcomm.threadcomm_finish();
      });
    }
    for (auto& t : team) t.join();
    threadcomm.free();
  });
}
