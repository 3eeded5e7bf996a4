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

// Thread pairs of two processes communicate over one stream communicator
// each, so the pairs are semantically concurrent.
#include <cstdio>
#include <thread>
#include <vector>

#include "minimpi/runtime.hpp"

constexpr int kThreads = 4;

int main() {
  return minimpi::run_participants([](minimpi::Instance& inst) {
    const int rank = inst.rank();
    std::vector<minimpi::Stream> streams;
    std::vector<minimpi::Communicator> comms;
    for (int i = 0; i < kThreads; ++i) {
      streams.push_back(inst.stream_create());
      comms.push_back(inst.world().stream_comm_create(streams.back()));
    }

    std::vector<std::thread> threads;
    for (int id = 0; id < kThreads; ++id) {
      threads.emplace_back([&, id] {
        char buf[100] = {};
        const int tag = 0;
        if (rank == 0) {
          std::snprintf(buf, sizeof buf, "hello from thread %d", id);
          comms[id].send(buf, 100, minimpi::Datatype::byte(), 1, tag);
        } else if (rank == 1) {
          comms[id].recv(buf, 100, minimpi::Datatype::byte(), 0, tag);
          std::printf("thread %d received \"%s\"\n", id, buf);
        }
      });
    }
    for (auto& t : threads) t.join();
    for (int i = 0; i < kThreads; ++i) {
      comms[i].free();
      inst.stream_free(streams[i]);
    }
  });
}
