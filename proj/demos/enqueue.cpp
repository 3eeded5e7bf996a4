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

// Rank 0 sends x to rank 1, which computes a * x + y. Every step is a task on
// a device queue; the host never synchronizes with the queue before it is
// destroyed.
#include <cstdio>
#include <vector>

#include "minimpi/offload.hpp"
#include "minimpi/runtime.hpp"

namespace {

constexpr int kN = 1 << 20;
constexpr float kA = 2.0f;
constexpr float kX = 1.0f;
constexpr float kY = 2.0f;

void saxpy(int n, float a, const float* x, float* y) {
  for (int i = 0; i < n; ++i) y[i] = a * x[i] + y[i];
}

}  // namespace

int main() {
  return minimpi::run_participants([](minimpi::Instance& inst) {
    minimpi::DeviceQueue queue = minimpi::DeviceQueue::create();
    const minimpi::Info info = queue.stream_info();
    minimpi::Stream stream = inst.stream_create(&info);
    minimpi::Communicator stream_comm = inst.world().stream_comm_create(stream);
    const int rank = stream_comm.rank();

    std::vector<float> x, y, d_x, d_y;
    if (rank == 0) {
      x.assign(kN, kX);
      stream_comm.send_enqueue(x.data(), kN, minimpi::Datatype::float32(), 1, 0);
    } else if (rank == 1) {
      y.assign(kN, kY);
      d_x.resize(kN);
      d_y.resize(kN);
      queue.enqueue_memcpy(d_y.data(), y.data(), kN * sizeof(float));
      stream_comm.recv_enqueue(d_x.data(), kN, minimpi::Datatype::float32(), 0, 0);
      queue.enqueue_compute([&] { saxpy(kN, kA, d_x.data(), d_y.data()); }, "saxpy");
      queue.enqueue_memcpy(y.data(), d_y.data(), kN * sizeof(float));
    }
    // Destroying the queue drains it, like destroying a device stream.
    queue.destroy();
    if (rank == 1) {
      int bad = 0;
      for (float v : y) bad += v != kA * kX + kY;
      std::printf("rank 1: y[0] = %.1f, mismatches = %d\n", y[0], bad);
    }
    stream_comm.free();
    inst.stream_free(stream);
  });
}
