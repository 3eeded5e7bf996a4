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

// A generalized request completed by its poll callback once an offloaded
// saxpy pipeline has drained. A single wait() finishes it, no helper thread.
#include <atomic>
#include <cstdio>
#include <vector>

#include "minimpi/offload.hpp"
#include "minimpi/runtime.hpp"

namespace {

constexpr int kN = 1 << 20;

struct GrequestState {
  std::atomic<bool> event{false};
  minimpi::Request request;
};

int query_fn(void*, minimpi::Status*) { return 0; }
int free_fn(void*) { return 0; }
int cancel_fn(void*, int) { return 0; }

int poll_fn(void* extra_state, minimpi::Status*) {
  auto* p = static_cast<GrequestState*>(extra_state);
  if (p->event.load()) minimpi::grequest_complete(p->request);
  return 0;
}

}  // namespace

int main() {
  return minimpi::run_participants([](minimpi::Instance& inst) {
    GrequestState state;
    state.request = inst.grequest_start(query_fn, free_fn, cancel_fn, poll_fn, nullptr, &state);

    const float a = 2.0f;
    std::vector<float> x(kN, 1.0f), y(kN, 2.0f), d_x(kN), d_y(kN);
    minimpi::DeviceQueue queue = minimpi::DeviceQueue::create();
    queue.enqueue_memcpy(d_x.data(), x.data(), kN * sizeof(float));
    queue.enqueue_memcpy(d_y.data(), y.data(), kN * sizeof(float));
    queue.enqueue_compute(
        [&] {
          for (int i = 0; i < kN; ++i) d_y[i] = a * d_x[i] + d_y[i];
        },
        "saxpy");
    queue.enqueue_memcpy(y.data(), d_y.data(), kN * sizeof(float));
    queue.enqueue_compute([&] { state.event = true; }, "event");

    minimpi::Request r = state.request;
    minimpi::wait(r);
    state.request.reset();
    int bad = 0;
    for (float v : y) bad += v != 4.0f;
    std::printf("rank %d: y[0] = %.1f, mismatches = %d\n", inst.rank(), y[0], bad);
    queue.destroy();
  });
}
