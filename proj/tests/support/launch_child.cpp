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

// Helper program for launcher tests. Each participant prints one line
// "rank R of N via T"; `--exit-rank R --code C` makes rank R exit with C.
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <mutex>

#include "minimpi/runtime.hpp"

int main(int argc, char** argv) {
  int exit_rank = -1;
  int exit_code = 0;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::strcmp(argv[i], "--exit-rank") == 0) exit_rank = std::atoi(argv[i + 1]);
    if (std::strcmp(argv[i], "--code") == 0) exit_code = std::atoi(argv[i + 1]);
  }
  std::mutex mu;
  int rc = 0;
  const int run = minimpi::run_participants([&](minimpi::Instance& inst) {
    std::int64_t one = 1, total = 0;
    inst.world().allreduce(&one, &total, 1, minimpi::ReduceType::kInt64);
    std::lock_guard lk(mu);
    std::printf("rank %d of %d via %s sum %lld\n", inst.rank(), inst.size(),
                minimpi::to_string(inst.transport()).c_str(), static_cast<long long>(total));
    std::fflush(stdout);
    if (inst.rank() == exit_rank) rc = exit_code;
  });
  return run != 0 ? run : rc;
}
