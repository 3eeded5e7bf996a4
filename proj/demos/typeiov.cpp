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

// Queries the segments of a 100^3 sub-volume inside a 1000^3 array of
// 16-byte values.
#include <cstdio>

#include "minimpi/datatype.hpp"

int main() {
  using minimpi::Datatype;
  const Datatype value_type = Datatype::contiguous(16, Datatype::byte());
  const std::int64_t full_sizes[3] = {1000, 1000, 1000};
  const std::int64_t sub_sizes[3] = {100, 100, 100};
  const std::int64_t sub_offsets[3] = {300, 300, 300};
  Datatype volume_type = Datatype::subarray(full_sizes, sub_sizes, sub_offsets, value_type);
  volume_type.commit();

  const auto len = minimpi::type_iov_len(volume_type, 0x7fffffff);
  std::printf("iov_len = %lld, iov_bytes = %lld\n", static_cast<long long>(len.iov_len),
              static_cast<long long>(len.actual_iov_bytes));

  minimpi::IovSegment iov[4];
  const auto actual = minimpi::type_iov(volume_type, 0, iov);
  for (std::int64_t i = 0; i < actual; ++i)
    std::printf("iov[%lld] = {%lld, %lld}\n", static_cast<long long>(i), static_cast<long long>(iov[i].base_offset),
                static_cast<long long>(iov[i].length));
  return 0;
}
