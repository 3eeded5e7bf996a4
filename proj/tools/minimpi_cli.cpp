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

// minimpi: debugging subcommands.
//
//   minimpi type-dump [--segments K] [--max-iov-bytes B] EXPR
#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "minimpi/datatype.hpp"
#include "minimpi/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{"minimpi debugging tools"};
  app.require_subcommand(1);

  auto* dump = app.add_subcommand("type-dump", "Print iov_len and the first segments of a datatype expression");
  std::string expr;
  long long segments = 4;
  long long max_iov_bytes = -1;
  dump->add_option("expr", expr,
                   "Constructor expression, e.g. "
                   "subarray(3,[1000,1000,1000],[100,100,100],[300,300,300],contiguous(16,byte))")
      ->required();
  dump->add_option("-k,--segments", segments, "Number of leading segments to print")->check(CLI::NonNegativeNumber);
  dump->add_option("--max-iov-bytes", max_iov_bytes, "Byte budget for iov_len (-1 for the whole type)");
  CLI11_PARSE(app, argc, argv);

  try {
    const minimpi::Datatype t = minimpi::parse_type_expression(expr);
    const auto len = minimpi::type_iov_len(t, max_iov_bytes);
    std::printf("type = %s\n", t.describe().c_str());
    std::printf("size = %lld, extent = %lld, nodes = %lld\n", static_cast<long long>(t.size()),
                static_cast<long long>(t.extent()), static_cast<long long>(t.node_count()));
    std::printf("iov_len = %lld, iov_bytes = %lld\n", static_cast<long long>(len.iov_len),
                static_cast<long long>(len.actual_iov_bytes));
    const auto segs = minimpi::type_iov(t, 0, segments);
    for (std::size_t i = 0; i < segs.size(); ++i)
      std::printf("iov[%zu] = {offset %lld, len %lld}\n", i, static_cast<long long>(segs[i].base_offset),
                  static_cast<long long>(segs[i].length));
  } catch (const minimpi::Error& e) {
    std::fprintf(stderr, "minimpi: %s\n", e.what());
    return 2;
  }
  return 0;
}
