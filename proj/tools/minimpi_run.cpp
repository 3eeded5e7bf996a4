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

// minimpi-run: starts n participants of a program.
//
//   minimpi-run -n 4 --transport socket --lock-mode pervci --vci-pool 8 -- ./prog args
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "minimpi/runtime.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Start n minimpi participants of a program"};
  int n = 1;
  std::string transport = "in-proc";
  std::string lock_mode;
  int vci_pool = -1;
  std::vector<std::string> command;
  app.add_option("-n", n, "Number of participants")->check(CLI::PositiveNumber);
  app.add_option("--transport", transport, "in-proc or socket")->check(CLI::IsMember({"in-proc", "socket"}));
  app.add_option("--lock-mode", lock_mode, "global or pervci")->check(CLI::IsMember({"global", "pervci"}));
  app.add_option("--vci-pool", vci_pool, "Explicit VCI pool capacity")->check(CLI::NonNegativeNumber);
  app.add_option("command", command, "Program and its arguments")->required();
  app.allow_extras(false);
  app.prefix_command(false);
  CLI11_PARSE(app, argc, argv);

  minimpi::ConfigMap env;
  if (!lock_mode.empty()) env["MINIMPI_LOCK_MODE"] = lock_mode;
  if (vci_pool >= 0) env["MINIMPI_VCI_POOL"] = std::to_string(vci_pool);
  const std::vector<std::string> args(command.begin() + 1, command.end());
  try {
    const auto result = minimpi::launch(n, command.front(), args, minimpi::parse_transport(transport), env);
    return result.combined;
  } catch (const minimpi::Error& e) {
    std::fprintf(stderr, "minimpi-run: %s\n", e.what());
    return 127;
  }
}
