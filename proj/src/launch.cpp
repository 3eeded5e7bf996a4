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

#include <cerrno>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include "detail/core.hpp"

namespace minimpi {

namespace {

struct Child {
  pid_t pid = -1;
  int status_fd = -1;
};

/// Forks `program` with `env` merged over the current environment. Empty
/// values unset a variable. Exec failures come back through a close-on-exec
/// pipe.
Child spawn(const std::string& program, const std::vector<std::string>& args, const ConfigMap& env) {
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) fail(Errc::kSpawn, "pipe2 failed: " + std::string(std::strerror(errno)));

  std::vector<std::string> argv_store;
  argv_store.push_back(program);
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  argv.push_back(nullptr);

  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(fds[0]);
    ::close(fds[1]);
    fail(Errc::kSpawn, "fork failed: " + std::string(std::strerror(errno)));
  }
  if (pid == 0) {
    ::close(fds[0]);
    for (const auto& [k, v] : env) {
      if (v.empty()) {
        ::unsetenv(k.c_str());
      } else {
        ::setenv(k.c_str(), v.c_str(), 1);
      }
    }
    ::execvp(argv[0], argv.data());
    const int err = errno;
    [[maybe_unused]] ssize_t n = ::write(fds[1], &err, sizeof err);
    ::_exit(127);
  }
  ::close(fds[1]);
  return {pid, fds[0]};
}

/// Returns the exec errno, or 0 when exec succeeded.
int exec_error(Child& c) {
  int err = 0;
  ssize_t n;
  do {
    n = ::read(c.status_fd, &err, sizeof err);
  } while (n < 0 && errno == EINTR);
  ::close(c.status_fd);
  c.status_fd = -1;
  return n == static_cast<ssize_t>(sizeof err) ? err : 0;
}

int reap(pid_t pid) {
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0) {
    if (errno != EINTR) return 1;
  }
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  if (WIFSIGNALED(status)) return 128 + WTERMSIG(status);
  return 1;
}

}  // namespace

LaunchResult launch(int n, const std::string& program, const std::vector<std::string>& args,
                    TransportKind transport, const ConfigMap& extra_env) {
  if (n < 1) fail(Errc::kArg, "launch needs n >= 1");
  if (program.empty()) fail(Errc::kArg, "empty program");

  std::vector<ConfigMap> envs;
  if (transport == TransportKind::kInProc) {
    // One process hosts every participant on threads.
    ConfigMap env = extra_env;
    env["MINIMPI_SIZE"] = std::to_string(n);
    env["MINIMPI_TRANSPORT"] = "in-proc";
    env["MINIMPI_RANK"] = "";
    envs.push_back(env);
  } else {
    const std::string root = "127.0.0.1:" + std::to_string(detail::free_loopback_port());
    for (int r = 0; r < n; ++r) {
      ConfigMap env = extra_env;
      env["MINIMPI_RANK"] = std::to_string(r);
      env["MINIMPI_SIZE"] = std::to_string(n);
      env["MINIMPI_ROOT_ADDR"] = root;
      env["MINIMPI_TRANSPORT"] = "socket";
      envs.push_back(env);
    }
  }

  std::vector<Child> children;
  std::string spawn_error;
  for (const ConfigMap& env : envs) {
    Child c = spawn(program, args, env);
    children.push_back(c);
    if (const int err = exec_error(children.back()); err != 0) {
      spawn_error = "cannot execute " + program + ": " + std::strerror(err);
      break;
    }
  }
  if (!spawn_error.empty()) {
    for (Child& c : children) {
      ::kill(c.pid, SIGTERM);
      reap(c.pid);
    }
    fail(Errc::kSpawn, spawn_error);
  }

  LaunchResult result;
  for (Child& c : children) {
    const int code = reap(c.pid);
    result.exit_codes.push_back(code);
    if (code != 0 && result.combined == 0) result.combined = code;
  }
  return result;
}

}  // namespace minimpi
