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

#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "minimpi/error.hpp"
#include "minimpi/types.hpp"

namespace minimpi {

namespace detail {
struct RequestImpl;
}

enum class RequestKind { kP2p, kGeneralized, kEnqueued };

// Generalized-request callbacks. A nonzero return from any callback is
// reported as Errc::kInternal on the request.
using GrequestQueryFn = int (*)(void* extra_state, Status* status);
using GrequestFreeFn = int (*)(void* extra_state);
using GrequestCancelFn = int (*)(void* extra_state, int complete);
using GrequestPollFn = int (*)(void* extra_state, Status* status);
using GrequestWaitFn = int (*)(int count, void** array_of_states, double timeout, Status* status);

/// Completion handle. A default-constructed or already-consumed request is
/// null; waiting on a null request returns an empty Status immediately.
class Request {
 public:
  Request() = default;
  explicit Request(std::shared_ptr<detail::RequestImpl> impl) : impl_(std::move(impl)) {}

  bool is_null() const noexcept { return impl_ == nullptr; }
  RequestKind kind() const;
  /// Non-blocking completion query that drives no progress.
  bool is_complete() const;
  const std::shared_ptr<detail::RequestImpl>& impl() const noexcept { return impl_; }
  void reset() noexcept { impl_.reset(); }

 private:
  std::shared_ptr<detail::RequestImpl> impl_;
};

/// Thrown by wait/test/waitall when a completed request carries an error.
/// The status (including partial counts after truncation) travels along.
class RequestError : public Error {
 public:
  RequestError(Errc code, const std::string& what, const Status& status)
      : Error(code, what), status_(status) {}
  const Status& status() const noexcept { return status_; }

 private:
  Status status_;
};

/// Drives progress until the request completes, then consumes it.
Status wait(Request& request);

/// One progress pass. Returns the status and consumes the request when it is
/// complete, otherwise std::nullopt.
std::optional<Status> test(Request& request);

/// Completes every request. Errors are thrown after all requests finished.
std::vector<Status> waitall(std::span<Request> requests);

/// Marks a generalized request complete. Errc::kArg if the request is not
/// generalized or was already completed.
void grequest_complete(const Request& request);

}  // namespace minimpi
