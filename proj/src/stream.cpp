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

#include <chrono>

#include "detail/core.hpp"
#include "minimpi/info.hpp"

namespace minimpi {

using detail::InstanceImpl;
using detail::StreamImpl;
using detail::Vci;
using detail::VciClass;

namespace detail {

std::shared_ptr<StreamImpl> stream_impl_checked(const Stream& s) {
  if (s.is_null()) fail(Errc::kArg, "the null stream is not allowed here");
  if (s.impl()->freed.load()) fail(Errc::kArg, "stream was freed");
  return s.impl();
}

}  // namespace detail

namespace {

std::atomic<std::int64_t> g_next_stream_id{1};

InstanceImpl& active_instance(const std::shared_ptr<InstanceImpl>& impl) {
  if (!impl) fail(Errc::kState, "instance is not initialized");
  impl->check_active();
  return *impl;
}

std::uint64_t parse_device_handle(const Info& info) {
  const auto value = info.get("value");
  if (!value) fail(Errc::kArg, "devstream info needs a \"value\" entry");
  const std::vector<std::byte> bytes = hex_decode(*value);
  if (bytes.size() != sizeof(std::uint64_t))
    fail(Errc::kArg, "devstream value must encode 8 bytes, got " + std::to_string(bytes.size()));
  std::uint64_t handle = 0;
  std::memcpy(&handle, bytes.data(), sizeof handle);
  return handle;
}

/// One shared VCI per device queue, reference counted by the streams on it.
Vci* acquire_device_vci(InstanceImpl& inst, detail::DeviceQueueImpl* queue) {
  std::lock_guard lk(inst.streams_mu);
  auto it = inst.device_vcis.find(queue);
  if (it != inst.device_vcis.end()) {
    ++it->second.second;
    return it->second.first;
  }
  Vci* v = inst.allocate_pool_vci(VciClass::kDevice);
  inst.device_vcis.emplace(queue, std::make_pair(v, 1));
  return v;
}

void release_device_vci(InstanceImpl& inst, detail::DeviceQueueImpl* queue) {
  std::lock_guard lk(inst.streams_mu);
  auto it = inst.device_vcis.find(queue);
  if (it == inst.device_vcis.end()) return;
  if (--it->second.second == 0) {
    inst.release_pool_vci(it->second.first);
    inst.device_vcis.erase(it);
  }
}

}  // namespace

StreamKind Stream::kind() const { return impl_ ? impl_->kind : StreamKind::kNull; }
std::int64_t Stream::id() const { return impl_ ? impl_->id : 0; }
int Stream::vci_id() const { return impl_ && impl_->vci ? impl_->vci->id : -1; }
bool Stream::live() const { return impl_ ? !impl_->freed.load() : true; }

Stream Instance::stream_create(const Info* info) {
  InstanceImpl& inst = active_instance(impl_);
  auto s = std::make_shared<StreamImpl>();
  s->inst = impl_;
  if (info == nullptr) {
    s->kind = StreamKind::kSerialContext;
    s->vci = inst.allocate_pool_vci(VciClass::kExplicit);
  } else {
    const auto type = info->get("type");
    if (!type) fail(Errc::kArg, "stream info needs a \"type\" entry");
    if (*type != "devstream") fail(Errc::kUnsupported, "unsupported stream type \"" + *type + "\"");
    const std::uint64_t handle = parse_device_handle(*info);
    auto queue = detail::find_device_queue(handle);
    if (!queue) fail(Errc::kArg, "no live device queue is registered for the given handle");
    s->kind = StreamKind::kDeviceQueue;
    s->device = queue;
    s->vci = acquire_device_vci(inst, queue.get());
  }
  s->id = g_next_stream_id.fetch_add(1);
  std::lock_guard lk(inst.streams_mu);
  inst.streams.push_back(s);
  return Stream(s);
}

void Instance::stream_free(Stream& stream) {
  InstanceImpl& inst = active_instance(impl_);
  auto s = detail::stream_impl_checked(stream);
  if (s->attached_comms.load() > 0) fail(Errc::kPending, "stream is still attached to a communicator");
  {
    std::lock_guard lk(inst.streams_mu);
    if (inst.progress_threads.count(s->id) != 0) fail(Errc::kState, "a progress thread runs on this stream");
    std::erase_if(inst.streams, [&](const std::weak_ptr<StreamImpl>& w) {
      auto p = w.lock();
      return !p || p == s;
    });
  }
  s->freed.store(true);
  if (s->kind == StreamKind::kSerialContext) {
    inst.release_pool_vci(s->vci);
  } else {
    release_device_vci(inst, s->device.get());
  }
  s->vci = nullptr;
}

void Instance::stream_progress(const Stream& stream) {
  InstanceImpl& inst = active_instance(impl_);
  if (stream.is_null()) {
    inst.progress_null();
    return;
  }
  inst.progress_stream(*detail::stream_impl_checked(stream));
}

void Instance::start_progress_thread(const Stream& stream) {
  InstanceImpl& inst = active_instance(impl_);
  std::shared_ptr<StreamImpl> s;
  if (!stream.is_null()) s = detail::stream_impl_checked(stream);
  const std::int64_t key = s ? s->id : 0;
  std::lock_guard lk(inst.streams_mu);
  if (inst.progress_threads.count(key) != 0) fail(Errc::kState, "a progress thread already runs on this stream");
  auto pt = std::make_unique<detail::ProgressThread>();
  const auto pause = std::chrono::microseconds(inst.cfg.progress_yield_us);
  detail::ProgressThread* raw = pt.get();
  pt->thread = std::thread([&inst, s, raw, pause] {
    while (!raw->stop.load(std::memory_order_acquire)) {
      const bool did = s ? inst.progress_stream(*s) : inst.progress_null();
      if (!did) std::this_thread::sleep_for(pause);
    }
  });
  inst.progress_threads.emplace(key, std::move(pt));
}

void Instance::stop_progress_thread(const Stream& stream) {
  InstanceImpl& inst = active_instance(impl_);
  const std::int64_t key = stream.is_null() ? 0 : stream.impl()->id;
  std::unique_ptr<detail::ProgressThread> pt;
  {
    std::lock_guard lk(inst.streams_mu);
    auto it = inst.progress_threads.find(key);
    if (it == inst.progress_threads.end()) fail(Errc::kState, "no progress thread runs on this stream");
    pt = std::move(it->second);
    inst.progress_threads.erase(it);
  }
  pt->stop.store(true, std::memory_order_release);
  pt->thread.join();
}

}  // namespace minimpi
