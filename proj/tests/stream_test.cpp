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

#include <gtest/gtest.h>

#include <set>
#include <thread>

#include "minimpi/offload.hpp"
#include "minimpi/runtime.hpp"

namespace minimpi {
namespace {

template <class Fn>
Errc code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::kSuccess;
}

Instance solo(const ConfigMap& extra = {}) {
  ConfigMap cfg = {{"transport", "in-proc"}, {"rank", "0"}};
  for (const auto& [k, v] : extra) cfg[k] = v;
  return Instance::init(cfg, make_inproc_fabric(1));
}

TEST(Stream, NullStreamProperties) {
  Stream s = Stream::null();
  EXPECT_TRUE(s.is_null());
  EXPECT_EQ(s.kind(), StreamKind::kNull);
  EXPECT_EQ(s.id(), 0);
  EXPECT_EQ(s.vci_id(), -1);
}

TEST(Stream, DistinctVcisAndMonotoneIds) {
  Instance inst = solo();
  std::set<int> vcis;
  std::int64_t last_id = 0;
  std::vector<Stream> streams;
  for (int i = 0; i < 8; ++i) {
    Stream s = inst.stream_create();
    EXPECT_EQ(s.kind(), StreamKind::kSerialContext);
    EXPECT_GT(s.id(), last_id);
    last_id = s.id();
    vcis.insert(s.vci_id());
    streams.push_back(s);
  }
  EXPECT_EQ(vcis.size(), 8u);
  EXPECT_EQ(inst.vci_pool_allocated(), 8);
  for (auto& s : streams) inst.stream_free(s);
  EXPECT_EQ(inst.vci_pool_allocated(), 0);
  inst.finalize();
}

TEST(Stream, ExhaustionAtCapacityPlusOne) {
  Instance inst = solo({{"vci_pool", "8"}});
  EXPECT_EQ(inst.vci_pool_capacity(), 8);
  std::vector<Stream> streams;
  for (int i = 0; i < 8; ++i) streams.push_back(inst.stream_create());
  EXPECT_EQ(code_of([&] { inst.stream_create(); }), Errc::kExhausted);
  for (auto& s : streams) inst.stream_free(s);
  inst.finalize();
}

TEST(Stream, CreateFreeCyclingReusesSlots) {
  Instance inst = solo({{"vci_pool", "4"}});
  for (int i = 0; i < 10 * 4; ++i) {
    Stream s = inst.stream_create();
    inst.stream_free(s);
  }
  inst.finalize();
}

TEST(Stream, FreeRules) {
  Instance inst = solo();
  Stream s = inst.stream_create();
  Stream copy = s;
  inst.stream_free(s);
  EXPECT_FALSE(copy.live());
  EXPECT_EQ(code_of([&] { inst.stream_free(copy); }), Errc::kArg);
  Stream none;
  EXPECT_EQ(code_of([&] { inst.stream_free(none); }), Errc::kArg);

  Stream busy = inst.stream_create();
  inst.start_progress_thread(busy);
  EXPECT_EQ(code_of([&] { inst.stream_free(busy); }), Errc::kState);
  inst.stop_progress_thread(busy);
  inst.stream_free(busy);
  inst.finalize();
}

TEST(Stream, InfoValidation) {
  Instance inst = solo();
  Info cuda;
  cuda.set("type", "cudaStream_t");
  std::uint64_t fake = 1;
  cuda.set_hex("value", &fake, sizeof fake);
  EXPECT_EQ(code_of([&] { inst.stream_create(&cuda); }), Errc::kUnsupported);

  Info untyped;
  untyped.set("value", "00");
  EXPECT_EQ(code_of([&] { inst.stream_create(&untyped); }), Errc::kArg);

  Info short_value;
  short_value.set("type", "devstream");
  short_value.set("value", "0011");
  EXPECT_EQ(code_of([&] { inst.stream_create(&short_value); }), Errc::kArg);

  Info unknown_handle;
  unknown_handle.set("type", "devstream");
  std::uint64_t bogus = 0x1234;
  unknown_handle.set_hex("value", &bogus, sizeof bogus);
  EXPECT_EQ(code_of([&] { inst.stream_create(&unknown_handle); }), Errc::kArg);
  EXPECT_EQ(inst.vci_pool_allocated(), 0);
  inst.finalize();
}

TEST(Stream, DeviceStreamsShareTheQueueVci) {
  Instance inst = solo();
  DeviceQueue q = DeviceQueue::create();
  const Info info = q.stream_info();
  EXPECT_EQ(info.get("type"), "devstream");
  Stream a = inst.stream_create(&info);
  Stream b = inst.stream_create(&info);
  EXPECT_EQ(a.kind(), StreamKind::kDeviceQueue);
  EXPECT_EQ(a.vci_id(), b.vci_id());
  EXPECT_NE(a.id(), b.id());
  EXPECT_EQ(inst.vci_pool_allocated(), 1);
  inst.stream_free(a);
  inst.stream_free(b);
  EXPECT_EQ(inst.vci_pool_allocated(), 0);
  q.destroy();
  EXPECT_EQ(code_of([&] { inst.stream_create(&info); }), Errc::kArg);
  inst.finalize();
}

TEST(Stream, SerialFastPathTakesNoLocks) {
  for (const char* mode : {"global", "pervci"}) {
    run_world(2, {{"transport", "in-proc"}, {"lock_mode", mode}}, [](Instance& inst) {
      Stream s = inst.stream_create();
      Communicator sc = inst.world().stream_comm_create(s);
      std::vector<std::int64_t> buf(4, 0);
      for (int i = 0; i < 2000; ++i) {
        if (sc.rank() == 0) {
          sc.send(buf.data(), 4, Datatype::int64(), 1, i % 3);
          sc.recv(buf.data(), 4, Datatype::int64(), 1, i % 3);
        } else {
          sc.recv(buf.data(), 4, Datatype::int64(), 0, i % 3);
          sc.send(buf.data(), 4, Datatype::int64(), 0, i % 3);
        }
      }
      EXPECT_EQ(inst.guard_acquisitions(s.vci_id()), 0u);
      sc.free();
      inst.stream_free(s);
    });
  }
}

TEST(Stream, ProgressThreadPerStream) {
  Instance inst = solo();
  Stream a = inst.stream_create();
  Stream b = inst.stream_create();
  inst.start_progress_thread(a);
  inst.start_progress_thread(b);
  inst.start_progress_thread();
  EXPECT_EQ(code_of([&] { inst.start_progress_thread(a); }), Errc::kState);
  inst.stop_progress_thread(a);
  inst.stop_progress_thread(b);
  inst.stop_progress_thread();
  inst.stream_free(a);
  inst.stream_free(b);
  inst.finalize();
}

}  // namespace
}  // namespace minimpi
