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

#include <atomic>
#include <numeric>
#include <thread>

#include "minimpi/comm.hpp"
#include "minimpi/runtime.hpp"

namespace minimpi {
namespace {

class P2p : public ::testing::TestWithParam<const char*> {
 protected:
  ConfigMap cfg() const { return {{"transport", GetParam()}}; }
};

std::vector<std::uint8_t> pattern(std::size_t n, std::uint8_t seed) {
  std::vector<std::uint8_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<std::uint8_t>(seed + i * 31);
  return v;
}

TEST_P(P2p, EagerRoundTrip) {
  run_world(2, cfg(), [](Instance& inst) {
    Communicator w = inst.world();
    const Datatype i64 = Datatype::int64();
    if (w.rank() == 0) {
      std::int64_t v = 42;
      w.send(&v, 1, i64, 1, 7);
    } else {
      std::int64_t v = 0;
      Status st = w.recv(&v, 1, i64, 0, 7);
      EXPECT_EQ(v, 42);
      EXPECT_EQ(st.source, 0);
      EXPECT_EQ(st.tag, 7);
      EXPECT_EQ(st.count, 1);
      EXPECT_EQ(st.source_stream_idx, kNoStream);
    }
  });
}

TEST_P(P2p, RendezvousFrameCounts) {
  // 64 KiB + 1 bytes above a 64 KiB eager limit with 16 KiB chunks is one
  // RTS and ceil(65537 / 16384) = 5 chunks, each granted by its own CTS.
  run_world(2, cfg(), [](Instance& inst) {
    Communicator w = inst.world();
    const std::size_t n = 65537;
    const RuntimeStats before = inst.stats();
    if (w.rank() == 0) {
      auto data = pattern(n, 3);
      w.send(data.data(), static_cast<std::int64_t>(n), Datatype::byte(), 1, 0);
      const RuntimeStats after = inst.stats();
      EXPECT_EQ(after.rts_frames - before.rts_frames, 1u);
      EXPECT_EQ(after.chunk_frames - before.chunk_frames, 5u);
      EXPECT_EQ(after.eager_frames - before.eager_frames, 0u);
    } else {
      std::vector<std::uint8_t> got(n);
      Status st = w.recv(got.data(), static_cast<std::int64_t>(n), Datatype::byte(), 0, 0);
      EXPECT_EQ(st.bytes, static_cast<std::int64_t>(n));
      EXPECT_EQ(got, pattern(n, 3));
      const RuntimeStats after = inst.stats();
      EXPECT_EQ(after.cts_frames - before.cts_frames, 5u);
    }
    w.barrier();
  });
}

TEST_P(P2p, TruncationReportsPartialCount) {
  run_world(2, cfg(), [](Instance& inst) {
    Communicator w = inst.world();
    if (w.rank() == 0) {
      std::int64_t v[4] = {1, 2, 3, 4};
      w.send(v, 4, Datatype::int64(), 1, 0);
    } else {
      std::int64_t v[3] = {0, 0, 0};
      std::int64_t guard = -7;
      try {
        w.recv(v, 2, Datatype::int64(), 0, 0);
        ADD_FAILURE() << "expected truncation";
      } catch (const RequestError& e) {
        EXPECT_EQ(e.code(), Errc::kTruncate);
        EXPECT_EQ(e.status().count, 2);
      }
      EXPECT_EQ(v[0], 1);
      EXPECT_EQ(v[1], 2);
      EXPECT_EQ(v[2], 0);
      EXPECT_EQ(guard, -7);
    }
  });
}

TEST_P(P2p, TruncatedRendezvousStaysInBounds) {
  run_world(2, cfg(), [](Instance& inst) {
    Communicator w = inst.world();
    const std::size_t n = 100000;
    if (w.rank() == 0) {
      auto data = pattern(n, 9);
      w.send(data.data(), static_cast<std::int64_t>(n), Datatype::byte(), 1, 0);
    } else {
      std::vector<std::uint8_t> got(n, 0xee);
      EXPECT_THROW(w.recv(got.data(), 70000, Datatype::byte(), 0, 0), RequestError);
      auto want = pattern(n, 9);
      EXPECT_TRUE(std::equal(got.begin(), got.begin() + 70000, want.begin()));
      EXPECT_TRUE(std::all_of(got.begin() + 70000, got.end(), [](std::uint8_t b) { return b == 0xee; }));
    }
  });
}

TEST_P(P2p, SelfSendWithPostedReceive) {
  run_world(1, cfg(), [](Instance& inst) {
    Communicator w = inst.world();
    std::int32_t out = 0, in = 5;
    Request r = w.irecv(&out, 1, Datatype::int32(), 0, 1);
    w.send(&in, 1, Datatype::int32(), 0, 1);
    wait(r);
    EXPECT_EQ(out, 5);
  });
}

TEST_P(P2p, AnySourceReportsActualSource) {
  run_world(3, cfg(), [](Instance& inst) {
    Communicator w = inst.world();
    if (w.rank() == 0) {
      std::set<int> sources;
      for (int i = 0; i < 2; ++i) {
        int v = -1;
        Status st = w.recv(&v, 1, Datatype::int32(), kAnySource, kAnyTag);
        EXPECT_EQ(v, st.source * 10);
        EXPECT_EQ(st.tag, st.source);
        sources.insert(st.source);
      }
      EXPECT_EQ(sources, (std::set<int>{1, 2}));
    } else {
      int v = w.rank() * 10;
      w.send(&v, 1, Datatype::int32(), 0, w.rank());
    }
  });
}

TEST_P(P2p, NonContiguousTypesOnBothSides) {
  run_world(2, cfg(), [](Instance& inst) {
    Communicator w = inst.world();
    Datatype vec = Datatype::vector(3, 2, 4, Datatype::int32()).commit();
    if (w.rank() == 0) {
      std::vector<std::int32_t> src(12);
      std::iota(src.begin(), src.end(), 0);
      w.send(src.data(), 1, vec, 1, 0);
    } else {
      std::vector<std::int32_t> dst(6, -1);
      Status st = w.recv(dst.data(), 6, Datatype::int32(), 0, 0);
      EXPECT_EQ(st.count, 6);
      EXPECT_EQ(dst, (std::vector<std::int32_t>{0, 1, 4, 5, 8, 9}));
    }
  });
}

TEST_P(P2p, UncommittedTypeRejected) {
  run_world(1, cfg(), [](Instance& inst) {
    Datatype vec = Datatype::vector(2, 1, 2, Datatype::int32());
    int buf[4] = {};
    try {
      inst.world().send(buf, 1, vec, 0, 0);
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::kArg);
    }
  });
}

TEST_P(P2p, InvalidRanksAndTags) {
  run_world(2, cfg(), [](Instance& inst) {
    Communicator w = inst.world();
    int v = 0;
    auto code = [](auto&& fn) {
      try {
        fn();
      } catch (const Error& e) {
        return e.code();
      }
      return Errc::kSuccess;
    };
    EXPECT_EQ(code([&] { w.send(&v, 1, Datatype::int32(), 2, 0); }), Errc::kArg);
    EXPECT_EQ(code([&] { w.send(&v, 1, Datatype::int32(), 0, -1); }), Errc::kArg);
    EXPECT_EQ(code([&] { w.irecv(&v, 1, Datatype::int32(), 5, 0); }), Errc::kArg);
  });
}

TEST_P(P2p, IsendWaitEqualsSend) {
  run_world(2, cfg(), [](Instance& inst) {
    Communicator w = inst.world();
    const int n = 1000;
    if (w.rank() == 0) {
      std::vector<Request> reqs;
      std::vector<std::int64_t> vals(n);
      for (int i = 0; i < n; ++i) {
        vals[static_cast<std::size_t>(i)] = i;
        reqs.push_back(w.isend(&vals[static_cast<std::size_t>(i)], 1, Datatype::int64(), 1, 0));
      }
      waitall(reqs);
    } else {
      for (int i = 0; i < n; ++i) {
        std::int64_t v = -1;
        w.recv(&v, 1, Datatype::int64(), 0, 0);
        ASSERT_EQ(v, i);
      }
    }
  });
}

TEST_P(P2p, EagerCompletesWithoutReceiverRendezvousNeedsIt) {
  run_world(2, cfg(), [](Instance& inst) {
    Communicator w = inst.world();
    std::vector<std::uint8_t> small(1024, 1), big(256 * 1024, 2);
    if (w.rank() == 0) {
      // Eager: completes although the receiver has not posted anything.
      w.send(small.data(), static_cast<std::int64_t>(small.size()), Datatype::byte(), 1, 0);
      Request r = w.isend(big.data(), static_cast<std::int64_t>(big.size()), Datatype::byte(), 1, 1);
      const auto t0 = std::chrono::steady_clock::now();
      while (std::chrono::steady_clock::now() - t0 < std::chrono::milliseconds(200)) {
        EXPECT_FALSE(test(r).has_value());
        if (r.is_null()) break;
      }
      w.send(small.data(), 1, Datatype::byte(), 1, 2);
      wait(r);
    } else {
      std::uint8_t token = 0;
      w.recv(&token, 1, Datatype::byte(), 0, 2);
      std::vector<std::uint8_t> got(small.size());
      w.recv(got.data(), static_cast<std::int64_t>(got.size()), Datatype::byte(), 0, 0);
      std::vector<std::uint8_t> got_big(big.size());
      w.recv(got_big.data(), static_cast<std::int64_t>(got_big.size()), Datatype::byte(), 0, 1);
      EXPECT_EQ(got_big, big);
    }
  });
}

TEST_P(P2p, ContextsDoNotCrossMatch) {
  run_world(2, cfg(), [](Instance& inst) {
    Communicator a = inst.world();
    Communicator b = a.dup();
    EXPECT_NE(a.context_id(), b.context_id());
    if (a.rank() == 0) {
      int x = 1, y = 2;
      b.send(&y, 1, Datatype::int32(), 1, 0);
      a.send(&x, 1, Datatype::int32(), 1, 0);
    } else {
      int x = 0, y = 0;
      a.recv(&x, 1, Datatype::int32(), 0, 0);
      b.recv(&y, 1, Datatype::int32(), 0, 0);
      EXPECT_EQ(x, 1);
      EXPECT_EQ(y, 2);
    }
    b.free();
  });
}

TEST_P(P2p, StatusCountUsesReceiveType) {
  run_world(1, cfg(), [](Instance& inst) {
    Communicator w = inst.world();
    std::int64_t v = 9, out = 0;
    Request r = w.irecv(&out, 1, Datatype::int64(), 0, 0);
    w.send(&v, 8, Datatype::byte(), 0, 0);
    Status st = wait(r);
    EXPECT_EQ(st.count, 1);
    EXPECT_EQ(st.bytes, 8);
  });
}

INSTANTIATE_TEST_SUITE_P(Transports, P2p, ::testing::Values("in-proc", "socket"),
                         [](const auto& info) { return std::string(info.param) == "socket" ? "Socket" : "InProc"; });

}  // namespace
}  // namespace minimpi
