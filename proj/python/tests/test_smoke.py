# Copyright 2026 The minimpi Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import struct
import threading

import pytest

import minimpi

VOLUME = "subarray(3,[1000,1000,1000],[100,100,100],[300,300,300],contiguous(16,byte))"


def test_subarray_segments():
    t = minimpi.Datatype.parse(VOLUME)
    assert t.size == 16_000_000
    assert t.segment_count == 10_000
    assert t.iov_len() == (10_000, 16_000_000)
    # Row-major offset of element (300, 300 + i, 300), 16 bytes each.
    want = [(16 * ((300 * 1000 + 300 + i) * 1000 + 300), 1600) for i in range(4)]
    assert t.iov(0, 4) == want


def test_vector_iov_len_bisection():
    t = minimpi.Datatype.parse("vector(3,2,4,int32)")
    assert t.iov(0, 10) == [(0, 8), (16, 8), (32, 8)]
    assert t.iov_len(17) == (2, 16)


def test_bad_expression_raises_with_code():
    with pytest.raises(minimpi.MinimpiError) as info:
        minimpi.Datatype.parse("vector(3,")
    assert info.value.code == "ERR_ARG"


def test_header_matches_little_endian_layout():
    raw = minimpi.encode_header("RTS", context_id=6, src_rank=1, dst_rank=2, tag=7, seq=9, payload_len=16)
    assert len(raw) == minimpi.FRAME_HEADER_BYTES == 46
    # Field order of the little-endian header.
    fields = struct.unpack("<4sBBIiiiiiQQ", raw)
    assert fields == (b"MMPI", 1, 1, 6, 1, 2, 7, -1, -1, 9, 16)
    back = minimpi.decode_header(raw)
    assert back["kind"] == "RTS" and back["tag"] == 7 and back["payload_len"] == 16


def test_decode_rejects_bad_magic():
    raw = bytearray(minimpi.encode_header("EAGER"))
    raw[0:4] = b"XXXX"
    with pytest.raises(minimpi.MinimpiError) as info:
        minimpi.decode_header(bytes(raw))
    assert info.value.code == "ERR_TRANSPORT"


def test_run_world_exchange_and_allreduce():
    results = {}
    lock = threading.Lock()

    def body(inst):
        world = inst.world
        peer = 1 - world.rank
        if world.rank == 0:
            world.send(b"ping" * 1000, peer, tag=3)
            data, status = world.recv(10, peer, 4)
        else:
            data, status = world.recv(4000, peer, 3)
            world.send(b"pong", peer, tag=4)
        total = world.allreduce_sum(world.rank + 1)
        with lock:
            results[world.rank] = (data, status.source, status.tag, total)

    minimpi.run_world(2, body)
    assert results[0] == (b"pong", 1, 4, 3)
    assert results[1] == (b"ping" * 1000, 0, 3, 3)


def test_stream_communicator_over_sockets():
    seen = []

    def body(inst):
        s = inst.stream_create()
        sc = inst.world.stream_comm_create(s)
        if sc.rank == 0:
            sc.send(b"x" * 100_000, 1)
        else:
            data, _ = sc.recv(100_000, 0)
            seen.append(len(data))
        sc.free()
        inst.stream_free(s)

    minimpi.run_world(2, body, {"transport": "socket"})
    assert seen == [100_000]


def test_bench_bindings():
    r = minimpi.bench_msgrate(threads=2, mode="stream", iters=20, reps=1)
    assert r["median"] > 0 and r["stream_guard_acquisitions"] == 0
    rows = minimpi.bench_p2p(sizes=[8, 4096], iters=10, reps=1)
    assert [row["size"] for row in rows] == [8, 4096]
    demo = minimpi.bench_progress_demo(busy_seconds=0.3, progress="thread", gets=16)
    assert demo["data_ok"] and demo["epoch_seconds"] < 0.3
