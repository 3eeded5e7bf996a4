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

// Python bindings over the C++ runtime. Blocking calls release the GIL so
// participants on different threads can make progress.
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <string>
#include <vector>

#include "bench.hpp"
#include "minimpi/frame.hpp"
#include "minimpi/runtime.hpp"

namespace py = pybind11;
using namespace minimpi;

namespace {

py::dict header_to_dict(const FrameHeader& h) {
  py::dict d;
  d["kind"] = frame_kind_name(h.kind);
  d["context_id"] = h.context_id;
  d["src_rank"] = h.src_rank;
  d["dst_rank"] = h.dst_rank;
  d["tag"] = h.tag;
  d["src_stream_idx"] = h.src_stream_idx;
  d["dst_stream_idx"] = h.dst_stream_idx;
  d["seq"] = h.seq;
  d["payload_len"] = h.payload_len;
  return d;
}

FrameKind kind_from_name(const std::string& name) {
  for (int k = 0; k <= static_cast<int>(FrameKind::kCtrl); ++k)
    if (name == frame_kind_name(static_cast<FrameKind>(k))) return static_cast<FrameKind>(k);
  throw Error(Errc::kArg, "unknown frame kind '" + name + "'");
}

py::bytes encode(const std::string& kind, std::uint32_t context_id, std::int32_t src_rank, std::int32_t dst_rank,
                 std::int32_t tag, std::int32_t src_stream_idx, std::int32_t dst_stream_idx, std::uint64_t seq,
                 std::uint64_t payload_len) {
  FrameHeader h;
  h.kind = kind_from_name(kind);
  h.context_id = context_id;
  h.src_rank = src_rank;
  h.dst_rank = dst_rank;
  h.tag = tag;
  h.src_stream_idx = src_stream_idx;
  h.dst_stream_idx = dst_stream_idx;
  h.seq = seq;
  h.payload_len = payload_len;
  const EncodedHeader bytes = encode_header(h);
  return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

py::dict decode(const py::bytes& data) {
  const std::string raw = data;
  if (raw.size() != kFrameHeaderBytes)
    throw Error(Errc::kArg, "a frame header is " + std::to_string(kFrameHeaderBytes) + " bytes");
  EncodedHeader bytes;
  std::memcpy(bytes.data(), raw.data(), raw.size());
  return header_to_dict(decode_header(bytes));
}

py::dict summary_dict(const bench::Summary& s) {
  py::dict d;
  d["median"] = s.median;
  d["min"] = s.min;
  d["max"] = s.max;
  d["samples"] = s.samples;
  return d;
}

}  // namespace

PYBIND11_MODULE(_minimpi, m) {
  m.doc() = "minimpi message-passing runtime";

  static py::exception<Error> error_type(m, "MinimpiError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::handle(error_type.ptr())(e.what());
      exc.attr("code") = std::string(errc_name(e.code()));
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  py::class_<Status>(m, "Status")
      .def_readonly("source", &Status::source)
      .def_readonly("tag", &Status::tag)
      .def_readonly("count", &Status::count)
      .def_readonly("bytes", &Status::bytes)
      .def_readonly("source_stream_idx", &Status::source_stream_idx)
      .def_property_readonly("error", [](const Status& s) { return std::string(errc_name(s.error)); });

  py::class_<Datatype>(m, "Datatype")
      .def_static("parse", [](const std::string& text) { return parse_type_expression(text).commit(); },
                  py::arg("expression"), "Builds and commits a datatype from a constructor expression.")
      .def_static("byte", &Datatype::byte)
      .def_static("int32", &Datatype::int32)
      .def_static("int64", &Datatype::int64)
      .def_static("float32", &Datatype::float32)
      .def_property_readonly("size", &Datatype::size)
      .def_property_readonly("extent", &Datatype::extent)
      .def_property_readonly("lb", &Datatype::lb)
      .def_property_readonly("segment_count", &Datatype::segment_count)
      .def_property_readonly("node_count", &Datatype::node_count)
      .def_property_readonly("is_contiguous", &Datatype::is_contiguous)
      .def("iov",
           [](const Datatype& t, std::int64_t offset, std::int64_t count) {
             std::vector<std::pair<std::int64_t, std::int64_t>> out;
             for (const IovSegment& s : type_iov(t, offset, count)) out.emplace_back(s.base_offset, s.length);
             return out;
           },
           py::arg("offset"), py::arg("count"), "Segments [offset, offset + count) as (offset, length) pairs.")
      .def("iov_len",
           [](const Datatype& t, std::int64_t max_iov_bytes) {
             const IovLenResult r = type_iov_len(t, max_iov_bytes);
             return std::make_pair(r.iov_len, r.actual_iov_bytes);
           },
           py::arg("max_iov_bytes") = -1, "Whole segments fitting in max_iov_bytes, as (iov_len, bytes).")
      .def("__repr__", [](const Datatype& t) { return "Datatype(" + t.describe() + ")"; });

  m.def("encode_header", &encode, py::arg("kind"), py::arg("context_id") = 0, py::arg("src_rank") = 0,
        py::arg("dst_rank") = 0, py::arg("tag") = 0, py::arg("src_stream_idx") = -1, py::arg("dst_stream_idx") = -1,
        py::arg("seq") = 0, py::arg("payload_len") = 0, "Encodes a 46-byte frame header.");
  m.def("decode_header", &decode, py::arg("data"), "Decodes a 46-byte frame header into a dict.");
  m.attr("FRAME_HEADER_BYTES") = kFrameHeaderBytes;

  py::class_<Stream>(m, "Stream")
      .def_property_readonly("id", &Stream::id)
      .def_property_readonly("vci_id", &Stream::vci_id)
      .def_property_readonly("live", &Stream::live);

  py::class_<Communicator>(m, "Communicator")
      .def_property_readonly("rank", &Communicator::rank)
      .def_property_readonly("size", &Communicator::size)
      .def("dup", &Communicator::dup, py::call_guard<py::gil_scoped_release>())
      .def("stream_comm_create", &Communicator::stream_comm_create, py::arg("stream"),
           py::call_guard<py::gil_scoped_release>())
      .def("barrier", &Communicator::barrier, py::call_guard<py::gil_scoped_release>())
      .def("free", &Communicator::free, py::call_guard<py::gil_scoped_release>())
      .def(
          "send",
          [](const Communicator& c, const py::bytes& data, int dest, int tag) {
            std::string buf = data;
            py::gil_scoped_release release;
            c.send(buf.data(), static_cast<std::int64_t>(buf.size()), Datatype::byte(), dest, tag);
          },
          py::arg("data"), py::arg("dest"), py::arg("tag") = 0)
      .def(
          "recv",
          [](const Communicator& c, std::int64_t max_bytes, int source, int tag) {
            std::string buf(static_cast<std::size_t>(max_bytes), '\0');
            Status st;
            {
              py::gil_scoped_release release;
              st = c.recv(buf.data(), max_bytes, Datatype::byte(), source, tag);
            }
            buf.resize(static_cast<std::size_t>(st.bytes));
            return std::make_pair(py::bytes(buf), st);
          },
          py::arg("max_bytes"), py::arg("source") = kAnySource, py::arg("tag") = kAnyTag)
      .def(
          "allreduce_sum",
          [](const Communicator& c, std::int64_t value) {
            std::int64_t out = 0;
            py::gil_scoped_release release;
            c.allreduce(&value, &out, 1, ReduceType::kInt64);
            return out;
          },
          py::arg("value"));

  py::class_<Instance>(m, "Instance")
      .def_property_readonly("rank", &Instance::rank)
      .def_property_readonly("size", &Instance::size)
      .def_property_readonly("world", &Instance::world)
      .def("stream_create", [](Instance& i) { return i.stream_create(); })
      .def("stream_free", &Instance::stream_free, py::arg("stream"))
      .def_property_readonly("vci_pool_capacity", &Instance::vci_pool_capacity);

  m.def(
      "run_world",
      [](int n, const std::function<void(Instance&)>& body, const ConfigMap& config) {
        py::gil_scoped_release release;
        run_world(n, config, [&](Instance& inst) {
          py::gil_scoped_acquire acquire;
          body(inst);
        });
      },
      py::arg("n"), py::arg("body"), py::arg("config") = ConfigMap{{"transport", "in-proc"}},
      "Runs body(instance) on n participants, each on its own thread.");

  m.attr("ANY_SOURCE") = kAnySource;
  m.attr("ANY_TAG") = kAnyTag;

  m.def(
      "bench_msgrate",
      [](int threads, const std::string& mode, int window, int iters, int reps) {
        bench::MsgrateOptions o;
        o.threads = threads;
        o.mode = bench::parse_rate_mode(mode);
        o.window = window;
        o.iters = iters;
        o.reps = reps;
        bench::MsgrateResult r;
        {
          py::gil_scoped_release release;
          r = bench::run_msgrate(o);
        }
        py::dict d = summary_dict(r.rate);
        d["stream_guard_acquisitions"] = r.stream_guard_acquisitions;
        return d;
      },
      py::arg("threads") = 1, py::arg("mode") = "pervci", py::arg("window") = 64, py::arg("iters") = 1000,
      py::arg("reps") = 5, "Messages per second between two participants.");
  m.def(
      "bench_p2p",
      [](const std::string& pattern, const std::string& placement, std::vector<std::int64_t> sizes, int iters,
         int window, int reps) {
        bench::P2pOptions o;
        o.pattern = bench::parse_pattern(pattern);
        o.placement = bench::parse_placement(placement);
        o.sizes = std::move(sizes);
        o.iters = iters;
        o.window = window;
        o.reps = reps;
        std::vector<bench::P2pRow> rows;
        {
          py::gil_scoped_release release;
          rows = bench::run_p2p(o);
        }
        py::list out;
        for (const auto& row : rows) {
          py::dict d = summary_dict(row.value);
          d["size"] = row.size;
          d["metric"] = row.metric;
          out.append(d);
        }
        return out;
      },
      py::arg("pattern") = "latency", py::arg("placement") = "threadcomm",
      py::arg("sizes") = std::vector<std::int64_t>{8}, py::arg("iters") = 200, py::arg("window") = 16,
      py::arg("reps") = 5);
  m.def(
      "bench_progress_demo",
      [](double busy_seconds, const std::string& progress, int gets) {
        bench::ProgressDemoOptions o;
        o.busy_seconds = busy_seconds;
        o.progress = bench::parse_progress(progress);
        o.gets = gets;
        bench::ProgressDemoResult r;
        {
          py::gil_scoped_release release;
          r = bench::run_progress_demo(o);
        }
        py::dict d;
        d["epoch_seconds"] = r.epoch_seconds;
        d["data_ok"] = r.data_ok;
        return d;
      },
      py::arg("busy_seconds") = 2.0, py::arg("progress") = "none", py::arg("gets") = 1024);
}
