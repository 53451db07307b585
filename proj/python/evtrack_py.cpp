#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>

#include "evtrack/bridge.hpp"
#include "evtrack/commands.hpp"
#include "evtrack/config.hpp"
#include "evtrack/error.hpp"
#include "evtrack/events.hpp"
#include "evtrack/io.hpp"
#include "evtrack/kalman.hpp"
#include "evtrack/metrics.hpp"
#include "evtrack/pipeline.hpp"
#include "evtrack/simulate.hpp"

namespace py = pybind11;
using namespace evtrack;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<Event> events_from_array(const Array& a) {
  if (a.ndim() != 2 || (a.shape(1) != 4 && a.shape(0) > 0)) {
    throw ValidationError("events must be an (n, 4) array of [t, x, y, p]");
  }
  const auto r = a.unchecked<2>();
  std::vector<Event> out(static_cast<std::size_t>(a.shape(0)));
  for (py::ssize_t i = 0; i < a.shape(0); ++i) {
    const double x = r(i, 1), y = r(i, 2), p = r(i, 3);
    if (x < 0 || y < 0 || x > 65535 || y > 65535 || x != std::floor(x) || y != std::floor(y)) {
      throw ValidationError("event " + std::to_string(i) + " has a non-integral or out-of-range pixel");
    }
    if (p != 1 && p != -1) throw ValidationError("event " + std::to_string(i) + " polarity must be +1 or -1");
    out[static_cast<std::size_t>(i)] = {r(i, 0), static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
                                        static_cast<std::int8_t>(p)};
  }
  return out;
}

Array events_to_array(std::span<const Event> events) {
  Array a({static_cast<py::ssize_t>(events.size()), py::ssize_t{4}});
  auto w = a.mutable_unchecked<2>();
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto j = static_cast<py::ssize_t>(i);
    w(j, 0) = events[i].t;
    w(j, 1) = events[i].x;
    w(j, 2) = events[i].y;
    w(j, 3) = events[i].polarity;
  }
  return a;
}

GroundTruth gt_from_array(const Array& a) {
  if (a.ndim() != 2 || a.shape(1) != 7) {
    throw ValidationError("groundtruth must be an (m, 7) array of [t, cx, cy, xmin, ymin, xmax, ymax]");
  }
  const auto r = a.unchecked<2>();
  std::vector<GroundTruthSample> s;
  for (py::ssize_t i = 0; i < a.shape(0); ++i) {
    s.push_back({r(i, 0), {r(i, 1), r(i, 2)}, {r(i, 3), r(i, 4), r(i, 5), r(i, 6)}});
  }
  return GroundTruth(std::move(s));
}

Array gt_to_array(const GroundTruth& gt) {
  const auto& s = gt.samples();
  Array a({static_cast<py::ssize_t>(s.size()), py::ssize_t{7}});
  auto w = a.mutable_unchecked<2>();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto j = static_cast<py::ssize_t>(i);
    const double row[7] = {s[i].t,          s[i].center.x(), s[i].center.y(), s[i].bbox.x_min,
                           s[i].bbox.y_min, s[i].bbox.x_max, s[i].bbox.y_max};
    for (int c = 0; c < 7; ++c) w(j, c) = row[c];
  }
  return a;
}

EventFormat format_arg(const std::optional<std::string>& name, const std::string& path) {
  if (!name) return format_from_path(path);
  const auto f = parse_format_name(*name);
  if (!f) throw ConfigError("unknown event format '" + *name + "'");
  return *f;
}

MotionModel make_model(double q, const std::string& discretization) {
  if (discretization == "sampled") return MotionModel::isotropic(q, NoiseDiscretization::sampled);
  if (discretization == "integrated") return MotionModel::isotropic(q, NoiseDiscretization::integrated);
  throw ConfigError("discretization must be 'sampled' or 'integrated'");
}

py::dict box_dict(const Detection& d) {
  py::dict b;
  b["xmin"] = d.bbox.x_min;
  b["ymin"] = d.bbox.y_min;
  b["xmax"] = d.bbox.x_max;
  b["ymax"] = d.bbox.y_max;
  b["conf"] = d.confidence;
  b["cls"] = d.class_id;
  b["t"] = d.t;
  return b;
}

Detection box_from(const py::handle& h) {
  const auto b = h.cast<py::dict>();
  Detection d;
  d.bbox = {b["xmin"].cast<double>(), b["ymin"].cast<double>(), b["xmax"].cast<double>(),
            b["ymax"].cast<double>()};
  d.confidence = b.contains("conf") ? b["conf"].cast<double>() : 1.0;
  d.class_id = b.contains("cls") ? b["cls"].cast<int>() : 0;
  d.t = b.contains("t") ? b["t"].cast<double>() : 0.0;
  return d;
}

py::dict stats_dict(const PipelineStats& s) {
  py::dict d;
  d["events"] = s.events;
  d["windows"] = s.windows;
  d["accepted"] = s.accepted;
  d["missed"] = s.missed;
  d["gated"] = s.gated;
  d["detector_failures"] = s.detector_failures;
  d["pending_events"] = s.pending_events;
  d["events_per_window"] = s.events_per_window;
  d["mean_dt"] = s.mean_dt;
  return d;
}

py::object optional_number(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return py::none();
  return py::float_(*v);
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["e_x"] = r.e_x;
  d["e_gt"] = r.e_gt;
  d["precision"] = optional_number(r.precision);
  d["recall"] = optional_number(r.recall);
  d["tp"] = r.tp ? py::object(py::int_(*r.tp)) : py::none();
  d["fp"] = r.fp ? py::object(py::int_(*r.fp)) : py::none();
  d["fn"] = r.fn ? py::object(py::int_(*r.fn)) : py::none();
  d["coverage"] = optional_number(r.coverage);
  d["t_s"] = r.t_s;
  d["t_f"] = r.t_f;
  return d;
}

/// Tracking output kept alive on the Python side.
struct TrackResult {
  PipelineResult result;
  RunConfig config;

  Array estimates() const {
    Array a({static_cast<py::ssize_t>(result.records.size()), py::ssize_t{23}});
    auto w = a.mutable_unchecked<2>();
    for (std::size_t i = 0; i < result.records.size(); ++i) {
      const auto j = static_cast<py::ssize_t>(i);
      const auto& s = result.records[i].estimate;
      w(j, 0) = s.t;
      w(j, 1) = static_cast<double>(s.k.value_or(-1));
      for (int c = 0; c < 4; ++c) w(j, 2 + c) = s.x[c];
      for (int c = 0; c < 16; ++c) w(j, 6 + c) = s.P(c / 4, c % 4);
      w(j, 22) = result.records[i].updated ? 1.0 : 0.0;
    }
    return a;
  }
};

}  // namespace

PYBIND11_MODULE(_evtrack, m) {
  m.doc() = "Event-camera detection and multi-rate Kalman tracking";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<OrderingError>(m, "OrderingError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<FilterError>(m, "FilterError", base.ptr());
  py::register_exception<RangeError>(m, "RangeError", base.ptr());
  py::register_exception<MetricError>(m, "MetricError", base.ptr());
  py::register_exception<ConnectionError>(m, "ConnectionError", base.ptr());
  py::register_exception<ProtocolError>(m, "ProtocolError", base.ptr());
  py::register_exception<BackendError>(m, "BackendError", base.ptr());

  // --- events ---------------------------------------------------------------
  m.def(
      "simulate",
      [](const std::string& config_json, std::optional<std::uint64_t> seed) {
        SceneConfig sc = parse_scene_config(config_json);
        if (seed) sc.seed = *seed;
        SimulationResult r;
        {
          py::gil_scoped_release release;
          r = simulate_scene(sc);
        }
        return py::make_tuple(events_to_array(r.events), gt_to_array(r.groundtruth), r.clipped);
      },
      py::arg("config_json"), py::arg("seed") = py::none(),
      "Simulate a scene; returns (events (n,4), groundtruth (m,7), clipped).");

  m.def(
      "read_events",
      [](const std::string& path, std::optional<std::string> format) {
        return events_to_array(read_events_file(path, format_arg(format, path)));
      },
      py::arg("path"), py::arg("format") = py::none());
  m.def(
      "write_events",
      [](const std::string& path, const Array& events, std::optional<std::string> format) {
        write_events_file(path, events_from_array(events), format_arg(format, path));
      },
      py::arg("path"), py::arg("events"), py::arg("format") = py::none());
  m.def("read_groundtruth", [](const std::string& path) { return gt_to_array(read_groundtruth_file(path)); });
  m.def("write_groundtruth",
        [](const std::string& path, const Array& gt) { write_groundtruth_file(path, gt_from_array(gt)); });

  m.def(
      "events_per_window",
      [](int width, int height, std::optional<std::int64_t> N, std::optional<double> n) {
        if (N.has_value() == n.has_value()) throw ConfigError("give exactly one of N or n");
        const WindowConfig w = N ? WindowConfig::with_count(*N) : WindowConfig::with_events_per_pixel(*n);
        return w.events_per_window({width, height});
      },
      py::arg("width"), py::arg("height"), py::arg("N") = py::none(), py::arg("n") = py::none());

  m.def(
      "window_events",
      [](const Array& events, std::int64_t N) {
        const auto ev = events_from_array(events);
        const auto w = window_by_count(ev, N);
        py::list windows;
        for (const auto& win : w.windows) windows.append(events_to_array(win.events));
        return py::make_tuple(windows, events_to_array(w.pending));
      },
      py::arg("events"), py::arg("N"), "Fixed-count windows; returns (list of (N,4) arrays, pending).");

  m.def(
      "event_tensor",
      [](const Array& events, int width, int height, int bins) {
        EventWindow w{0, events_from_array(events)};
        const auto t = build_event_tensor(w, {width, height}, bins);
        Array out({static_cast<py::ssize_t>(bins), static_cast<py::ssize_t>(height),
                   static_cast<py::ssize_t>(width)});
        std::copy(t.grid.begin(), t.grid.end(), out.mutable_data());
        return out;
      },
      py::arg("events"), py::arg("width"), py::arg("height"), py::arg("bins") = 5,
      "Voxel grid of shape (bins, height, width).");

  // --- filter ---------------------------------------------------------------
  m.def(
      "transition",
      [](double tau) {
        const auto t = transition(tau);
        return py::make_tuple(Mat4(t.F), Eigen::Matrix<double, 4, 2>(t.G));
      },
      py::arg("tau"), "Returns (F, G) for interval tau.");
  m.def(
      "process_noise",
      [](double tau, double q, const std::string& discretization) {
        return Mat4(make_model(q, discretization).process_noise(tau));
      },
      py::arg("tau"), py::arg("q"), py::arg("discretization") = "sampled");

  py::class_<MotionModel>(m, "MotionModel")
      .def(py::init(&make_model), py::arg("q") = 500.0, py::arg("discretization") = "sampled")
      .def_readwrite("Q", &MotionModel::Q)
      .def("process_noise", &MotionModel::process_noise);

  py::class_<StateEstimate>(m, "StateEstimate")
      .def(py::init([](const Vec4& x, const Mat4& P, double t, std::optional<std::int64_t> k) {
             return StateEstimate{x, P, t, k};
           }),
           py::arg("x"), py::arg("P"), py::arg("t") = 0.0, py::arg("k") = py::none())
      .def_readwrite("x", &StateEstimate::x)
      .def_readwrite("P", &StateEstimate::P)
      .def_readwrite("t", &StateEstimate::t)
      .def_readwrite("k", &StateEstimate::k)
      .def("__repr__", [](const StateEstimate& s) {
        return "StateEstimate(t=" + std::to_string(s.t) + ", x=[" + std::to_string(s.x[0]) + ", " +
               std::to_string(s.x[1]) + ", " + std::to_string(s.x[2]) + ", " + std::to_string(s.x[3]) + "])";
      });

  m.def("predict", &predict, py::arg("state"), py::arg("tau"), py::arg("model"));
  m.def(
      "update",
      [](const StateEstimate& s, const Vec2& z, const Mat2& R) { return update(s, {z, s.t, R}); },
      py::arg("state"), py::arg("z"), py::arg("R"), "Measurement update at the state's own time.");
  m.def("query", &query, py::arg("state"), py::arg("t"), py::arg("model"));

  py::class_<MultiRateKalmanFilter>(m, "KalmanFilter")
      .def(py::init<StateEstimate, MotionModel>(), py::arg("initial"), py::arg("model"))
      .def_property_readonly("state", &MultiRateKalmanFilter::state)
      .def("advance", &MultiRateKalmanFilter::advance, py::arg("t"), py::arg("k") = py::none())
      .def(
          "correct",
          [](MultiRateKalmanFilter& f, const Vec2& z, double t, const Mat2& R, std::optional<std::int64_t> k) {
            f.correct({z, t, R}, k);
          },
          py::arg("z"), py::arg("t"), py::arg("R"), py::arg("k") = py::none())
      .def("query", &MultiRateKalmanFilter::query, py::arg("t"));

  // --- tracking ---------------------------------------------------------------
  py::class_<TrackResult>(m, "TrackResult")
      .def_property_readonly("estimates", &TrackResult::estimates,
                             "(windows, 23) array with the estimate-log columns")
      .def_property_readonly("stats", [](const TrackResult& r) { return stats_dict(r.result.stats); })
      .def_property_readonly("final_state", [](const TrackResult& r) { return r.result.final_state; })
      .def_property_readonly("detections",
                             [](const TrackResult& r) {
                               py::list frames;
                               for (const auto& f : r.result.frames) {
                                 py::list boxes;
                                 for (const auto& d : f.detections) boxes.append(box_dict(d));
                                 frames.append(py::make_tuple(f.k, f.t, boxes));
                               }
                               return frames;
                             })
      .def("query", [](const TrackResult& r, double t) { return r.result.query(t); }, py::arg("t"))
      .def("write_estimates",
           [](const TrackResult& r, const std::string& path) {
             write_estimate_log_file(path, r.result, r.config.query_rate);
           })
      .def(
          "evaluate",
          [](const TrackResult& r, const Array& gt, std::optional<double> t_s, std::optional<double> t_f) {
            const auto g = gt_from_array(gt);
            const auto ts = t_s ? t_s : r.config.t_s;
            const auto tf = t_f ? t_f : r.config.t_f;
            return report_dict(evaluate(r.result.trace, g, r.result.first_measurement_time, ts, tf,
                                        &r.result.frames, r.config.pipeline.target_class));
          },
          py::arg("groundtruth"), py::arg("t_s") = py::none(), py::arg("t_f") = py::none());

  m.def(
      "track",
      [](const std::string& config_json, const Array& events, std::optional<Array> groundtruth) {
        auto rc = parse_run_config(config_json);
        const auto ev = events_from_array(events);
        std::optional<GroundTruth> gt;
        if (groundtruth) gt = gt_from_array(*groundtruth);
        TrackResult out;
        {
          py::gil_scoped_release release;
          out.result = track(rc, ev, gt ? &*gt : nullptr);
        }
        out.config = std::move(rc);
        return out;
      },
      py::arg("config_json"), py::arg("events"), py::arg("groundtruth") = py::none(),
      "Run the tracking pipeline with a JSON run config.");

  // --- metrics ----------------------------------------------------------------
  m.def(
      "iou",
      [](const std::array<double, 4>& a, const std::array<double, 4>& b) {
        return iou({a[0], a[1], a[2], a[3]}, {b[0], b[1], b[2], b[3]});
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "precision_recall",
      [](const py::list& frames, const Array& gt, int target_class, double threshold) {
        std::vector<FrameDetections> fs;
        std::int64_t k = 0;
        for (const auto& item : frames) {
          const auto tup = item.cast<py::tuple>();
          FrameDetections f{k++, tup[0].cast<double>(), {}};
          for (const auto& b : tup[1].cast<py::list>()) f.detections.push_back(box_from(b));
          fs.push_back(std::move(f));
        }
        const auto pr = precision_recall(fs, gt_from_array(gt), target_class, threshold);
        py::dict d;
        d["precision"] = optional_number(pr.precision);
        d["recall"] = optional_number(pr.recall);
        d["tp"] = pr.tp;
        d["fp"] = pr.fp;
        d["fn"] = pr.fn;
        return d;
      },
      py::arg("frames"), py::arg("groundtruth"), py::arg("target_class") = 0,
      py::arg("iou_threshold") = kIouThreshold, "frames: list of (t, [box dict, ...]).");

  // --- protocol -----------------------------------------------------------------
  m.attr("PROTOCOL_VERSION") = bridge::kProtocolVersion;
  m.def(
      "canonical_message", [](const std::string& line) { return bridge::encode(bridge::decode(line)); },
      py::arg("line"), "Validate one protocol line and return its canonical encoding.");
  m.def(
      "encode_detect",
      [](std::int64_t k, const Array& events) {
        bridge::DetectRequest r{k, 0.0, events_from_array(events)};
        if (r.events.empty()) throw ValidationError("a detect request needs at least one event");
        r.t_end = r.events.back().t;
        return bridge::encode(r);
      },
      py::arg("k"), py::arg("events"));
  m.def(
      "decode_events",
      [](const std::string& line) {
        const auto msg = bridge::decode(line);
        const auto* req = std::get_if<bridge::DetectRequest>(&msg);
        if (req == nullptr) throw ProtocolError("not a detect request");
        return py::make_tuple(req->k, req->t_end, events_to_array(req->events));
      },
      py::arg("line"), "Parse a detect request into (k, t_end, events (n,4)).");
}
