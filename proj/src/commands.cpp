#include "evtrack/commands.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <iomanip>
#include <limits>
#include <memory>
#include <ostream>

#include "evtrack/bridge.hpp"
#include "evtrack/error.hpp"
#include "evtrack/rng.hpp"
#include "evtrack/simulate.hpp"

namespace evtrack {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConnectionError*>(&e) || dynamic_cast<const ProtocolError*>(&e) ||
      dynamic_cast<const BackendError*>(&e)) {
    return kExitBridge;
  }
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
      dynamic_cast<const ValidationError*>(&e)) {
    return kExitConfig;
  }
  return kExitRuntime;
}

namespace {

template <typename Fn>
int guarded(std::ostream& err, const char* command, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    err << "evtrack " << command << ": " << e.what() << '\n';
    return exit_code_for(e);
  }
}

RunConfig load_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : load_run_config(path);
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot create '" + path + "'");
  return out;
}

std::string format_optional(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return "nan";
  std::ostringstream s;
  s.precision(10);
  s << *v;
  return s.str();
}

}  // namespace

// --- simulate --------------------------------------------------------------

int cmd_simulate(const SimulateOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, "simulate", [&] {
    if (opts.config_path.empty()) throw ConfigError("--config is required");
    if (opts.events_path.empty() || opts.groundtruth_path.empty()) {
      throw ConfigError("--events and --groundtruth outputs are required");
    }
    std::ifstream in(opts.config_path);
    if (!in) throw ConfigError("cannot open config '" + opts.config_path + "'");
    std::stringstream text;
    text << in.rdbuf();
    SceneConfig scene = parse_scene_config(text.str());
    if (opts.seed) scene.seed = *opts.seed;

    const SimulationResult sim = simulate_scene(scene);
    const EventFormat format = opts.format.value_or(format_from_path(opts.events_path));
    write_events_file(opts.events_path, sim.events, format);
    write_groundtruth_file(opts.groundtruth_path, sim.groundtruth);

    out << "events: " << sim.events.size() << '\n'
        << "groundtruth samples: " << sim.groundtruth.samples().size() << '\n';
    if (sim.clipped) err << "warning: target leaves the frame during the scene\n";
    return kExitOk;
  });
}

// --- track -----------------------------------------------------------------

void RunOverrides::apply(RunConfig& rc) const {
  if (width) rc.geometry.width = *width;
  if (height) rc.geometry.height = *height;
  if (N && n) throw ConfigError("give either --N or --n, not both");
  if (N) rc.pipeline.window.size = *N;
  if (n) rc.pipeline.window.size = WindowConfig::EventsPerPixel{*n};
  if (bins) rc.pipeline.window.bins = *bins;
  if (detector) {
    if (*detector == "oracle") {
      rc.detector.kind = DetectorChoice::Kind::oracle;
    } else if (*detector == "bridge") {
      rc.detector.kind = DetectorChoice::Kind::bridge;
    } else {
      throw ConfigError("--detector must be 'oracle' or 'bridge'");
    }
  }
  if (bridge_address) {
    rc.detector.bridge_address = *bridge_address;
    if (!detector) rc.detector.kind = DetectorChoice::Kind::bridge;
  }
  if (sigma) rc.detector.oracle.sigma = *sigma;
  if (p_miss) rc.detector.oracle.p_miss = *p_miss;
  if (p_fp) rc.detector.oracle.p_false_positive = *p_fp;
  if (seed) rc.detector.oracle.seed = *seed;
  if (q) rc.pipeline.model.Q = Mat2::Identity() * *q;
  if (sigma_meas) rc.pipeline.r_policy.sigma = *sigma_meas;
  if (latency) rc.pipeline.latency = *latency;
  if (query_rate) rc.query_rate = *query_rate;
  if (concurrent) rc.pipeline.concurrent = *concurrent;
  if (gate) rc.pipeline.gate = *gate;
  rc.sync_geometry();
  rc.detector.oracle.validate();
}

namespace {

std::unique_ptr<Detector> make_detector(const RunConfig& rc, const GroundTruth* gt) {
  if (rc.detector.kind == DetectorChoice::Kind::oracle) {
    if (gt == nullptr) throw ConfigError("the oracle detector needs a groundtruth file");
    return std::make_unique<OracleDetector>(*gt, rc.geometry, rc.detector.oracle);
  }
  if (rc.detector.bridge_address.empty()) throw ConfigError("no bridge address configured");
  const std::chrono::milliseconds timeout{rc.detector.timeout_ms};
  auto client = std::make_unique<bridge::BridgeClient>(
      bridge::open_address(rc.detector.bridge_address, timeout), bridge::ClientOptions{timeout});
  client->handshake(rc.geometry, rc.pipeline.window.bins);
  return std::make_unique<bridge::BridgeDetector>(std::move(client));
}

}  // namespace

PipelineResult track(const RunConfig& rc, const EventSource& source, const GroundTruth* gt) {
  rc.pipeline.validate();
  auto detector = make_detector(rc, gt);
  return run_pipeline(source, rc.pipeline, *detector);
}

PipelineResult track(const RunConfig& rc, std::span<const Event> events, const GroundTruth* gt) {
  rc.pipeline.validate();
  auto detector = make_detector(rc, gt);
  return run_pipeline(events, rc.pipeline, *detector);
}

void print_summary(std::ostream& out, const PipelineResult& result, double latency) {
  const auto& s = result.stats;
  out << "events: " << s.events << " (" << s.pending_events << " pending)\n"
      << "events per window: " << s.events_per_window << '\n'
      << "windows processed: " << s.windows << '\n'
      << "detections accepted: " << s.accepted << '\n'
      << "detections missed: " << s.missed;
  if (s.gated > 0) out << " (" << s.gated << " gated)";
  if (s.detector_failures > 0) out << " (" << s.detector_failures << " detector failures)";
  out << '\n';
  if (std::isfinite(s.mean_dt)) {
    out << "mean dt: " << s.mean_dt * 1e3 << " ms (" << 1.0 / s.mean_dt << " Hz)\n";
  } else {
    out << "mean dt: n/a\n";
  }
  out << "latency offset: " << latency * 1e3 << " ms\n";
  out << std::fixed << std::setprecision(3) << "wall clock [ms]: windowing "
      << s.timing.windowing * 1e3 << ", tensor " << s.timing.tensor * 1e3 << ", detection "
      << s.timing.detection * 1e3 << ", filtering " << s.timing.filtering * 1e3 << '\n';
  out.unsetf(std::ios::fixed);
}

int cmd_track(const TrackOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, "track", [&] {
    RunConfig rc = load_or_default(opts.config_path);
    opts.overrides.apply(rc);
    if (opts.events_path.empty()) throw ConfigError("--events is required");
    if (opts.estimates_path.empty()) throw ConfigError("--out is required");

    std::optional<GroundTruth> gt;
    if (!opts.groundtruth_path.empty()) gt = read_groundtruth_file(opts.groundtruth_path);

    std::ifstream in(opts.events_path, std::ios::binary);
    if (!in) throw ConfigError("cannot open event file '" + opts.events_path + "'");
    EventReader reader(in, opts.format.value_or(format_from_path(opts.events_path)), rc.geometry);
    const PipelineResult result = track(rc, [&] { return reader.next(); }, gt ? &*gt : nullptr);

    write_estimate_log_file(opts.estimates_path, result, rc.query_rate);
    if (!opts.detections_path.empty()) write_detections_log_file(opts.detections_path, result.frames);
    print_summary(out, result, rc.pipeline.latency);
    return kExitOk;
  });
}

// --- eval ------------------------------------------------------------------

EvalReport evaluate(const EstimateTrace& trace, const GroundTruth& gt,
                    std::optional<double> first_update, std::optional<double> t_s,
                    std::optional<double> t_f, const std::vector<FrameDetections>* frames,
                    int target_class) {
  EvalReport r;
  if (!t_s && !first_update) {
    throw MetricError("no accepted measurement; pass an explicit T_s");
  }
  r.t_s = t_s.value_or(*first_update);
  r.t_f = t_f.value_or(gt.end_time());
  const EvalWindow window{r.t_s, r.t_f};
  r.e_x = error_cov(trace, window);
  r.e_gt = error_gt(trace, gt, window);
  if (frames != nullptr && !frames->empty()) {
    const PrecisionRecall pr = precision_recall(*frames, gt, target_class);
    r.precision = pr.precision;
    r.recall = pr.recall;
    r.tp = pr.tp;
    r.fp = pr.fp;
    r.fn = pr.fn;
    r.coverage = detection_coverage(*frames);
  }
  return r;
}

EvalReport evaluate(const PipelineResult& result, const GroundTruth& gt, const RunConfig& rc) {
  return evaluate(result.trace, gt, result.first_measurement_time, rc.t_s, rc.t_f, &result.frames,
                  rc.pipeline.target_class);
}

int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, "eval", [&] {
    RunConfig rc = load_or_default(opts.config_path);
    if (opts.q) rc.pipeline.model.Q = Mat2::Identity() * *opts.q;
    if (opts.t_s) rc.t_s = opts.t_s;
    if (opts.t_f) rc.t_f = opts.t_f;
    if (opts.estimates_path.empty() || opts.groundtruth_path.empty()) {
      throw ConfigError("--estimates and --groundtruth are required");
    }
    const auto rows = read_estimate_log_file(opts.estimates_path);
    const GroundTruth gt = read_groundtruth_file(opts.groundtruth_path);
    const EstimateTrace trace = trace_from_rows(rows, rc.pipeline.model);

    std::optional<double> first_update;
    for (const auto& row : rows) {
      if (row.updated && row.estimate.k) {
        first_update = row.estimate.t;
        break;
      }
    }
    std::optional<std::vector<FrameDetections>> frames;
    if (!opts.detections_path.empty()) {
      std::ifstream in(opts.detections_path);
      if (!in) throw ConfigError("cannot open detections log '" + opts.detections_path + "'");
      std::vector<std::int64_t> ks;
      const auto dets = read_detections_log(in, &ks);
      frames = frames_from_logs(rows, dets, ks);
    }
    const EvalReport report = evaluate(trace, gt, first_update, rc.t_s, rc.t_f,
                                       frames ? &*frames : nullptr, rc.pipeline.target_class);
    const std::string json = report_to_json(report);
    if (opts.report_path.empty()) {
      out << json << '\n';
    } else {
      auto file = open_output(opts.report_path);
      file << json << '\n';
    }
    return kExitOk;
  });
}

// --- sweep -----------------------------------------------------------------

std::vector<SweepRow> sweep(const RunConfig& rc, std::span<const Event> events,
                            const GroundTruth& gt, std::span<const std::int64_t> sizes, int jobs) {
  auto run_one = [&](std::int64_t N) {
    SweepRow row;
    row.N = N;
    row.n = static_cast<double>(N) / static_cast<double>(rc.geometry.pixel_count());
    try {
      RunConfig local = rc;
      local.pipeline.window.size = N;
      const PipelineResult result = track(local, events, &gt);
      row.mean_dt = result.stats.mean_dt;
      row.report = evaluate(result, gt, local);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    return row;
  };

  std::vector<SweepRow> rows;
  rows.reserve(sizes.size());
  if (jobs <= 1) {
    for (std::int64_t N : sizes) rows.push_back(run_one(N));
    return rows;
  }
  std::vector<std::future<SweepRow>> pending;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (pending.size() == static_cast<std::size_t>(jobs)) {
      rows.push_back(pending.front().get());
      pending.erase(pending.begin());
    }
    pending.push_back(std::async(std::launch::async, run_one, sizes[i]));
  }
  for (auto& f : pending) rows.push_back(f.get());
  return rows;
}

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
  out << kSweepHeader << '\n';
  for (const auto& row : rows) {
    std::ostringstream n;
    n.precision(10);
    n << row.n;
    out << row.N << ',' << n.str() << ',';
    if (!row.report) {
      out << "nan,nan,nan,nan,nan,nan\n";
      continue;
    }
    const auto& r = *row.report;
    out << format_optional(r.e_x) << ',' << format_optional(r.e_gt) << ','
        << format_optional(r.precision) << ',' << format_optional(r.recall) << ','
        << format_optional(r.coverage) << ',' << format_optional(row.mean_dt) << '\n';
  }
}

int cmd_sweep(const SweepOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, "sweep", [&] {
    RunConfig rc = load_or_default(opts.config_path);
    opts.overrides.apply(rc);
    if (opts.sizes.empty()) throw ConfigError("--N needs at least one window size");
    for (std::int64_t N : opts.sizes) {
      if (N < 1) throw ConfigError("window sizes must be >= 1");
    }

    std::vector<Event> events;
    GroundTruth gt;
    if (!opts.events_path.empty()) {
      if (opts.groundtruth_path.empty()) throw ConfigError("--groundtruth is required with --events");
      events = read_events_file(opts.events_path,
                                opts.format.value_or(format_from_path(opts.events_path)),
                                rc.geometry);
      gt = read_groundtruth_file(opts.groundtruth_path);
    } else {
      if (!rc.scene) throw ConfigError("config has no scene; pass --events/--groundtruth");
      SimulationResult sim = simulate_scene(*rc.scene);
      events = std::move(sim.events);
      gt = std::move(sim.groundtruth);
    }

    const auto rows = sweep(rc, events, gt, opts.sizes, opts.jobs);
    for (const auto& row : rows) {
      if (!row.error.empty()) err << "N=" << row.N << " failed: " << row.error << '\n';
    }
    if (opts.out_path.empty()) {
      write_sweep_csv(out, rows);
    } else {
      auto file = open_output(opts.out_path);
      write_sweep_csv(file, rows);
    }
    return kExitOk;
  });
}

// --- bench -----------------------------------------------------------------

BenchResult bench_windowing(const BenchOptions& opts) {
  opts.geometry.validate();
  Rng rng(opts.seed);
  std::vector<Event> events(static_cast<std::size_t>(opts.events));
  double t = 0.0;
  for (auto& e : events) {
    t += rng.exponential(1e6);
    e = {t, static_cast<std::uint16_t>(rng.below(static_cast<std::uint64_t>(opts.geometry.width))),
         static_cast<std::uint16_t>(rng.below(static_cast<std::uint64_t>(opts.geometry.height))),
         static_cast<std::int8_t>(rng.bernoulli(0.5) ? 1 : -1)};
  }

  BenchResult r;
  EventWindower windower(opts.N);
  EventTensor tensor;
  double checksum = 0.0;
  const auto start = std::chrono::steady_clock::now();
  for (const Event& e : events) {
    if (auto w = windower.push(e)) {
      build_event_tensor_into(*w, opts.geometry, opts.bins, tensor);
      checksum += tensor.grid[tensor.offset(0, w->events.front().y, w->events.front().x)];
      ++r.windows;
    }
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  r.events = opts.events;
  r.events_per_second = r.seconds > 0.0 ? static_cast<double>(r.events) / r.seconds
                                        : std::numeric_limits<double>::infinity();
  if (!std::isfinite(checksum)) throw Error("bench checksum is not finite");
  return r;
}

int cmd_bench(const BenchOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, "bench", [&] {
    const BenchResult r = bench_windowing(opts);
    out << "events: " << r.events << '\n'
        << "windows: " << r.windows << " (N=" << opts.N << ", bins=" << opts.bins << ", "
        << opts.geometry.width << "x" << opts.geometry.height << ")\n"
        << "elapsed: " << r.seconds << " s\n"
        << "throughput: " << r.events_per_second << " events/s\n";
    return kExitOk;
  });
}

}  // namespace evtrack
