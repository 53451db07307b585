#include "evtrack/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include <spdlog/spdlog.h>

#include "evtrack/error.hpp"

namespace evtrack {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

/// Output of the detection stage for one window.
struct DetectedWindow {
  std::int64_t k = 0;
  double t_end = 0.0;
  std::vector<Detection> detections;
  bool failed = false;
};

/// Tensor + detector for one window; maps recoverable detector errors to an
/// empty result.
class DetectionStage {
 public:
  DetectionStage(const PipelineConfig& cfg, Detector& detector, StageTiming& timing)
      : cfg_(cfg), detector_(detector), timing_(timing) {}

  DetectedWindow run(const EventWindow& window) {
    DetectedWindow out{window.index, window.t_end(), {}, false};
    auto t0 = Clock::now();
    build_event_tensor_into(window, cfg_.geometry, cfg_.window.bins, tensor_);
    timing_.tensor += seconds_since(t0);

    t0 = Clock::now();
    try {
      out.detections = detector_.detect(window, tensor_);
    } catch (const ConnectionError& e) {
      spdlog::warn("window {}: detector connection failed, treating as no detection: {}",
                   window.index, e.what());
      out.failed = true;
    } catch (const BackendError& e) {
      spdlog::warn("window {}: {}", window.index, e.what());
      out.failed = true;
    }
    timing_.detection += seconds_since(t0);
    for (auto& d : out.detections) d.t = out.t_end;
    return out;
  }

 private:
  const PipelineConfig& cfg_;
  Detector& detector_;
  StageTiming& timing_;
  EventTensor tensor_;
};

/// Filtering stage: owns the Kalman filter and the outputs.
class FilterStage {
 public:
  FilterStage(const PipelineConfig& cfg, PipelineResult& result, EstimateSnapshot* snapshot)
      : cfg_(cfg),
        result_(result),
        snapshot_(snapshot),
        filter_(cfg.init.initial_state(cfg.geometry), cfg.model),
        initialized_(cfg.init.policy == InitConfig::Policy::prior) {
    result_.trace = EstimateTrace(cfg.model);
    result_.trace.append(filter_.state());
    if (snapshot_ != nullptr) snapshot_->publish(filter_.state());
  }

  void consume(DetectedWindow w) {
    auto& stats = result_.stats;
    ++stats.windows;
    if (stats.windows == 1) {
      first_t_ = w.t_end;
    }
    last_t_ = w.t_end;
    if (w.failed) ++stats.detector_failures;

    const DetectorOutcome outcome =
        select_measurement(w.detections, cfg_.target_class, cfg_.r_policy, w.t_end);
    bool updated = false;
    if (const auto* z = std::get_if<Measurement>(&outcome)) {
      updated = apply(*z, w.k);
    }
    if (!updated) {
      filter_.advance(w.t_end, w.k);
      ++stats.missed;
    }

    const StateEstimate& s = filter_.state();
    result_.records.push_back({s, updated, s.t + cfg_.latency});
    result_.trace.append(s);
    result_.frames.push_back({w.k, w.t_end, std::move(w.detections)});
    if (snapshot_ != nullptr) snapshot_->publish(s);
  }

  void finish() {
    auto& stats = result_.stats;
    stats.mean_dt = stats.windows >= 2
                        ? (last_t_ - first_t_) / static_cast<double>(stats.windows - 1)
                        : std::numeric_limits<double>::quiet_NaN();
    result_.final_state = filter_.state();
  }

 private:
  bool apply(const Measurement& z, std::int64_t k) {
    if (!initialized_) {
      const Vec2 vvar = cfg_.init.velocity_variance(cfg_.geometry);
      StateEstimate s;
      s.x << z.z.x(), z.z.y(), 0.0, 0.0;
      s.P.setZero();
      s.P.topLeftCorner<2, 2>() = z.R;
      s.P(2, 2) = vvar.x();
      s.P(3, 3) = vvar.y();
      s.t = z.t;
      s.k = k;
      if (z.t < filter_.state().t) {
        throw OrderingError("measurement precedes the filter time", static_cast<std::size_t>(k));
      }
      filter_.reset(s);
      initialized_ = true;
    } else {
      if (cfg_.gate) {
        const StateEstimate predicted = predict_to(filter_.state(), z.t, cfg_.model);
        if (innovation_distance2(predicted, z) > kGateChi2_99) {
          ++result_.stats.gated;
          return false;
        }
      }
      filter_.correct(z, k);
    }
    ++result_.stats.accepted;
    if (!result_.first_measurement_time) result_.first_measurement_time = z.t;
    return true;
  }

  const PipelineConfig& cfg_;
  PipelineResult& result_;
  EstimateSnapshot* snapshot_;
  MultiRateKalmanFilter filter_;
  bool initialized_;
  double first_t_ = 0.0;
  double last_t_ = 0.0;
};

void run_sequential(const EventSource& source, const PipelineConfig& cfg, Detector& detector,
                    EventWindower& windower, PipelineResult& result, FilterStage& filter) {
  auto& timing = result.stats.timing;
  DetectionStage detect(cfg, detector, timing);
  auto t0 = Clock::now();
  while (auto e = source()) {
    auto window = windower.push(*e);
    if (!window) continue;
    timing.windowing += seconds_since(t0);
    DetectedWindow dw = detect.run(*window);
    auto tf = Clock::now();
    filter.consume(std::move(dw));
    timing.filtering += seconds_since(tf);
    t0 = Clock::now();
  }
  timing.windowing += seconds_since(t0);
}

void run_concurrent(const EventSource& source, const PipelineConfig& cfg, Detector& detector,
                    EventWindower& windower, PipelineResult& result, FilterStage& filter) {
  BoundedQueue<EventWindow> windows(cfg.queue_capacity);
  BoundedQueue<DetectedWindow> detected(cfg.queue_capacity);
  std::exception_ptr window_error;
  std::exception_ptr detect_error;
  StageTiming window_timing;
  StageTiming detect_timing;

  std::thread window_thread([&] {
    try {
      auto t0 = Clock::now();
      while (auto e = source()) {
        if (auto w = windower.push(*e)) {
          window_timing.windowing += seconds_since(t0);
          if (!windows.push(std::move(*w))) return;
          t0 = Clock::now();
        }
      }
      window_timing.windowing += seconds_since(t0);
    } catch (...) {
      window_error = std::current_exception();
    }
    windows.close();
  });

  std::thread detect_thread([&] {
    try {
      DetectionStage stage(cfg, detector, detect_timing);
      while (auto w = windows.pop()) {
        if (!detected.push(stage.run(*w))) break;
      }
    } catch (...) {
      detect_error = std::current_exception();
      windows.close();
    }
    detected.close();
  });

  std::exception_ptr filter_error;
  try {
    while (auto dw = detected.pop()) {
      auto tf = Clock::now();
      filter.consume(std::move(*dw));
      result.stats.timing.filtering += seconds_since(tf);
    }
  } catch (...) {
    filter_error = std::current_exception();
    windows.close();
    detected.close();
  }
  window_thread.join();
  detect_thread.join();

  result.stats.timing.windowing = window_timing.windowing;
  result.stats.timing.tensor = detect_timing.tensor;
  result.stats.timing.detection = detect_timing.detection;

  if (window_error) std::rethrow_exception(window_error);
  if (detect_error) std::rethrow_exception(detect_error);
  if (filter_error) std::rethrow_exception(filter_error);
}

}  // namespace

StateEstimate InitConfig::initial_state(const SensorGeometry& geometry) const {
  StateEstimate s;
  if (x0) {
    s.x = *x0;
  } else {
    s.x << geometry.width / 2.0, geometry.height / 2.0, 0.0, 0.0;
  }
  if (P0) {
    s.P = *P0;
  } else {
    const Vec2 vvar = velocity_variance(geometry);
    s.P.setZero();
    s.P(0, 0) = static_cast<double>(geometry.width) * geometry.width;
    s.P(1, 1) = static_cast<double>(geometry.height) * geometry.height;
    s.P(2, 2) = vvar.x();
    s.P(3, 3) = vvar.y();
  }
  s.t = t0;
  return s;
}

Vec2 InitConfig::velocity_variance(const SensorGeometry& geometry) const {
  const double w = geometry.width / horizon;
  const double h = geometry.height / horizon;
  return {w * w, h * h};
}

void PipelineConfig::validate() const {
  geometry.validate();
  window.events_per_window(geometry);
  model.validate();
  if (!(init.horizon > 0.0)) throw ConfigError("init horizon must be > 0");
  if (!(r_policy.sigma > 0.0)) throw ConfigError("measurement sigma must be > 0");
  if (!(latency >= 0.0)) throw ConfigError("latency must be >= 0");
  if (init.P0 && !is_spd(*init.P0)) throw ConfigError("initial covariance must be SPD");
}

PipelineResult run_pipeline(const EventSource& source, const PipelineConfig& cfg,
                            Detector& detector, EstimateSnapshot* snapshot) {
  cfg.validate();
  PipelineResult result;
  EventWindower windower(cfg.window.events_per_window(cfg.geometry));
  result.stats.events_per_window = windower.events_per_window();
  FilterStage filter(cfg, result, snapshot);

  if (cfg.concurrent) {
    run_concurrent(source, cfg, detector, windower, result, filter);
  } else {
    run_sequential(source, cfg, detector, windower, result, filter);
  }
  filter.finish();
  result.stats.events = static_cast<std::int64_t>(windower.events_seen());
  result.stats.pending_events = static_cast<std::int64_t>(windower.pending().size());
  return result;
}

PipelineResult run_pipeline(std::span<const Event> events, const PipelineConfig& cfg,
                            Detector& detector, EstimateSnapshot* snapshot) {
  std::size_t i = 0;
  EventSource source = [&]() -> std::optional<Event> {
    if (i == events.size()) return std::nullopt;
    return events[i++];
  };
  return run_pipeline(source, cfg, detector, snapshot);
}

}  // namespace evtrack
