#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "evtrack/detection.hpp"
#include "evtrack/events.hpp"
#include "evtrack/kalman.hpp"
#include "evtrack/trace.hpp"

namespace evtrack {

/// Fixed-capacity FIFO between pipeline stages. close() wakes everyone:
/// producers then fail to push, consumers drain what is left.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  bool push(T value) {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(value));
    not_empty_.notify_one();
    return true;
  }

  std::optional<T> pop() {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T value = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return value;
  }

  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::mutex mutex_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
  std::deque<T> items_;
  bool closed_ = false;
};

struct InitConfig {
  enum class Policy {
    /// Diffuse prior until the first measurement, which then sets the
    /// position (velocity 0, large velocity variance).
    automatic,
    /// Treat the prior as a genuine prior for every update.
    prior,
  };
  Policy policy = Policy::automatic;
  std::optional<Vec4> x0;  ///< default [W/2, H/2, 0, 0]
  std::optional<Mat4> P0;  ///< default diag(W^2, H^2, (W/T)^2, (H/T)^2)
  double t0 = 0.0;
  double horizon = 1.0;  ///< T used by the default velocity variance, seconds

  StateEstimate initial_state(const SensorGeometry& geometry) const;
  /// Velocity variances used when initializing from a measurement.
  Vec2 velocity_variance(const SensorGeometry& geometry) const;
};

struct PipelineConfig {
  SensorGeometry geometry{240, 180};
  WindowConfig window;
  MotionModel model;
  InitConfig init;
  int target_class = 0;
  RPolicy r_policy;
  bool gate = false;            ///< chi-square 99% innovation gate
  double latency = 0.0;         ///< constant availability offset, seconds
  bool concurrent = false;      ///< run windowing/detection/filtering on separate threads
  std::size_t queue_capacity = 8;

  void validate() const;
};

/// One row of the estimate log.
struct EstimateRecord {
  StateEstimate estimate;
  bool updated = false;       ///< a measurement was applied at this window
  double available_at = 0.0;  ///< estimate.t + latency
};

/// Everything the detector reported for one window.
struct FrameDetections {
  std::int64_t k = 0;
  double t = 0.0;
  std::vector<Detection> detections;
};

struct StageTiming {
  double windowing = 0.0;  ///< seconds of wall clock
  double tensor = 0.0;
  double detection = 0.0;
  double filtering = 0.0;
};

struct PipelineStats {
  std::int64_t events = 0;
  std::int64_t windows = 0;
  std::int64_t accepted = 0;          ///< measurements applied
  std::int64_t missed = 0;            ///< windows without a measurement
  std::int64_t gated = 0;             ///< measurements rejected by the gate
  std::int64_t detector_failures = 0; ///< connection/backend errors mapped to misses
  std::int64_t pending_events = 0;    ///< trailing events that never filled a window
  std::int64_t events_per_window = 0;
  double mean_dt = 0.0;               ///< mean window spacing; NaN with < 2 windows
  StageTiming timing;
};

struct PipelineResult {
  std::vector<EstimateRecord> records;  ///< one per completed window
  std::vector<FrameDetections> frames;  ///< one per completed window
  EstimateTrace trace;                  ///< initial prior plus every record
  StateEstimate final_state;
  std::optional<double> first_measurement_time;
  PipelineStats stats;

  /// Continuous-time estimate at t, propagated open-loop from the trace.
  StateEstimate query(double t) const { return trace.at(t); }
};

/// Read-only view of the latest estimate, safe to poll from other threads
/// while the pipeline runs. A reader always sees a complete estimate.
class EstimateSnapshot {
 public:
  void publish(const StateEstimate& s) {
    std::lock_guard lock(mutex_);
    latest_ = s;
  }
  std::optional<StateEstimate> latest() const {
    std::lock_guard lock(mutex_);
    return latest_;
  }

 private:
  mutable std::mutex mutex_;
  std::optional<StateEstimate> latest_;
};

using EventSource = std::function<std::optional<Event>()>;

/// Windows the stream, tensorizes, detects, then predicts/updates.
///
/// Connection and backend errors from the detector count as missed
/// detections; protocol errors propagate. Snapshot, when given, receives
/// every new estimate.
PipelineResult run_pipeline(const EventSource& source, const PipelineConfig& cfg,
                            Detector& detector, EstimateSnapshot* snapshot = nullptr);

PipelineResult run_pipeline(std::span<const Event> events, const PipelineConfig& cfg,
                            Detector& detector, EstimateSnapshot* snapshot = nullptr);

}  // namespace evtrack
