#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "evtrack/events.hpp"
#include "evtrack/geometry.hpp"
#include "evtrack/kalman.hpp"

namespace evtrack {

struct ConstantVelocity {
  Vec2 start = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();  ///< px/s
};

/// center + amplitude * sin(2 pi f t + phase), per axis.
struct Sinusoidal {
  Vec2 center = Vec2::Zero();
  Vec2 amplitude = Vec2::Zero();
  double frequency = 1.0;  ///< Hz
  Vec2 phase = Vec2::Zero();
};

struct Waypoint {
  double t = 0.0;
  Vec2 position = Vec2::Zero();
};

/// Piecewise-linear path; holds the first/last waypoint outside its span.
struct WaypointPath {
  std::vector<Waypoint> points;
};

using MotionSpec = std::variant<ConstantVelocity, Sinusoidal, WaypointPath>;

Vec2 motion_position(const MotionSpec& motion, double t);

/// Drifting sinusoidal texture multiplying the background intensity.
struct BackgroundTexture {
  double amplitude = 0.0;  ///< in [0, 1); 0 disables
  double period = 24.0;    ///< px
  Vec2 velocity = Vec2::Zero();
};

struct SceneConfig {
  SensorGeometry geometry{240, 180};
  double duration = 2.0;       ///< T_f, seconds
  double radius = 10.0;        ///< disk radius, px
  double contrast = 1.0;       ///< disk is (1 + contrast) times brighter, in (0, 1]
  double base_intensity = 0.5;
  MotionSpec motion = ConstantVelocity{};
  BackgroundTexture background;
  double contrast_threshold = 0.2;  ///< log-intensity step per event
  double noise_rate = 0.0;          ///< events / pixel / s
  std::uint64_t seed = 0;
  double render_rate = 10000.0;       ///< Hz
  double groundtruth_rate = 1000.0;   ///< Hz

  /// Throws ConfigError on degenerate values.
  void validate() const;
};

struct GroundTruthSample {
  double t = 0.0;
  Vec2 center = Vec2::Zero();
  BBox bbox;
};

/// Time-ordered target annotations, linearly interpolated between samples.
class GroundTruth {
 public:
  GroundTruth() = default;
  /// Throws ValidationError unless times strictly increase and every bbox
  /// contains its center.
  explicit GroundTruth(std::vector<GroundTruthSample> samples);

  const std::vector<GroundTruthSample>& samples() const noexcept { return samples_; }
  bool empty() const noexcept { return samples_.empty(); }
  double start_time() const;
  double end_time() const;
  bool covers(double t) const noexcept;

  /// Interpolated center; throws RangeError outside [start, end].
  Vec2 center(double t) const;
  /// Interpolated box (edges interpolated independently).
  BBox bbox(double t) const;

  /// Shifts every sample time by dt.
  GroundTruth shifted(double dt) const;

 private:
  std::size_t bracket(double t) const;

  std::vector<GroundTruthSample> samples_;
};

inline Vec2 groundtruth_center(const GroundTruth& gt, double t) { return gt.center(t); }

void write_groundtruth_csv(std::ostream& out, const GroundTruth& gt);
void write_groundtruth_file(const std::string& path, const GroundTruth& gt);
GroundTruth read_groundtruth_csv(std::istream& in);
GroundTruth read_groundtruth_file(const std::string& path);

struct SimulationResult {
  std::vector<Event> events;
  GroundTruth groundtruth;
  bool clipped = false;  ///< the disk left the frame at some groundtruth sample
};

/// Renders the scene at the internal clock and emits one event per contrast
/// threshold crossing of each pixel's log intensity, timestamps interpolated
/// inside the render step and quantized to integer nanoseconds. Noise events
/// are Poisson per pixel with random polarity. Deterministic in (cfg, seed).
SimulationResult simulate_scene(const SceneConfig& cfg);

/// Log intensity of pixel (x, y) at time t, the quantity the simulator
/// thresholds. The disk has a one-pixel linear edge ramp.
double scene_log_intensity(const SceneConfig& cfg, double x, double y, double t);

/// Seconds from integer nanoseconds, correctly rounded.
inline double ns_to_seconds(std::int64_t ns) { return static_cast<double>(ns) / 1e9; }

}  // namespace evtrack
