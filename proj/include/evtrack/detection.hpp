#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "evtrack/events.hpp"
#include "evtrack/geometry.hpp"
#include "evtrack/kalman.hpp"

namespace evtrack {

class GroundTruth;

struct Detection {
  BBox bbox;
  double confidence = 0.0;  ///< [0, 1]
  int class_id = 0;
  double t = 0.0;  ///< timestamp of the source window

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct NoDetection {
  double t = 0.0;
};

using DetectorOutcome = std::variant<Measurement, NoDetection>;

inline double outcome_time(const DetectorOutcome& o) {
  return std::visit([](const auto& v) { return v.t; }, o);
}

/// How the measurement covariance R is assigned.
struct RPolicy {
  enum class Mode {
    fixed,                ///< R = sigma^2 I
    inverse_confidence,   ///< R = sigma^2 / confidence I (extension)
  };
  Mode mode = Mode::fixed;
  double sigma = 3.0;  ///< px

  Mat2 covariance(double confidence) const;
};

/// Keeps detections of target_class and returns the centre of the most
/// confident one. Ties go to the lower x_min, then y_min, x_max, y_max, so the
/// result does not depend on input order. The measurement time is the
/// detection's window time.
DetectorOutcome select_measurement(std::span<const Detection> detections, int target_class,
                                   const RPolicy& policy, double window_time);

/// Produces the candidate boxes for a window.
class Detector {
 public:
  virtual ~Detector() = default;

  /// `tensor` is the window's voxel grid; detectors that work on raw events
  /// may ignore it.
  virtual std::vector<Detection> detect(const EventWindow& window, const EventTensor& tensor) = 0;

  virtual std::string name() const = 0;
};

struct OracleNoise {
  double sigma = 0.0;           ///< edge jitter, px
  double p_miss = 0.0;
  double p_false_positive = 0.0;
  double confidence_min = 0.5;
  double confidence_max = 1.0;
  int class_id = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Groundtruth-driven stand-in for a neural detector.
///
/// With probability 1 - p_miss it reports the interpolated groundtruth box at
/// t_end with every edge jittered by N(0, sigma^2); with probability p_fp it
/// adds a box of the same size at a uniform position in the frame. The random
/// stream of window k depends only on (seed, k).
std::vector<Detection> oracle_detect(const EventWindow& window, const GroundTruth& gt,
                                     const SensorGeometry& geometry, const OracleNoise& noise);

class OracleDetector final : public Detector {
 public:
  OracleDetector(const GroundTruth& gt, SensorGeometry geometry, OracleNoise noise);

  std::vector<Detection> detect(const EventWindow& window, const EventTensor& tensor) override;
  std::string name() const override { return "oracle"; }

 private:
  const GroundTruth& gt_;
  SensorGeometry geometry_;
  OracleNoise noise_;
};

}  // namespace evtrack
