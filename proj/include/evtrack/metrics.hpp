#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "evtrack/detection.hpp"
#include "evtrack/geometry.hpp"
#include "evtrack/pipeline.hpp"
#include "evtrack/simulate.hpp"
#include "evtrack/trace.hpp"

namespace evtrack {

/// Evaluation interval [t_s, t_f].
struct EvalWindow {
  double t_s = 0.0;
  double t_f = 0.0;

  /// Throws ConfigError unless 0 <= t_s <= t_f.
  void validate() const;
};

/// Root of the time-averaged covariance trace over the window:
/// sqrt( 1/(t_f - t_s) * integral tr P(tau) dtau ), P(tau) propagated from the
/// governing record. Each segment is a polynomial in tau integrated exactly.
/// With t_s == t_f this is sqrt(tr P(t_s)). Throws RangeError when the trace
/// starts after t_s.
double error_cov(const EstimateTrace& trace, const EvalWindow& window);

/// Root of the time-averaged squared distance between the interpolated
/// groundtruth centre and the estimated position. Gauss-Legendre (5 points)
/// on every segment between trace and groundtruth breakpoints. Throws
/// RangeError when either signal does not cover the window.
double error_gt(const EstimateTrace& trace, const GroundTruth& gt, const EvalWindow& window);

/// Intersection over union; 0 for disjoint boxes. Throws ValidationError on
/// degenerate boxes.
double iou(const BBox& a, const BBox& b);

struct PrecisionRecall {
  std::optional<double> precision;  ///< nullopt when TP + FP == 0
  std::optional<double> recall;     ///< nullopt when TP + FN == 0
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
};

inline constexpr double kIouThreshold = 0.5;

/// Frame-level bookkeeping: in each frame the best-IoU detection of the
/// target class is a true positive if IoU > threshold; every other detection
/// is a false positive; a frame inside the groundtruth span without a true
/// positive counts one false negative. Frames outside the groundtruth span
/// have no target. Throws MetricError for an empty frame list.
PrecisionRecall precision_recall(std::span<const FrameDetections> frames, const GroundTruth& gt,
                                 int target_class, double iou_threshold = kIouThreshold);

/// Fraction of frames with at least one detection. Throws MetricError for an
/// empty frame list.
double detection_coverage(std::span<const FrameDetections> frames);

/// Fields of the evaluation report.
struct EvalReport {
  double e_x = 0.0;
  double e_gt = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<std::int64_t> tp, fp, fn;
  std::optional<double> coverage;
  double t_s = 0.0;
  double t_f = 0.0;
};

}  // namespace evtrack
