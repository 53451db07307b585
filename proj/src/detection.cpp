#include "evtrack/detection.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "evtrack/error.hpp"
#include "evtrack/rng.hpp"
#include "evtrack/simulate.hpp"

namespace evtrack {

Mat2 RPolicy::covariance(double confidence) const {
  const double var = sigma * sigma;
  if (mode == Mode::inverse_confidence) {
    return Mat2::Identity() * (var / std::max(confidence, 1e-3));
  }
  return Mat2::Identity() * var;
}

DetectorOutcome select_measurement(std::span<const Detection> detections, int target_class,
                                   const RPolicy& policy, double window_time) {
  const Detection* best = nullptr;
  auto key = [](const Detection& d) {
    // Larger confidence first, then smaller coordinates.
    return std::make_tuple(-d.confidence, d.bbox.x_min, d.bbox.y_min, d.bbox.x_max, d.bbox.y_max);
  };
  for (const Detection& d : detections) {
    if (d.class_id != target_class) continue;
    if (best == nullptr || key(d) < key(*best)) best = &d;
  }
  if (best == nullptr) return NoDetection{window_time};
  Measurement m;
  m.z = {best->bbox.center_x(), best->bbox.center_y()};
  m.t = window_time;
  m.R = policy.covariance(best->confidence);
  return m;
}

void OracleNoise::validate() const {
  if (!(sigma >= 0.0)) throw ConfigError("oracle sigma must be >= 0");
  if (!(p_miss >= 0.0 && p_miss <= 1.0)) throw ConfigError("p_miss must be in [0, 1]");
  if (!(p_false_positive >= 0.0 && p_false_positive <= 1.0)) {
    throw ConfigError("p_false_positive must be in [0, 1]");
  }
  if (!(confidence_min >= 0.0 && confidence_min <= confidence_max && confidence_max <= 1.0)) {
    throw ConfigError("oracle confidence range must satisfy 0 <= min <= max <= 1");
  }
}

std::vector<Detection> oracle_detect(const EventWindow& window, const GroundTruth& gt,
                                     const SensorGeometry& geometry, const OracleNoise& noise) {
  const double t = window.t_end();
  const BBox truth = gt.bbox(t);
  Rng rng(noise.seed, static_cast<std::uint64_t>(window.index) + 1);

  std::vector<Detection> out;
  // Draw every variate unconditionally so the stream layout is fixed.
  const bool miss = rng.bernoulli(noise.p_miss);
  double jitter[4];
  for (double& j : jitter) j = rng.normal(0.0, noise.sigma);
  const double conf = rng.uniform(noise.confidence_min, noise.confidence_max);
  const bool false_positive = rng.bernoulli(noise.p_false_positive);
  const double fp_u = rng.uniform();
  const double fp_v = rng.uniform();
  const double fp_conf = rng.uniform(noise.confidence_min, noise.confidence_max);

  if (!miss) {
    BBox box{truth.x_min + jitter[0], truth.y_min + jitter[1], truth.x_max + jitter[2],
             truth.y_max + jitter[3]};
    if (box.x_min > box.x_max) std::swap(box.x_min, box.x_max);
    if (box.y_min > box.y_max) std::swap(box.y_min, box.y_max);
    if (box.valid()) out.push_back({box, conf, noise.class_id, t});
  }
  if (false_positive) {
    const double w = truth.width();
    const double h = truth.height();
    // Same size as the target, anywhere inside the frame.
    const double x0 = fp_u * std::max(0.0, geometry.width - w);
    const double y0 = fp_v * std::max(0.0, geometry.height - h);
    out.push_back({{x0, y0, x0 + w, y0 + h}, fp_conf, noise.class_id, t});
  }
  return out;
}

OracleDetector::OracleDetector(const GroundTruth& gt, SensorGeometry geometry, OracleNoise noise)
    : gt_(gt), geometry_(geometry), noise_(noise) {
  noise_.validate();
}

std::vector<Detection> OracleDetector::detect(const EventWindow& window, const EventTensor&) {
  return oracle_detect(window, gt_, geometry_, noise_);
}

}  // namespace evtrack
