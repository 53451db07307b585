#include "evtrack/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "evtrack/error.hpp"

namespace evtrack {

void EvalWindow::validate() const {
  if (!(t_s >= 0.0) || !(t_s <= t_f) || !std::isfinite(t_f)) {
    throw ConfigError("evaluation window must satisfy 0 <= T_s <= T_f");
  }
}

namespace {

/// Coefficients c[0..4] of tr P(s) for s = time since the record.
std::array<double, 5> trace_polynomial(const StateEstimate& rec, const MotionModel& m) {
  const Mat4& P = rec.P;
  const double q = m.Q(0, 0) + m.Q(1, 1);
  std::array<double, 5> c{};
  c[0] = P.trace();
  c[1] = P(0, 2) + P(2, 0) + P(1, 3) + P(3, 1);
  c[2] = P(2, 2) + P(3, 3);
  if (m.discretization == NoiseDiscretization::sampled) {
    c[2] += q;
    c[4] += q / 4.0;
  } else {
    c[1] += q;
    c[3] += q / 3.0;
  }
  return c;
}

double integrate_polynomial(const std::array<double, 5>& c, double a, double b) {
  double total = 0.0;
  double pa = a, pb = b;
  for (std::size_t n = 0; n < c.size(); ++n) {
    total += c[n] * (pb - pa) / static_cast<double>(n + 1);
    pa *= a;
    pb *= b;
  }
  return total;
}

double evaluate_polynomial(const std::array<double, 5>& c, double s) {
  double v = 0.0;
  for (std::size_t n = c.size(); n-- > 0;) v = v * s + c[n];
  return v;
}

constexpr std::array<double, 5> kGaussNodes = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                               0.5384693101056831, 0.9061798459386640};
constexpr std::array<double, 5> kGaussWeights = {0.2369268850561891, 0.4786286704993665,
                                                 0.5688888888888889, 0.4786286704993665,
                                                 0.2369268850561891};

}  // namespace

double error_cov(const EstimateTrace& trace, const EvalWindow& window) {
  window.validate();
  const auto records = trace.records();
  std::size_t i = trace.segment_index(window.t_s);
  if (window.t_f == window.t_s) {
    const auto c = trace_polynomial(records[i], trace.model());
    return std::sqrt(std::max(0.0, evaluate_polynomial(c, window.t_s - records[i].t)));
  }
  double integral = 0.0;
  double a = window.t_s;
  while (a < window.t_f) {
    const double b = i + 1 < records.size() ? std::min(records[i + 1].t, window.t_f) : window.t_f;
    if (b > a) {
      const auto c = trace_polynomial(records[i], trace.model());
      integral += integrate_polynomial(c, a - records[i].t, b - records[i].t);
    }
    a = b;
    ++i;
  }
  return std::sqrt(std::max(0.0, integral / (window.t_f - window.t_s)));
}

double error_gt(const EstimateTrace& trace, const GroundTruth& gt, const EvalWindow& window) {
  window.validate();
  if (!gt.covers(window.t_s) || !gt.covers(window.t_f)) {
    throw RangeError("groundtruth does not cover the evaluation window");
  }
  const auto records = trace.records();
  auto squared_error = [&](std::size_t rec, double tau) {
    const StateEstimate& s = records[rec];
    const double dt = tau - s.t;
    const Vec2 est = s.x.head<2>() + dt * s.x.tail<2>();
    return (gt.center(tau) - est).squaredNorm();
  };

  std::size_t rec = trace.segment_index(window.t_s);
  if (window.t_f == window.t_s) return std::sqrt(squared_error(rec, window.t_s));

  std::vector<double> cuts{window.t_s, window.t_f};
  for (const auto& s : records) {
    if (s.t > window.t_s && s.t < window.t_f) cuts.push_back(s.t);
  }
  for (const auto& s : gt.samples()) {
    if (s.t > window.t_s && s.t < window.t_f) cuts.push_back(s.t);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  double integral = 0.0;
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    const double a = cuts[c];
    const double b = cuts[c + 1];
    while (rec + 1 < records.size() && records[rec + 1].t <= a) ++rec;
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    double seg = 0.0;
    for (std::size_t g = 0; g < kGaussNodes.size(); ++g) {
      seg += kGaussWeights[g] * squared_error(rec, mid + half * kGaussNodes[g]);
    }
    integral += half * seg;
  }
  return std::sqrt(std::max(0.0, integral / (window.t_f - window.t_s)));
}

double iou(const BBox& a, const BBox& b) {
  a.validate();
  b.validate();
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

PrecisionRecall precision_recall(std::span<const FrameDetections> frames, const GroundTruth& gt,
                                 int target_class, double iou_threshold) {
  if (frames.empty()) throw MetricError("precision/recall undefined for an empty frame set");
  PrecisionRecall r;
  for (const auto& frame : frames) {
    const auto n = static_cast<std::int64_t>(frame.detections.size());
    if (!gt.covers(frame.t)) {
      r.fp += n;
      continue;
    }
    const BBox truth = gt.bbox(frame.t);
    double best = -1.0;
    for (const auto& d : frame.detections) {
      if (d.class_id != target_class) continue;
      best = std::max(best, iou(d.bbox, truth));
    }
    if (best > iou_threshold) {
      ++r.tp;
      r.fp += n - 1;
    } else {
      ++r.fn;
      r.fp += n;
    }
  }
  if (r.tp + r.fp > 0) r.precision = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp);
  if (r.tp + r.fn > 0) r.recall = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
  return r;
}

double detection_coverage(std::span<const FrameDetections> frames) {
  if (frames.empty()) throw MetricError("coverage undefined for an empty frame set");
  const auto hit = std::count_if(frames.begin(), frames.end(),
                                 [](const FrameDetections& f) { return !f.detections.empty(); });
  return static_cast<double>(hit) / static_cast<double>(frames.size());
}

}  // namespace evtrack
