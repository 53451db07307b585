#include <doctest.h>

#include <cmath>

#include "evtrack/error.hpp"
#include "evtrack/metrics.hpp"
#include "evtrack/rng.hpp"
#include "oracles.hpp"

using namespace evtrack;

namespace {

GroundTruth line_gt(double t0, double t1, Vec2 p0, Vec2 v, int samples = 11) {
  std::vector<GroundTruthSample> s;
  for (int i = 0; i < samples; ++i) {
    const double t = t0 + (t1 - t0) * i / (samples - 1);
    const Vec2 c = p0 + v * (t - t0);
    s.push_back({t, c, {c.x() - 5, c.y() - 5, c.x() + 5, c.y() + 5}});
  }
  return GroundTruth(std::move(s));
}

EstimateTrace random_trace(Rng& rng, double t_end, const MotionModel& m) {
  EstimateTrace tr(m);
  double t = 0.0;
  while (t < t_end) {
    StateEstimate s;
    s.t = t;
    for (int i = 0; i < 4; ++i) s.x[i] = rng.normal(50, 20);
    Mat4 A;
    for (int i = 0; i < 16; ++i) A(i / 4, i % 4) = rng.normal();
    s.P = A * A.transpose() + Mat4::Identity();
    tr.append(s);
    t += rng.uniform(0.01, 0.3);
  }
  return tr;
}

}  // namespace

TEST_CASE("E_x with P = I, Q = 0 over one unit segment is sqrt(14/3)") {
  EstimateTrace tr(MotionModel::isotropic(0));
  tr.append({Vec4::Zero(), Mat4::Identity(), 0.0, 0});
  const double closed = error_cov(tr, {0.0, 1.0});
  CHECK(closed == doctest::Approx(std::sqrt(14.0 / 3.0)).epsilon(1e-14));
  const double quad = oracle::error_cov(tr, 0.0, 1.0, 1e-12);
  CHECK(std::abs(closed - quad) < 1e-8);
}

TEST_CASE("E_x with constant covariance is sqrt(tr P)") {
  EstimateTrace tr(MotionModel::isotropic(0));
  Mat4 P = Mat4::Zero();
  P(0, 0) = 2;
  P(1, 1) = 7;
  tr.append({Vec4::Zero(), P, 0.0, 0});
  CHECK(error_cov(tr, {0.0, 3.0}) == doctest::Approx(3.0));
  CHECK(error_cov(tr, {1.0, 1.0}) == doctest::Approx(3.0));
}

TEST_CASE("closed-form E_x matches adaptive quadrature") {
  Rng rng(99);
  for (const auto d : {NoiseDiscretization::sampled, NoiseDiscretization::integrated}) {
    for (int i = 0; i < 25; ++i) {
      const MotionModel m{Mat2::Identity() * rng.uniform(0, 1000), d};
      const auto tr = random_trace(rng, 2.0, m);
      const double ts = rng.uniform(0.0, 0.5), tf = rng.uniform(1.0, 2.5);
      const double closed = error_cov(tr, {ts, tf});
      const double quad = oracle::error_cov(tr, ts, tf, 1e-11);
      CHECK(std::abs(closed - quad) <= 1e-6 * quad);
    }
  }
}

TEST_CASE("E_x before the first record is a range error") {
  EstimateTrace tr;
  tr.append({Vec4::Zero(), Mat4::Identity(), 1.0, 0});
  CHECK_THROWS_AS(error_cov(tr, {0.5, 2.0}), RangeError);
  CHECK_THROWS_AS(error_cov(tr, {2.0, 1.5}), ConfigError);
}

TEST_CASE("E_gt: identical trace is zero, constant offset is d*sqrt(2)") {
  const Vec2 p0(10, 20), v(30, -5);
  const auto gt = line_gt(0.0, 2.0, p0, v);
  EstimateTrace exact(MotionModel::isotropic(0));
  exact.append({Vec4(p0.x(), p0.y(), v.x(), v.y()), Mat4::Identity(), 0.0, 0});
  CHECK(error_gt(exact, gt, {0.2, 1.8}) < 1e-12);
  const double d = 1.75;
  EstimateTrace off(MotionModel::isotropic(0));
  off.append({Vec4(p0.x() + d, p0.y() + d, v.x(), v.y()), Mat4::Identity(), 0.0, 0});
  off.append({Vec4(p0.x() + v.x() + d, p0.y() + v.y() + d, v.x(), v.y()), Mat4::Identity(), 1.0, 1});
  CHECK(std::abs(error_gt(off, gt, {0.0, 2.0}) - d * std::sqrt(2.0)) < 1e-9);
  CHECK_THROWS_AS(error_gt(off, gt, {0.0, 2.5}), RangeError);
}

TEST_CASE("E_gt matches a dense Riemann sum and is time-translation invariant") {
  Rng rng(3);
  for (int i = 0; i < 5; ++i) {
    const auto tr = random_trace(rng, 2.0, MotionModel::isotropic(500));
    std::vector<GroundTruthSample> s;
    for (int k = 0; k <= 40; ++k) {
      const double t = k * 0.05;
      const Vec2 c(rng.normal(50, 20), rng.normal(50, 20));
      s.push_back({t, c, {c.x() - 3, c.y() - 3, c.x() + 3, c.y() + 3}});
    }
    const GroundTruth gt(s);
    const double ours = error_gt(tr, gt, {0.1, 1.9});
    const double dense = oracle::error_gt_dense(tr, gt, 0.1, 1.9, 1000000);
    CHECK(std::abs(ours - dense) <= 1e-4 * dense);

    EstimateTrace moved(tr.model());
    for (auto r : tr.records()) {
      r.t += 10.0;
      moved.append(r);
    }
    CHECK(error_gt(moved, gt.shifted(10.0), {10.1, 11.9}) ==
          doctest::Approx(ours).epsilon(1e-9));
  }
}

TEST_CASE("iou examples") {
  const BBox a{0, 0, 2, 2}, b{1, 0, 3, 2}, c{5, 5, 6, 6};
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, c) == 0.0);
  CHECK(iou(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(iou(a, b) == iou(b, a));
  CHECK_THROWS_AS(iou(BBox{0, 0, 0, 1}, a), ValidationError);
}

TEST_CASE("precision / recall arithmetic TP=3 FP=1 FN=2") {
  // Frames 0-2 hit, frame 3 has a wrong box (FP + FN), frame 4 is empty (FN).
  const auto gt = line_gt(0.0, 4.0, Vec2(50, 50), Vec2(0, 0), 5);
  std::vector<FrameDetections> frames;
  for (int k = 0; k < 5; ++k) frames.push_back({k, static_cast<double>(k), {}});
  for (int k = 0; k < 3; ++k) frames[k].detections.push_back({gt.bbox(k), 0.9, 0, double(k)});
  frames[3].detections.push_back({{0, 0, 5, 5}, 0.9, 0, 3.0});
  const auto pr = precision_recall(frames, gt, 0);
  CHECK(pr.tp == 3);
  CHECK(pr.fp == 1);
  // Frame 3 has no TP, so it also counts as FN alongside frame 4.
  CHECK(pr.fn == 2);
  CHECK(*pr.precision == doctest::Approx(0.75));
  CHECK(*pr.recall == doctest::Approx(0.6));
}

TEST_CASE("precision / recall hand-built 10 windows gives (7/8, 7/9)") {
  // Target present on windows 0..8; window 9 is after the annotation ends.
  const auto gt = line_gt(0.0, 8.0, Vec2(40, 40), Vec2(2, 1), 9);
  std::vector<FrameDetections> frames;
  for (int k = 0; k < 10; ++k) frames.push_back({k, static_cast<double>(k), {}});
  for (int k : {0, 1, 2, 3, 5, 6, 8}) {
    frames[k].detections.push_back({gt.bbox(k), 0.8, 0, double(k)});
  }
  // Windows 4 and 7 are misses; window 9 holds a false positive.
  frames[9].detections.push_back({{0, 0, 10, 10}, 0.7, 0, 9.0});
  const auto pr = precision_recall(frames, gt, 0);
  CHECK(pr.tp == 7);
  CHECK(pr.fp == 1);
  CHECK(pr.fn == 2);
  CHECK(*pr.precision == doctest::Approx(7.0 / 8.0).epsilon(1e-15));
  CHECK(*pr.recall == doctest::Approx(7.0 / 9.0).epsilon(1e-15));
  CHECK(detection_coverage(frames) == doctest::Approx(0.8));
}

TEST_CASE("precision / recall corner cases") {
  const auto gt = line_gt(0.0, 2.0, Vec2(40, 40), Vec2(0, 0), 3);
  std::vector<FrameDetections> frames;
  CHECK_THROWS_AS(precision_recall(frames, gt, 0), MetricError);
  CHECK_THROWS_AS(detection_coverage(frames), MetricError);
  for (int k = 0; k < 3; ++k) frames.push_back({k, double(k), {{gt.bbox(k), 1.0, 0, double(k)}}});
  auto pr = precision_recall(frames, gt, 0);
  CHECK(*pr.precision == 1.0);
  CHECK(*pr.recall == 1.0);
  CHECK(detection_coverage(frames) == 1.0);
  // Wrong class: never a TP.
  pr = precision_recall(frames, gt, 1);
  CHECK(pr.tp == 0);
  CHECK(pr.fp == 3);
  for (auto& f : frames) f.detections.clear();
  pr = precision_recall(frames, gt, 0);
  CHECK_FALSE(pr.precision);
  CHECK(*pr.recall == 0.0);
  CHECK(detection_coverage(frames) == 0.0);
}

TEST_CASE("metrics scale linearly with space") {
  Rng rng(8);
  const auto tr = random_trace(rng, 1.0, MotionModel::isotropic(100));
  const auto gt = line_gt(0.0, 1.0, Vec2(30, 30), Vec2(10, 5));
  const double s = 2.5;
  EstimateTrace scaled(MotionModel::isotropic(100 * s * s));
  for (auto r : tr.records()) {
    r.x *= s;
    r.P *= s * s;
    scaled.append(r);
  }
  std::vector<GroundTruthSample> gs = gt.samples();
  for (auto& g : gs) {
    g.center *= s;
    g.bbox = {g.bbox.x_min * s, g.bbox.y_min * s, g.bbox.x_max * s, g.bbox.y_max * s};
  }
  const GroundTruth gt2(gs);
  CHECK(error_cov(scaled, {0.0, 1.0}) == doctest::Approx(s * error_cov(tr, {0.0, 1.0})));
  CHECK(error_gt(scaled, gt2, {0.0, 1.0}) == doctest::Approx(s * error_gt(tr, gt, {0.0, 1.0})));
}
