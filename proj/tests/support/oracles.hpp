#pragma once

// Reference computations written independently of the library code paths
// they check: dense linear algebra, brute-force quadrature, direct loops.

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "evtrack/events.hpp"
#include "evtrack/kalman.hpp"
#include "evtrack/simulate.hpp"
#include "evtrack/trace.hpp"

namespace evtrack::oracle {

Eigen::Matrix4d F(double tau);
Eigen::Matrix<double, 4, 2> G(double tau);

/// Discrete process covariance from first principles.
Eigen::Matrix4d process_noise(double tau, const Eigen::Matrix2d& Q, NoiseDiscretization d);

/// tr P(t) for the open-loop propagation of `rec`.
double trace_at(const StateEstimate& rec, double t, const MotionModel& m);

/// Adaptive Simpson with absolute tolerance.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol);

/// E_x by adaptive quadrature, segment by segment.
double error_cov(const EstimateTrace& trace, double t_s, double t_f, double tol = 1e-10);

/// E_gt by midpoint sums on a uniform grid of n samples.
double error_gt_dense(const EstimateTrace& trace, const GroundTruth& gt, double t_s, double t_f,
                      std::int64_t n);

/// A measurement time with an optional measurement (none = prediction only).
struct BatchStep {
  double t = 0.0;
  std::optional<Eigen::Vector2d> z;
  Eigen::Matrix2d R = Eigen::Matrix2d::Identity();
};

struct BatchResult {
  Eigen::Vector4d x;
  Eigen::Matrix4d P;
};

/// Weighted least squares over (x0, w_1..w_n) of the whole sequence; returns
/// the estimate and covariance of the final state.
BatchResult batch_wls(const Eigen::Vector4d& x0, const Eigen::Matrix4d& P0, double t0,
                      const std::vector<BatchStep>& steps, const MotionModel& m);

/// Voxel grid from a direct loop over events.
std::vector<double> tensor(const EventWindow& w, int width, int height, int bins);

/// Per-pixel event counts from re-rendering every pixel at `substeps` times
/// the render rate and counting reference-level crossings.
std::vector<std::int64_t> pixel_event_counts(const SceneConfig& cfg, int substeps);

}  // namespace evtrack::oracle
