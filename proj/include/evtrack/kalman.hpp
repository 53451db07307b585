#pragma once

#include <cstdint>
#include <optional>

#include <Eigen/Dense>

namespace evtrack {

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix4d;
using Mat42 = Eigen::Matrix<double, 4, 2>;
using Mat24 = Eigen::Matrix<double, 2, 4>;

/// State transition of the sampled double integrator over an interval tau.
struct Transition {
  Mat4 F;   ///< position += tau * velocity
  Mat42 G;  ///< acceleration input gain
};

/// F(tau) and G(tau) for state [x, y, vx, vy]. Throws DomainError for
/// negative or non-finite tau.
Transition transition(double tau);

/// Observation matrix selecting the position components.
const Mat24& observation_matrix();

/// How the acceleration disturbance is turned into a discrete covariance.
enum class NoiseDiscretization {
  /// G(tau) Q G(tau)^T, Q being the covariance of a piecewise-constant
  /// acceleration. This is the form the filter and the continuous query use.
  sampled,
  /// Exact integral for white acceleration with spectral density Q
  /// (tau^3/3, tau^2/2, tau blocks). Composes additively across splits.
  integrated,
};

struct MotionModel {
  Mat2 Q = Mat2::Identity() * 500.0;  ///< px^2/s^4
  NoiseDiscretization discretization = NoiseDiscretization::sampled;

  static MotionModel isotropic(double q, NoiseDiscretization d = NoiseDiscretization::sampled) {
    return {Mat2::Identity() * q, d};
  }

  /// Discrete process covariance over tau.
  Mat4 process_noise(double tau) const;

  /// Throws ConfigError unless Q is symmetric positive semi-definite.
  void validate() const;
};

/// Filter state: mean [x, y, vx, vy], covariance, validity time and the index
/// of the last processed window.
struct StateEstimate {
  Vec4 x = Vec4::Zero();
  Mat4 P = Mat4::Identity();
  double t = 0.0;
  std::optional<std::int64_t> k;

  Vec2 position() const { return x.head<2>(); }
  Vec2 velocity() const { return x.tail<2>(); }
};

/// Position measurement with its noise covariance.
struct Measurement {
  Vec2 z = Vec2::Zero();
  double t = 0.0;
  Mat2 R = Mat2::Identity();
};

/// Open-loop propagation by tau. Throws DomainError if tau < 0.
StateEstimate predict(const StateEstimate& s, double tau, const MotionModel& m);

/// Same as predict(s, t - s.t, m) but stamps the result with exactly t.
StateEstimate predict_to(const StateEstimate& s, double t, const MotionModel& m);

/// Measurement update at s.t.
///
/// Requires s.t == z.t up to rounding (DomainError otherwise). Throws
/// FilterError when the innovation covariance is not positive definite or its
/// condition number exceeds kMaxInnovationCondition. The covariance is
/// symmetrized after the update.
StateEstimate update(const StateEstimate& s, const Measurement& z);

inline constexpr double kMaxInnovationCondition = 1e12;

/// Continuous-time estimate at t >= s.t. Pure; throws DomainError for t < s.t.
StateEstimate query(const StateEstimate& s, double t, const MotionModel& m);

/// Squared Mahalanobis distance of the innovation z - H x.
double innovation_distance2(const StateEstimate& s, const Measurement& z);

/// Chi-square quantile for 2 degrees of freedom at 99%.
inline constexpr double kGateChi2_99 = 9.21034037197618;

/// Symmetric and Cholesky-factorizable (eigenvalues > 0 up to rounding).
bool is_spd(const Mat4& P);
bool is_spd(const Mat2& P);

/// Sequential multi-rate filter. Predicts to every window time and applies
/// measurements in non-decreasing time order.
class MultiRateKalmanFilter {
 public:
  MultiRateKalmanFilter(StateEstimate initial, MotionModel model);

  const StateEstimate& state() const noexcept { return state_; }
  const MotionModel& model() const noexcept { return model_; }

  /// Prediction-only step to time t (>= current time). Records window index k.
  void advance(double t, std::optional<std::int64_t> k = std::nullopt);

  /// Predict to z.t and correct. Throws OrderingError when z.t precedes the
  /// current state time.
  void correct(const Measurement& z, std::optional<std::int64_t> k = std::nullopt);

  /// Replaces the state outright (used for measurement-based initialization).
  void reset(StateEstimate s) { state_ = std::move(s); }

  StateEstimate query(double t) const { return evtrack::query(state_, t, model_); }

 private:
  StateEstimate state_;
  MotionModel model_;
  std::size_t updates_ = 0;
};

}  // namespace evtrack
