#include <algorithm>
#include "evtrack/kalman.hpp"

#include <cmath>
#include <string>

#include "evtrack/error.hpp"

namespace evtrack {

Transition transition(double tau) {
  if (!(tau >= 0.0) || !std::isfinite(tau)) {
    throw DomainError("transition interval must be finite and >= 0, got " + std::to_string(tau));
  }
  Transition tr;
  tr.F.setIdentity();
  tr.F(0, 2) = tau;
  tr.F(1, 3) = tau;
  tr.G.setZero();
  tr.G(0, 0) = 0.5 * tau * tau;
  tr.G(1, 1) = 0.5 * tau * tau;
  tr.G(2, 0) = tau;
  tr.G(3, 1) = tau;
  return tr;
}

const Mat24& observation_matrix() {
  static const Mat24 H = [] {
    Mat24 h = Mat24::Zero();
    h(0, 0) = 1.0;
    h(1, 1) = 1.0;
    return h;
  }();
  return H;
}

Mat4 MotionModel::process_noise(double tau) const {
  if (discretization == NoiseDiscretization::sampled) {
    const Mat42 G = transition(tau).G;
    return G * Q * G.transpose();
  }
  if (!(tau >= 0.0)) throw DomainError("process noise interval must be >= 0");
  const double t2 = tau * tau;
  Mat4 Qd;
  Qd.topLeftCorner<2, 2>() = Q * (t2 * tau / 3.0);
  Qd.topRightCorner<2, 2>() = Q * (t2 / 2.0);
  Qd.bottomLeftCorner<2, 2>() = Q * (t2 / 2.0);
  Qd.bottomRightCorner<2, 2>() = Q * tau;
  return Qd;
}

void MotionModel::validate() const {
  if (!Q.allFinite() || (Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + Q.norm())) {
    throw ConfigError("process noise Q must be finite and symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat2> eig(Q);
  if (eig.eigenvalues().minCoeff() < 0.0) {
    throw ConfigError("process noise Q must be positive semi-definite");
  }
}

StateEstimate predict(const StateEstimate& s, double tau, const MotionModel& m) {
  const Transition tr = transition(tau);
  StateEstimate out;
  out.x = tr.F * s.x;
  out.P = tr.F * s.P * tr.F.transpose() + m.process_noise(tau);
  out.P = 0.5 * (out.P + out.P.transpose()).eval();
  out.t = s.t + tau;
  out.k = s.k;
  return out;
}

StateEstimate predict_to(const StateEstimate& s, double t, const MotionModel& m) {
  if (t < s.t) {
    throw DomainError("cannot predict backwards from t=" + std::to_string(s.t) +
                      " to t=" + std::to_string(t));
  }
  StateEstimate out = predict(s, t - s.t, m);
  out.t = t;
  return out;
}

namespace {

bool same_instant(double a, double b) {
  return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

StateEstimate update(const StateEstimate& s, const Measurement& z) {
  if (!same_instant(s.t, z.t)) {
    throw DomainError("measurement at t=" + std::to_string(z.t) +
                      " does not match state time t=" + std::to_string(s.t));
  }
  const Mat24& H = observation_matrix();
  const Mat2 S = H * s.P * H.transpose() + z.R;

  Eigen::SelfAdjointEigenSolver<Mat2> eig(0.5 * (S + S.transpose()));
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || !std::isfinite(hi) || hi / lo > kMaxInnovationCondition) {
    throw FilterError("innovation covariance is singular or ill-conditioned");
  }

  Eigen::LLT<Mat2> llt(S);
  if (llt.info() != Eigen::Success) {
    throw FilterError("innovation covariance is not positive definite");
  }
  // L = P H^T S^-1, solved through the Cholesky factor.
  const Mat42 PHt = s.P * H.transpose();
  const Mat42 L = llt.solve(PHt.transpose()).transpose();

  StateEstimate out = s;
  out.x = s.x + L * (z.z - H * s.x);
  out.P = (Mat4::Identity() - L * H) * s.P;
  out.P = 0.5 * (out.P + out.P.transpose()).eval();
  return out;
}

StateEstimate query(const StateEstimate& s, double t, const MotionModel& m) {
  if (t < s.t) {
    throw DomainError("query time " + std::to_string(t) + " precedes estimate time " +
                      std::to_string(s.t));
  }
  if (t == s.t) return s;
  return predict_to(s, t, m);
}

double innovation_distance2(const StateEstimate& s, const Measurement& z) {
  const Mat24& H = observation_matrix();
  const Mat2 S = H * s.P * H.transpose() + z.R;
  const Vec2 nu = z.z - H * s.x;
  return nu.dot(S.ldlt().solve(nu));
}

bool is_spd(const Mat4& P) {
  if (!P.allFinite()) return false;
  if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + P.cwiseAbs().maxCoeff())) {
    return false;
  }
  Eigen::LLT<Mat4> llt(P);
  return llt.info() == Eigen::Success;
}

bool is_spd(const Mat2& P) {
  if (!P.allFinite()) return false;
  if (std::abs(P(0, 1) - P(1, 0)) > 1e-9 * (1.0 + P.cwiseAbs().maxCoeff())) return false;
  Eigen::LLT<Mat2> llt(P);
  return llt.info() == Eigen::Success;
}

MultiRateKalmanFilter::MultiRateKalmanFilter(StateEstimate initial, MotionModel model)
    : state_(std::move(initial)), model_(std::move(model)) {
  model_.validate();
}

void MultiRateKalmanFilter::advance(double t, std::optional<std::int64_t> k) {
  if (t < state_.t) {
    throw OrderingError("filter cannot move backwards to t=" + std::to_string(t), updates_);
  }
  state_ = predict_to(state_, t, model_);
  if (k) state_.k = k;
}

void MultiRateKalmanFilter::correct(const Measurement& z, std::optional<std::int64_t> k) {
  if (z.t < state_.t) {
    throw OrderingError("measurement at t=" + std::to_string(z.t) +
                            " precedes filter time t=" + std::to_string(state_.t),
                        updates_);
  }
  // Zero interval: plain update, F(0) = I.
  StateEstimate predicted = z.t == state_.t ? state_ : predict_to(state_, z.t, model_);
  state_ = update(predicted, z);
  if (k) state_.k = k;
  ++updates_;
}

}  // namespace evtrack
