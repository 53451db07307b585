#pragma once

#include <span>
#include <vector>

#include "evtrack/kalman.hpp"

namespace evtrack {

/// Time-ordered filter estimates plus the motion model needed to evaluate the
/// continuous-time estimate between them. Between records i and i+1 (and
/// after the last one) the estimate is the open-loop query from record i.
class EstimateTrace {
 public:
  explicit EstimateTrace(MotionModel model = {}) : model_(std::move(model)) {}

  /// Appends a record. A record with the same time as the last one replaces
  /// it (same-instant update); an earlier time throws OrderingError.
  void append(const StateEstimate& s);

  const MotionModel& model() const noexcept { return model_; }
  std::span<const StateEstimate> records() const noexcept { return records_; }
  bool empty() const noexcept { return records_.empty(); }
  std::size_t size() const noexcept { return records_.size(); }
  double start_time() const;

  /// Index of the record governing time t (last record with time <= t).
  /// Throws RangeError when t precedes the first record.
  std::size_t segment_index(double t) const;

  /// Continuous-time estimate at t. Throws RangeError before the first record.
  StateEstimate at(double t) const;

 private:
  MotionModel model_;
  std::vector<StateEstimate> records_;
};

}  // namespace evtrack
