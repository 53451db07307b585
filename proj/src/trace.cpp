#include "evtrack/trace.hpp"

#include <algorithm>
#include <string>

#include "evtrack/error.hpp"

namespace evtrack {

void EstimateTrace::append(const StateEstimate& s) {
  if (!records_.empty()) {
    const double last = records_.back().t;
    if (s.t < last) {
      throw OrderingError("estimate trace times must be non-decreasing", records_.size());
    }
    if (s.t == last) {
      records_.back() = s;
      return;
    }
  }
  records_.push_back(s);
}

double EstimateTrace::start_time() const {
  if (records_.empty()) throw RangeError("empty estimate trace");
  return records_.front().t;
}

std::size_t EstimateTrace::segment_index(double t) const {
  if (records_.empty() || t < records_.front().t) {
    throw RangeError("time " + std::to_string(t) + " precedes the estimate trace");
  }
  auto it = std::upper_bound(records_.begin(), records_.end(), t,
                             [](double v, const StateEstimate& s) { return v < s.t; });
  return static_cast<std::size_t>(std::distance(records_.begin(), it)) - 1;
}

StateEstimate EstimateTrace::at(double t) const {
  return query(records_[segment_index(t)], t, model_);
}

}  // namespace evtrack
