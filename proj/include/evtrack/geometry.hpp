#pragma once

#include <cstdint>

namespace evtrack {

/// Sensor size in pixels. Always supplied by the caller, never inferred.
struct SensorGeometry {
  int width = 0;
  int height = 0;

  std::int64_t pixel_count() const noexcept {
    return static_cast<std::int64_t>(width) * height;
  }
  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width && y < height;
  }

  /// Throws ConfigError unless both sides are positive.
  void validate() const;

  friend bool operator==(const SensorGeometry&, const SensorGeometry&) = default;
};

/// Axis-aligned box in pixel coordinates.
struct BBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const noexcept { return x_max - x_min; }
  double height() const noexcept { return y_max - y_min; }
  double area() const noexcept { return width() * height(); }
  double center_x() const noexcept { return 0.5 * (x_min + x_max); }
  double center_y() const noexcept { return 0.5 * (y_min + y_max); }
  bool valid() const noexcept { return x_min < x_max && y_min < y_max; }

  /// Throws ValidationError unless x_min < x_max and y_min < y_max.
  void validate() const;

  friend bool operator==(const BBox&, const BBox&) = default;
};

}  // namespace evtrack
