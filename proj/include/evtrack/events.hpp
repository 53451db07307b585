#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "evtrack/geometry.hpp"

namespace evtrack {

/// A single brightness-change event.
struct Event {
  double t = 0.0;  ///< seconds
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::int8_t polarity = 1;  ///< +1 or -1

  friend bool operator==(const Event&, const Event&) = default;
};

enum class EventFormat { text, binary };

/// Picks the format from a file extension: ".bin"/".raw" are binary, anything
/// else is text.
EventFormat format_from_path(std::string_view path);

std::optional<EventFormat> parse_format_name(std::string_view name);

/// Size of one packed binary record: f64 t, u16 x, u16 y, i8 p (little-endian).
inline constexpr std::size_t kBinaryRecordSize = 13;

/// Pull-based decoder over an input stream.
///
/// Text format: one `<t> <x> <y> <p>` line per event, p in {0,1} with 0
/// decoded as -1. Blank lines and lines starting with '#' are skipped.
/// Binary format: packed 13-byte little-endian records with p in {-1,+1}.
///
/// Malformed input throws ParseError with the byte offset of the record. If a
/// geometry is given, coordinates outside it throw ValidationError.
class EventReader {
 public:
  EventReader(std::istream& in, EventFormat format,
              std::optional<SensorGeometry> geometry = std::nullopt);

  /// Next event in file order, or nullopt at end of input.
  std::optional<Event> next();

  /// Byte offset of the next unread record.
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::optional<Event> next_text();
  std::optional<Event> next_binary();
  void check_bounds(const Event& e, std::size_t record_offset) const;

  std::istream& in_;
  EventFormat format_;
  std::optional<SensorGeometry> geometry_;
  std::size_t offset_ = 0;
  std::string line_;
};

/// Reads a whole stream into memory.
std::vector<Event> read_events(std::istream& in, EventFormat format,
                               std::optional<SensorGeometry> geometry = std::nullopt);
std::vector<Event> read_events_file(const std::string& path, EventFormat format,
                                    std::optional<SensorGeometry> geometry = std::nullopt);

/// Decodes an in-memory buffer.
std::vector<Event> parse_events(std::string_view bytes, EventFormat format,
                                std::optional<SensorGeometry> geometry = std::nullopt);

void write_events(std::ostream& out, std::span<const Event> events, EventFormat format);
void write_events_file(const std::string& path, std::span<const Event> events,
                       EventFormat format);

/// Window size, either as an absolute count or as events per pixel.
struct WindowConfig {
  struct EventsPerPixel {
    double value;
  };

  std::variant<std::int64_t, EventsPerPixel> size = std::int64_t{10000};
  int bins = 5;

  static WindowConfig with_count(std::int64_t n, int bins = 5) { return {n, bins}; }
  static WindowConfig with_events_per_pixel(double n, int bins = 5) {
    return {EventsPerPixel{n}, bins};
  }

  /// N = round(n * W * H), at least 1, when given per pixel.
  /// Throws ConfigError on non-positive sizes or bins.
  std::int64_t events_per_window(const SensorGeometry& geometry) const;
};

/// A group of exactly N consecutive events. t_end is the window timestamp.
struct EventWindow {
  std::int64_t index = 0;
  std::vector<Event> events;

  double t_start() const { return events.front().t; }
  double t_end() const { return events.back().t; }
};

/// Streaming fixed-count windower. Emits a window every N events and holds the
/// remainder. Ties across a boundary are split strictly by count.
class EventWindower {
 public:
  explicit EventWindower(std::int64_t events_per_window);

  /// Adds one event; returns the completed window if this event filled one.
  /// Throws OrderingError if t decreases; the index is the position of the
  /// event in the overall stream.
  std::optional<EventWindow> push(const Event& e);

  std::int64_t events_per_window() const noexcept { return n_; }
  std::int64_t windows_emitted() const noexcept { return next_index_; }
  std::size_t events_seen() const noexcept { return seen_; }

  /// Events received since the last emitted window (< N of them).
  std::span<const Event> pending() const noexcept { return pending_; }

 private:
  std::int64_t n_;
  std::int64_t next_index_ = 0;
  std::size_t seen_ = 0;
  std::optional<double> last_t_;
  std::vector<Event> pending_;
};

struct Windowed {
  std::vector<EventWindow> windows;
  std::vector<Event> pending;
};

Windowed window_by_count(std::span<const Event> events, std::int64_t events_per_window);
Windowed window_by_count(std::span<const Event> events, const WindowConfig& cfg,
                         const SensorGeometry& geometry);

/// Voxel grid of shape bins x height x width, row-major with x fastest.
struct EventTensor {
  int bins = 0;
  int height = 0;
  int width = 0;
  std::int64_t window_index = 0;
  double t_end = 0.0;
  std::vector<double> grid;

  std::size_t offset(int bin, int y, int x) const noexcept {
    return (static_cast<std::size_t>(bin) * height + y) * width + x;
  }
  double at(int bin, int y, int x) const { return grid[offset(bin, y, x)]; }
  double sum() const noexcept;
};

/// Temporally-bilinear, spatially-nearest voxel grid.
///
/// Each event adds its polarity, split between the two bins adjacent to its
/// normalized time t* = (t - t_start) / (t_end - t_start) scaled to
/// [0, bins - 1]. A zero-duration window puts everything in bin 0.
/// Throws DomainError on an empty window or bins < 1, ValidationError on
/// events outside the geometry.
EventTensor build_event_tensor(const EventWindow& window, const SensorGeometry& geometry,
                               int bins);

/// Same, writing into an existing tensor to reuse its allocation.
void build_event_tensor_into(const EventWindow& window, const SensorGeometry& geometry,
                             int bins, EventTensor& out);

}  // namespace evtrack
