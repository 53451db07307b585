#include "evtrack/events.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "evtrack/error.hpp"

namespace evtrack {

static_assert(std::endian::native == std::endian::little,
              "binary event codec assumes a little-endian host");

void SensorGeometry::validate() const {
  if (width <= 0 || height <= 0) {
    throw ConfigError("sensor geometry must be positive, got " + std::to_string(width) +
                      "x" + std::to_string(height));
  }
  if (width > 65536 || height > 65536) {
    throw ConfigError("sensor geometry exceeds the 16-bit coordinate range");
  }
}

void BBox::validate() const {
  if (!(x_min < x_max) || !(y_min < y_max)) {
    throw ValidationError("degenerate bounding box");
  }
}

EventFormat format_from_path(std::string_view path) {
  auto ends_with = [&](std::string_view suffix) {
    return path.size() >= suffix.size() &&
           path.substr(path.size() - suffix.size()) == suffix;
  };
  return (ends_with(".bin") || ends_with(".raw")) ? EventFormat::binary : EventFormat::text;
}

std::optional<EventFormat> parse_format_name(std::string_view name) {
  if (name == "text" || name == "txt") return EventFormat::text;
  if (name == "binary" || name == "bin") return EventFormat::binary;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Reader

EventReader::EventReader(std::istream& in, EventFormat format,
                         std::optional<SensorGeometry> geometry)
    : in_(in), format_(format), geometry_(geometry) {}

std::optional<Event> EventReader::next() {
  return format_ == EventFormat::text ? next_text() : next_binary();
}

void EventReader::check_bounds(const Event& e, std::size_t record_offset) const {
  if (geometry_ && !geometry_->contains(e.x, e.y)) {
    throw ValidationError("event at (" + std::to_string(e.x) + ", " + std::to_string(e.y) +
                          ") lies outside the " + std::to_string(geometry_->width) + "x" +
                          std::to_string(geometry_->height) + " sensor (byte offset " +
                          std::to_string(record_offset) + ")");
  }
}

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

std::string_view next_token(std::string_view& rest) {
  std::size_t i = 0;
  while (i < rest.size() && is_space(rest[i])) ++i;
  std::size_t j = i;
  while (j < rest.size() && !is_space(rest[j])) ++j;
  std::string_view tok = rest.substr(i, j - i);
  rest.remove_prefix(j);
  return tok;
}

template <typename T>
bool parse_number(std::string_view tok, T& out) {
  if (tok.empty()) return false;
  if (tok.front() == '+') tok.remove_prefix(1);
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

}  // namespace

std::optional<Event> EventReader::next_text() {
  while (std::getline(in_, line_)) {
    const std::size_t record_offset = offset_;
    offset_ += line_.size() + (in_.eof() ? 0 : 1);

    std::string_view rest = line_;
    std::string_view first = next_token(rest);
    if (first.empty() || first.front() == '#') continue;

    std::string_view fields[4] = {first, next_token(rest), next_token(rest), next_token(rest)};
    if (!next_token(rest).empty()) {
      throw ParseError("expected 4 fields per event line", record_offset);
    }

    double t = 0.0;
    std::int64_t x = 0, y = 0, p = 0;
    if (!parse_number(fields[0], t) || !std::isfinite(t)) {
      throw ParseError("malformed timestamp '" + std::string(fields[0]) + "'", record_offset);
    }
    if (!parse_number(fields[1], x) || !parse_number(fields[2], y)) {
      throw ParseError("malformed pixel coordinate", record_offset);
    }
    if (!parse_number(fields[3], p) || (p != 0 && p != 1)) {
      throw ParseError("polarity must be 0 or 1", record_offset);
    }
    if (x < 0 || y < 0 || x > 0xFFFF || y > 0xFFFF) {
      throw ValidationError("pixel coordinate out of range (byte offset " +
                            std::to_string(record_offset) + ")");
    }
    Event e{t, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
            static_cast<std::int8_t>(p == 1 ? 1 : -1)};
    check_bounds(e, record_offset);
    return e;
  }
  return std::nullopt;
}

std::optional<Event> EventReader::next_binary() {
  std::array<char, kBinaryRecordSize> rec{};
  in_.read(rec.data(), rec.size());
  const auto got = static_cast<std::size_t>(in_.gcount());
  if (got == 0) return std::nullopt;
  const std::size_t record_offset = offset_;
  if (got != kBinaryRecordSize) {
    throw ParseError("truncated binary event record (" + std::to_string(got) + " of " +
                         std::to_string(kBinaryRecordSize) + " bytes)",
                     record_offset);
  }
  offset_ += kBinaryRecordSize;

  Event e;
  std::memcpy(&e.t, rec.data(), 8);
  std::memcpy(&e.x, rec.data() + 8, 2);
  std::memcpy(&e.y, rec.data() + 10, 2);
  std::memcpy(&e.polarity, rec.data() + 12, 1);
  if (!std::isfinite(e.t)) throw ParseError("non-finite timestamp", record_offset);
  if (e.polarity != 1 && e.polarity != -1) {
    throw ParseError("binary polarity must be +1 or -1", record_offset);
  }
  check_bounds(e, record_offset);
  return e;
}

std::vector<Event> read_events(std::istream& in, EventFormat format,
                               std::optional<SensorGeometry> geometry) {
  EventReader reader(in, format, geometry);
  std::vector<Event> out;
  while (auto e = reader.next()) out.push_back(*e);
  return out;
}

std::vector<Event> read_events_file(const std::string& path, EventFormat format,
                                    std::optional<SensorGeometry> geometry) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open event file '" + path + "'");
  return read_events(in, format, geometry);
}

std::vector<Event> parse_events(std::string_view bytes, EventFormat format,
                                std::optional<SensorGeometry> geometry) {
  std::istringstream in{std::string(bytes), std::ios::binary};
  return read_events(in, format, geometry);
}

void write_events(std::ostream& out, std::span<const Event> events, EventFormat format) {
  if (format == EventFormat::binary) {
    std::array<char, kBinaryRecordSize> rec{};
    for (const Event& e : events) {
      std::memcpy(rec.data(), &e.t, 8);
      std::memcpy(rec.data() + 8, &e.x, 2);
      std::memcpy(rec.data() + 10, &e.y, 2);
      std::memcpy(rec.data() + 12, &e.polarity, 1);
      out.write(rec.data(), rec.size());
    }
    return;
  }
  std::array<char, 128> buf{};
  for (const Event& e : events) {
    // Shortest fixed-notation form that round-trips.
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + 64, e.t, std::chars_format::fixed);
    if (ec != std::errc{}) throw Error("cannot format timestamp");
    *ptr++ = ' ';
    ptr = std::to_chars(ptr, buf.data() + 100, e.x).ptr;
    *ptr++ = ' ';
    ptr = std::to_chars(ptr, buf.data() + 100, e.y).ptr;
    *ptr++ = ' ';
    *ptr++ = e.polarity > 0 ? '1' : '0';
    *ptr++ = '\n';
    out.write(buf.data(), ptr - buf.data());
  }
}

void write_events_file(const std::string& path, std::span<const Event> events,
                       EventFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot create event file '" + path + "'");
  write_events(out, events, format);
  if (!out) throw ConfigError("failed writing event file '" + path + "'");
}

// ---------------------------------------------------------------------------
// Windowing

std::int64_t WindowConfig::events_per_window(const SensorGeometry& geometry) const {
  if (bins < 1) throw ConfigError("temporal bins must be >= 1");
  if (const auto* n = std::get_if<std::int64_t>(&size)) {
    if (*n < 1) throw ConfigError("events per window must be >= 1");
    return *n;
  }
  const double per_pixel = std::get<EventsPerPixel>(size).value;
  if (!(per_pixel > 0.0) || !std::isfinite(per_pixel)) {
    throw ConfigError("events per pixel must be positive");
  }
  const double n = std::round(per_pixel * static_cast<double>(geometry.pixel_count()));
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(n));
}

EventWindower::EventWindower(std::int64_t events_per_window) : n_(events_per_window) {
  if (n_ < 1) throw ConfigError("events per window must be >= 1");
  pending_.reserve(static_cast<std::size_t>(std::min<std::int64_t>(n_, 1 << 20)));
}

std::optional<EventWindow> EventWindower::push(const Event& e) {
  if (last_t_ && e.t < *last_t_) {
    throw OrderingError("event timestamps must be non-decreasing", seen_);
  }
  last_t_ = e.t;
  ++seen_;
  pending_.push_back(e);
  if (static_cast<std::int64_t>(pending_.size()) < n_) return std::nullopt;

  EventWindow w;
  w.index = next_index_++;
  w.events = std::move(pending_);
  pending_ = {};
  pending_.reserve(w.events.size());
  return w;
}

Windowed window_by_count(std::span<const Event> events, std::int64_t events_per_window) {
  EventWindower windower(events_per_window);
  Windowed out;
  out.windows.reserve(events.size() / static_cast<std::size_t>(events_per_window));
  for (const Event& e : events) {
    if (auto w = windower.push(e)) out.windows.push_back(std::move(*w));
  }
  auto rest = windower.pending();
  out.pending.assign(rest.begin(), rest.end());
  return out;
}

Windowed window_by_count(std::span<const Event> events, const WindowConfig& cfg,
                         const SensorGeometry& geometry) {
  return window_by_count(events, cfg.events_per_window(geometry));
}

// ---------------------------------------------------------------------------
// Tensor

double EventTensor::sum() const noexcept {
  double s = 0.0;
  for (double v : grid) s += v;
  return s;
}

void build_event_tensor_into(const EventWindow& window, const SensorGeometry& geometry,
                             int bins, EventTensor& out) {
  if (window.events.empty()) throw DomainError("cannot tensorize an empty window");
  if (bins < 1) throw DomainError("temporal bins must be >= 1");

  out.bins = bins;
  out.height = geometry.height;
  out.width = geometry.width;
  out.window_index = window.index;
  out.t_end = window.t_end();
  out.grid.assign(static_cast<std::size_t>(bins) * geometry.height * geometry.width, 0.0);

  const double t0 = window.t_start();
  const double duration = window.t_end() - t0;
  const double scale = duration > 0.0 ? static_cast<double>(bins - 1) / duration : 0.0;
  const std::size_t plane = static_cast<std::size_t>(geometry.height) * geometry.width;

  for (const Event& e : window.events) {
    if (!geometry.contains(e.x, e.y)) {
      throw ValidationError("event outside sensor geometry during tensorization");
    }
    const double p = e.polarity;
    const std::size_t cell = static_cast<std::size_t>(e.y) * geometry.width + e.x;
    const double coord = std::clamp((e.t - t0) * scale, 0.0, static_cast<double>(bins - 1));
    const int lo = static_cast<int>(coord);
    const double frac = coord - lo;
    if (lo >= bins - 1) {
      out.grid[static_cast<std::size_t>(bins - 1) * plane + cell] += p;
      continue;
    }
    out.grid[static_cast<std::size_t>(lo) * plane + cell] += p * (1.0 - frac);
    out.grid[static_cast<std::size_t>(lo + 1) * plane + cell] += p * frac;
  }
}

EventTensor build_event_tensor(const EventWindow& window, const SensorGeometry& geometry,
                               int bins) {
  EventTensor out;
  build_event_tensor_into(window, geometry, bins, out);
  return out;
}

}  // namespace evtrack
