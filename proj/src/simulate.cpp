#include "evtrack/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "evtrack/error.hpp"
#include "evtrack/rng.hpp"

namespace evtrack {

namespace {

struct Overloaded {
  const double t;
  Vec2 operator()(const ConstantVelocity& m) const { return m.start + m.velocity * t; }
  Vec2 operator()(const Sinusoidal& m) const {
    const double w = 2.0 * std::numbers::pi * m.frequency * t;
    return {m.center.x() + m.amplitude.x() * std::sin(w + m.phase.x()),
            m.center.y() + m.amplitude.y() * std::sin(w + m.phase.y())};
  }
  Vec2 operator()(const WaypointPath& m) const {
    const auto& p = m.points;
    if (t <= p.front().t) return p.front().position;
    if (t >= p.back().t) return p.back().position;
    auto it = std::upper_bound(p.begin(), p.end(), t,
                               [](double v, const Waypoint& w) { return v < w.t; });
    const Waypoint& b = *it;
    const Waypoint& a = *(it - 1);
    const double u = (t - a.t) / (b.t - a.t);
    return a.position + u * (b.position - a.position);
  }
};

std::int64_t seconds_to_ns(double s) { return std::llround(s * 1e9); }

}  // namespace

Vec2 motion_position(const MotionSpec& motion, double t) {
  return std::visit(Overloaded{t}, motion);
}

void SceneConfig::validate() const {
  geometry.validate();
  if (!(duration > 0.0) || !std::isfinite(duration)) throw ConfigError("duration must be > 0");
  if (!(radius > 0.0)) throw ConfigError("target radius must be > 0");
  if (!(contrast > 0.0 && contrast <= 1.0)) throw ConfigError("target contrast must be in (0, 1]");
  if (!(base_intensity > 0.0)) throw ConfigError("base intensity must be > 0");
  if (!(contrast_threshold > 0.0)) throw ConfigError("contrast threshold must be > 0");
  if (!(noise_rate >= 0.0)) throw ConfigError("noise rate must be >= 0");
  if (!(render_rate > 0.0)) throw ConfigError("render rate must be > 0");
  if (!(groundtruth_rate > 0.0)) throw ConfigError("groundtruth rate must be > 0");
  if (!(background.amplitude >= 0.0 && background.amplitude < 1.0)) {
    throw ConfigError("background amplitude must be in [0, 1)");
  }
  if (background.amplitude > 0.0 && !(background.period > 0.0)) {
    throw ConfigError("background period must be > 0");
  }
  if (const auto* path = std::get_if<WaypointPath>(&motion)) {
    if (path->points.empty()) throw ConfigError("waypoint path needs at least one point");
    for (std::size_t i = 1; i < path->points.size(); ++i) {
      if (!(path->points[i].t > path->points[i - 1].t)) {
        throw ConfigError("waypoint times must be strictly increasing");
      }
    }
  }
}

double scene_log_intensity(const SceneConfig& cfg, double x, double y, double t) {
  double background = cfg.base_intensity;
  if (cfg.background.amplitude > 0.0) {
    const double k = 2.0 * std::numbers::pi / cfg.background.period;
    const double u = x - cfg.background.velocity.x() * t;
    const double v = y - cfg.background.velocity.y() * t;
    background *= 1.0 + cfg.background.amplitude * std::sin(k * u) * std::cos(k * v);
  }
  const Vec2 c = motion_position(cfg.motion, t);
  const double d = std::hypot(x - c.x(), y - c.y());
  const double coverage = std::clamp(cfg.radius + 0.5 - d, 0.0, 1.0);
  return std::log(background * (1.0 + cfg.contrast * coverage));
}

// ---------------------------------------------------------------------------
// GroundTruth

GroundTruth::GroundTruth(std::vector<GroundTruthSample> samples) : samples_(std::move(samples)) {
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const auto& s = samples_[i];
    if (i > 0 && !(s.t > samples_[i - 1].t)) {
      throw ValidationError("groundtruth times must be strictly increasing (sample " +
                            std::to_string(i) + ")");
    }
    if (!(s.bbox.x_min <= s.center.x() && s.center.x() <= s.bbox.x_max &&
          s.bbox.y_min <= s.center.y() && s.center.y() <= s.bbox.y_max)) {
      throw ValidationError("groundtruth bbox does not contain its center (sample " +
                            std::to_string(i) + ")");
    }
  }
}

double GroundTruth::start_time() const {
  if (samples_.empty()) throw RangeError("empty groundtruth");
  return samples_.front().t;
}

double GroundTruth::end_time() const {
  if (samples_.empty()) throw RangeError("empty groundtruth");
  return samples_.back().t;
}

bool GroundTruth::covers(double t) const noexcept {
  return !samples_.empty() && t >= samples_.front().t && t <= samples_.back().t;
}

std::size_t GroundTruth::bracket(double t) const {
  if (!covers(t)) {
    std::ostringstream msg;
    msg << "groundtruth query at t=" << t << " outside ["
        << (samples_.empty() ? 0.0 : samples_.front().t) << ", "
        << (samples_.empty() ? 0.0 : samples_.back().t) << "]";
    throw RangeError(msg.str());
  }
  auto it = std::upper_bound(samples_.begin(), samples_.end(), t,
                             [](double v, const GroundTruthSample& s) { return v < s.t; });
  const auto i = static_cast<std::size_t>(std::distance(samples_.begin(), it));
  return i == 0 ? 0 : i - 1;
}

Vec2 GroundTruth::center(double t) const {
  const std::size_t i = bracket(t);
  const auto& a = samples_[i];
  if (t == a.t || i + 1 == samples_.size()) return a.center;
  const auto& b = samples_[i + 1];
  const double u = (t - a.t) / (b.t - a.t);
  return a.center + u * (b.center - a.center);
}

BBox GroundTruth::bbox(double t) const {
  const std::size_t i = bracket(t);
  const auto& a = samples_[i];
  if (t == a.t || i + 1 == samples_.size()) return a.bbox;
  const auto& b = samples_[i + 1];
  const double u = (t - a.t) / (b.t - a.t);
  auto lerp = [u](double p, double q) { return p + u * (q - p); };
  return {lerp(a.bbox.x_min, b.bbox.x_min), lerp(a.bbox.y_min, b.bbox.y_min),
          lerp(a.bbox.x_max, b.bbox.x_max), lerp(a.bbox.y_max, b.bbox.y_max)};
}

GroundTruth GroundTruth::shifted(double dt) const {
  std::vector<GroundTruthSample> out = samples_;
  for (auto& s : out) s.t += dt;
  return GroundTruth(std::move(out));
}

void write_groundtruth_csv(std::ostream& out, const GroundTruth& gt) {
  out << "t,cx,cy,xmin,ymin,xmax,ymax\n";
  out.precision(17);
  for (const auto& s : gt.samples()) {
    out << s.t << ',' << s.center.x() << ',' << s.center.y() << ',' << s.bbox.x_min << ','
        << s.bbox.y_min << ',' << s.bbox.x_max << ',' << s.bbox.y_max << '\n';
  }
}

void write_groundtruth_file(const std::string& path, const GroundTruth& gt) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot create groundtruth file '" + path + "'");
  write_groundtruth_csv(out, gt);
}

GroundTruth read_groundtruth_csv(std::istream& in) {
  std::string line;
  std::size_t offset = 0;
  if (!std::getline(in, line)) throw ParseError("missing groundtruth header", 0);
  if (line.rfind("t,cx,cy,xmin,ymin,xmax,ymax", 0) != 0) {
    throw ParseError("unexpected groundtruth header '" + line + "'", 0);
  }
  offset += line.size() + 1;
  std::vector<GroundTruthSample> samples;
  while (std::getline(in, line)) {
    const std::size_t here = offset;
    offset += line.size() + 1;
    if (line.empty() || line == "\r") continue;
    std::istringstream row(line);
    double v[7];
    char sep = 0;
    for (int i = 0; i < 7; ++i) {
      if (!(row >> v[i])) throw ParseError("malformed groundtruth row", here);
      if (i < 6 && (!(row >> sep) || sep != ',')) {
        throw ParseError("malformed groundtruth row", here);
      }
    }
    samples.push_back({v[0], {v[1], v[2]}, {v[3], v[4], v[5], v[6]}});
  }
  return GroundTruth(std::move(samples));
}

GroundTruth read_groundtruth_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open groundtruth file '" + path + "'");
  return read_groundtruth_csv(in);
}

// ---------------------------------------------------------------------------
// Simulation

namespace {

struct PixelState {
  double reference = 0.0;  ///< log level at the last event (or start)
  double current = 0.0;    ///< log level at the last render step
  std::int64_t last_ns = -1;
};

struct StampedEvent {
  std::int64_t ns;
  std::uint16_t x, y;
  std::int8_t polarity;
};

struct Rect {
  int x0, y0, x1, y1;  ///< inclusive
};

}  // namespace

SimulationResult simulate_scene(const SceneConfig& cfg) {
  cfg.validate();
  const int W = cfg.geometry.width;
  const int H = cfg.geometry.height;
  const std::int64_t duration_ns = seconds_to_ns(cfg.duration);
  const auto steps = std::max<std::int64_t>(1, std::llround(std::ceil(cfg.duration * cfg.render_rate)));
  auto step_ns = [&](std::int64_t i) {
    return static_cast<std::int64_t>(static_cast<__int128>(duration_ns) * i / steps);
  };

  std::vector<PixelState> pixels(static_cast<std::size_t>(W) * H);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double l = scene_log_intensity(cfg, x, y, 0.0);
      pixels[static_cast<std::size_t>(y) * W + x] = {l, l, -1};
    }
  }

  const bool dynamic_background =
      cfg.background.amplitude > 0.0 && cfg.background.velocity.squaredNorm() > 0.0;
  auto disk_rect = [&](double t) {
    const Vec2 c = motion_position(cfg.motion, t);
    const double reach = cfg.radius + 2.0;
    return Rect{static_cast<int>(std::floor(c.x() - reach)), static_cast<int>(std::floor(c.y() - reach)),
                static_cast<int>(std::ceil(c.x() + reach)), static_cast<int>(std::ceil(c.y() + reach))};
  };

  std::vector<StampedEvent> signal;
  const double threshold = cfg.contrast_threshold;
  std::int64_t prev_ns = 0;
  Rect prev_rect = disk_rect(0.0);

  for (std::int64_t i = 1; i <= steps; ++i) {
    const std::int64_t now_ns = step_ns(i);
    const double now = ns_to_seconds(now_ns);
    const Rect cur_rect = disk_rect(now);
    Rect dirty{0, 0, W - 1, H - 1};
    if (!dynamic_background) {
      dirty = {std::max(0, std::min(prev_rect.x0, cur_rect.x0)),
               std::max(0, std::min(prev_rect.y0, cur_rect.y0)),
               std::min(W - 1, std::max(prev_rect.x1, cur_rect.x1)),
               std::min(H - 1, std::max(prev_rect.y1, cur_rect.y1))};
    }
    const std::int64_t span_ns = now_ns - prev_ns;

    for (int y = dirty.y0; y <= dirty.y1; ++y) {
      for (int x = dirty.x0; x <= dirty.x1; ++x) {
        PixelState& px = pixels[static_cast<std::size_t>(y) * W + x];
        const double before = px.current;
        const double after = scene_log_intensity(cfg, x, y, now);
        px.current = after;
        const double delta = after - before;
        if (delta == 0.0) continue;
        const int sign = delta > 0.0 ? 1 : -1;
        // Hysteresis: every full threshold step beyond the reference fires.
        while (sign * (after - px.reference) >= threshold) {
          px.reference += sign * threshold;
          const double frac = std::clamp((px.reference - before) / delta, 0.0, 1.0);
          std::int64_t ns = prev_ns + std::llround(frac * static_cast<double>(span_ns));
          if (ns <= px.last_ns) ns = px.last_ns + 1;
          px.last_ns = ns;
          signal.push_back({ns, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
                            static_cast<std::int8_t>(sign)});
        }
      }
    }
    prev_ns = now_ns;
    prev_rect = cur_rect;
  }

  auto by_time = [](const StampedEvent& a, const StampedEvent& b) {
    if (a.ns != b.ns) return a.ns < b.ns;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  };
  std::sort(signal.begin(), signal.end(), by_time);

  std::vector<StampedEvent> noise;
  if (cfg.noise_rate > 0.0) {
    Rng rng(cfg.seed, 1);
    const double total_rate = cfg.noise_rate * static_cast<double>(cfg.geometry.pixel_count());
    double t = rng.exponential(total_rate);
    while (true) {
      const std::int64_t ns = seconds_to_ns(t);
      if (ns > duration_ns) break;
      const auto pixel = rng.below(static_cast<std::uint64_t>(cfg.geometry.pixel_count()));
      const std::int8_t pol = rng.bernoulli(0.5) ? 1 : -1;
      noise.push_back({ns, static_cast<std::uint16_t>(pixel % W),
                       static_cast<std::uint16_t>(pixel / W), pol});
      t += rng.exponential(total_rate);
    }
    std::stable_sort(noise.begin(), noise.end(), by_time);
  }

  SimulationResult result;
  result.events.reserve(signal.size() + noise.size());
  std::vector<std::int64_t> last_ns(static_cast<std::size_t>(W) * H, -1);
  auto emit = [&](const StampedEvent& e, bool is_noise) {
    auto& last = last_ns[static_cast<std::size_t>(e.y) * W + e.x];
    if (is_noise && e.ns <= last) return;  // keep per-pixel times strictly increasing
    last = e.ns;
    result.events.push_back({ns_to_seconds(e.ns), e.x, e.y, e.polarity});
  };
  std::size_t i = 0, j = 0;
  while (i < signal.size() || j < noise.size()) {
    const bool take_signal = j == noise.size() || (i < signal.size() && signal[i].ns <= noise[j].ns);
    if (take_signal) {
      emit(signal[i++], false);
    } else {
      emit(noise[j++], true);
    }
  }

  // Groundtruth on its own clock, always including both ends.
  const auto gt_steps = std::max<std::int64_t>(1, std::llround(std::ceil(cfg.duration * cfg.groundtruth_rate - 1e-9)));
  std::vector<GroundTruthSample> samples;
  samples.reserve(static_cast<std::size_t>(gt_steps) + 1);
  for (std::int64_t g = 0; g <= gt_steps; ++g) {
    const double t = ns_to_seconds(
        static_cast<std::int64_t>(static_cast<__int128>(duration_ns) * g / gt_steps));
    const Vec2 c = motion_position(cfg.motion, t);
    const BBox box{c.x() - cfg.radius, c.y() - cfg.radius, c.x() + cfg.radius, c.y() + cfg.radius};
    if (box.x_min < 0.0 || box.y_min < 0.0 || box.x_max > W || box.y_max > H) {
      result.clipped = true;
    }
    samples.push_back({t, c, box});
  }
  result.groundtruth = GroundTruth(std::move(samples));
  return result;
}

}  // namespace evtrack
