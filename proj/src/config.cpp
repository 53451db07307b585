#include "evtrack/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "evtrack/error.hpp"

namespace evtrack {

using json = nlohmann::json;

namespace {

/// Object reader that remembers which keys were used so leftovers can be
/// reported as typos.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError("unknown key '" + path_ + "." + it.key() + "'");
    }
  }

  bool has(const char* key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it != j_.end() && !it->is_null();
  }

  const json& at(const char* key) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) throw ConfigError("missing key '" + path_ + "." + key + "'");
    return *it;
  }

  std::string name(const char* key) const { return path_ + "." + key; }

  double number(const char* key) {
    const json& v = at(key);
    if (!v.is_number()) throw ConfigError(name(key) + " must be a number");
    return v.get<double>();
  }
  double number(const char* key, double fallback) { return has(key) ? number(key) : fallback; }

  std::int64_t integer(const char* key) {
    const json& v = at(key);
    if (!v.is_number_integer()) throw ConfigError(name(key) + " must be an integer");
    return v.get<std::int64_t>();
  }
  std::int64_t integer(const char* key, std::int64_t fallback) {
    return has(key) ? integer(key) : fallback;
  }

  bool boolean(const char* key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_boolean()) throw ConfigError(name(key) + " must be a boolean");
    return v.get<bool>();
  }

  std::string string(const char* key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_string()) throw ConfigError(name(key) + " must be a string");
    return v.get<std::string>();
  }

  Vec2 vec2(const char* key, Vec2 fallback) {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      throw ConfigError(name(key) + " must be [x, y]");
    }
    return {v[0].get<double>(), v[1].get<double>()};
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid JSON config: ") + e.what());
  }
}

SensorGeometry parse_geometry(const json& j) {
  Section s(j, "geometry");
  SensorGeometry g{static_cast<int>(s.integer("width")), static_cast<int>(s.integer("height"))};
  g.validate();
  return g;
}

MotionSpec parse_motion(const json& j) {
  Section s(j, "scene.motion");
  const std::string type = s.string("type", "constant_velocity");
  if (type == "constant_velocity") {
    return ConstantVelocity{s.vec2("start", Vec2::Zero()), s.vec2("velocity", Vec2::Zero())};
  }
  if (type == "sinusoidal") {
    Sinusoidal m;
    m.center = s.vec2("center", Vec2::Zero());
    m.amplitude = s.vec2("amplitude", Vec2::Zero());
    m.frequency = s.number("frequency", 1.0);
    m.phase = s.vec2("phase", Vec2::Zero());
    return m;
  }
  if (type == "waypoints") {
    WaypointPath path;
    const json& pts = s.at("points");
    if (!pts.is_array()) throw ConfigError("scene.motion.points must be an array");
    for (const json& p : pts) {
      if (!p.is_array() || p.size() != 3) throw ConfigError("waypoint must be [t, x, y]");
      path.points.push_back({p[0].get<double>(), {p[1].get<double>(), p[2].get<double>()}});
    }
    return path;
  }
  throw ConfigError("unknown motion type '" + type + "'");
}

SceneConfig parse_scene(const json& j, SensorGeometry geometry) {
  Section s(j, "scene");
  SceneConfig c;
  c.geometry = geometry;
  c.duration = s.number("duration", c.duration);
  c.radius = s.number("radius", c.radius);
  c.contrast = s.number("contrast", c.contrast);
  c.base_intensity = s.number("base_intensity", c.base_intensity);
  if (s.has("motion")) c.motion = parse_motion(s.at("motion"));
  if (s.has("background")) {
    Section b(s.at("background"), "scene.background");
    c.background.amplitude = b.number("amplitude", 0.0);
    c.background.period = b.number("period", c.background.period);
    c.background.velocity = b.vec2("velocity", Vec2::Zero());
  }
  c.contrast_threshold = s.number("contrast_threshold", c.contrast_threshold);
  c.noise_rate = s.number("noise_rate", c.noise_rate);
  c.seed = static_cast<std::uint64_t>(s.integer("seed", 0));
  c.render_rate = s.number("render_rate", c.render_rate);
  c.groundtruth_rate = s.number("groundtruth_rate", c.groundtruth_rate);
  return c;
}

void parse_window(const json& j, RunConfig& rc) {
  Section s(j, "window");
  const bool has_n = s.has("N");
  const bool has_pp = s.has("n");
  if (has_n && has_pp) throw ConfigError("window: give either N or n, not both");
  if (has_n) rc.pipeline.window.size = s.integer("N");
  if (has_pp) rc.pipeline.window.size = WindowConfig::EventsPerPixel{s.number("n")};
  rc.pipeline.window.bins = static_cast<int>(s.integer("bins", rc.pipeline.window.bins));
}

void parse_detector(const json& j, RunConfig& rc) {
  Section s(j, "detector");
  const std::string type = s.string("type", "oracle");
  auto& d = rc.detector;
  if (type == "oracle") {
    d.kind = DetectorChoice::Kind::oracle;
    d.oracle.sigma = s.number("sigma", d.oracle.sigma);
    d.oracle.p_miss = s.number("p_miss", d.oracle.p_miss);
    d.oracle.p_false_positive = s.number("p_fp", d.oracle.p_false_positive);
    if (s.has("confidence")) {
      const Vec2 range = s.vec2("confidence", {0.5, 1.0});
      d.oracle.confidence_min = range.x();
      d.oracle.confidence_max = range.y();
    }
    d.oracle.class_id = static_cast<int>(s.integer("class", d.oracle.class_id));
    d.oracle.seed = static_cast<std::uint64_t>(s.integer("seed", 0));
    d.oracle.validate();
  } else if (type == "bridge") {
    d.kind = DetectorChoice::Kind::bridge;
    d.bridge_address = s.string("address", "");
    if (d.bridge_address.empty()) throw ConfigError("detector.address is required for a bridge");
    d.timeout_ms = static_cast<int>(s.integer("timeout_ms", d.timeout_ms));
  } else {
    throw ConfigError("unknown detector type '" + type + "'");
  }
}

void parse_tracker(const json& j, RunConfig& rc) {
  Section s(j, "tracker");
  auto& p = rc.pipeline;
  if (s.has("q") && s.has("Q")) throw ConfigError("tracker: give either q or Q, not both");
  if (s.has("q")) p.model.Q = Mat2::Identity() * s.number("q");
  if (s.has("Q")) {
    const json& q = s.at("Q");
    if (!q.is_array() || q.size() != 2 || !q[0].is_array() || !q[1].is_array() ||
        q[0].size() != 2 || q[1].size() != 2) {
      throw ConfigError("tracker.Q must be a 2x2 array");
    }
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 2; ++c) p.model.Q(r, c) = q[r][c].get<double>();
    }
  }
  const std::string disc = s.string("discretization", "sampled");
  if (disc == "sampled") {
    p.model.discretization = NoiseDiscretization::sampled;
  } else if (disc == "integrated") {
    p.model.discretization = NoiseDiscretization::integrated;
  } else {
    throw ConfigError("tracker.discretization must be 'sampled' or 'integrated'");
  }
  p.r_policy.sigma = s.number("sigma_meas", p.r_policy.sigma);
  const std::string mode = s.string("r_mode", "fixed");
  if (mode == "fixed") {
    p.r_policy.mode = RPolicy::Mode::fixed;
  } else if (mode == "inverse_confidence") {
    p.r_policy.mode = RPolicy::Mode::inverse_confidence;
  } else {
    throw ConfigError("tracker.r_mode must be 'fixed' or 'inverse_confidence'");
  }
  p.gate = s.boolean("gate", p.gate);
  const std::string init = s.string("init", "auto");
  if (init == "auto") {
    p.init.policy = InitConfig::Policy::automatic;
  } else if (init == "prior") {
    p.init.policy = InitConfig::Policy::prior;
  } else {
    throw ConfigError("tracker.init must be 'auto' or 'prior'");
  }
  if (s.has("x0")) {
    const json& x = s.at("x0");
    if (!x.is_array() || x.size() != 4) throw ConfigError("tracker.x0 must have 4 entries");
    Vec4 v;
    for (int i = 0; i < 4; ++i) v[i] = x[i].get<double>();
    p.init.x0 = v;
  }
  if (s.has("P0")) {
    const json& m = s.at("P0");
    if (!m.is_array() || m.size() != 16) throw ConfigError("tracker.P0 must have 16 entries (row-major)");
    Mat4 P;
    for (int i = 0; i < 16; ++i) P(i / 4, i % 4) = m[i].get<double>();
    p.init.P0 = P;
  }
  p.init.t0 = s.number("t0", p.init.t0);
  if (s.has("horizon")) p.init.horizon = s.number("horizon");
  p.latency = s.number("latency", p.latency);
  p.target_class = static_cast<int>(s.integer("target_class", p.target_class));
  p.concurrent = s.boolean("concurrent", p.concurrent);
  p.queue_capacity = static_cast<std::size_t>(s.integer("queue_capacity", 8));
}

}  // namespace

void RunConfig::sync_geometry() {
  pipeline.geometry = geometry;
  if (scene) {
    scene->geometry = geometry;
  }
}

static RunConfig parse_run_config_doc(const json& doc) {
  RunConfig rc;
  Section top(doc, "config");
  if (top.has("geometry")) rc.geometry = parse_geometry(top.at("geometry"));
  if (top.has("scene")) rc.scene = parse_scene(top.at("scene"), rc.geometry);
  if (top.has("window")) parse_window(top.at("window"), rc);
  if (top.has("detector")) parse_detector(top.at("detector"), rc);
  if (top.has("tracker")) parse_tracker(top.at("tracker"), rc);
  if (top.has("eval")) {
    Section e(top.at("eval"), "eval");
    if (e.has("t_s")) {
      const json& ts = e.at("t_s");
      if (ts.is_number()) {
        rc.t_s = ts.get<double>();
      } else if (!(ts.is_string() && ts.get<std::string>() == "auto")) {
        throw ConfigError("eval.t_s must be a number or \"auto\"");
      }
    }
    if (e.has("t_f")) rc.t_f = e.number("t_f");
    rc.query_rate = e.number("query_rate", 0.0);
  }
  // Velocity-variance horizon defaults to the scene duration when known.
  const bool explicit_horizon = doc.contains("tracker") && doc["tracker"].contains("horizon");
  if (rc.scene && !explicit_horizon) rc.pipeline.init.horizon = rc.scene->duration;
  rc.sync_geometry();
  return rc;
}

RunConfig parse_run_config(const std::string& json_text) {
  const json doc = parse_json(json_text);
  try {
    return parse_run_config_doc(doc);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config has a value of the wrong type: ") + e.what());
  }
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

SceneConfig parse_scene_config(const std::string& json_text) {
  const json doc = parse_json(json_text);
  if (doc.is_object() && doc.contains("scene")) {
    RunConfig rc = parse_run_config(json_text);
    return *rc.scene;
  }
  SensorGeometry geometry{240, 180};
  json scene = doc;
  if (scene.is_object() && scene.contains("geometry")) {
    geometry = parse_geometry(scene["geometry"]);
    scene.erase("geometry");
  }
  try {
    return parse_scene(scene, geometry);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scene has a value of the wrong type: ") + e.what());
  }
}

}  // namespace evtrack
