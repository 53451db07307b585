#include <doctest.h>

#include <atomic>
#include <cmath>
#include <thread>

#include "evtrack/error.hpp"
#include "evtrack/pipeline.hpp"
#include "evtrack/simulate.hpp"

using namespace evtrack;

namespace {

SceneConfig scene() {
  SceneConfig c;
  c.geometry = {96, 72};
  c.duration = 1.0;
  c.radius = 6;
  c.motion = ConstantVelocity{{20, 30}, {50, 10}};
  return c;
}

const SimulationResult& sim() {
  static const SimulationResult r = simulate_scene(scene());
  return r;
}

PipelineConfig config() {
  PipelineConfig p;
  p.geometry = scene().geometry;
  p.window = WindowConfig::with_count(300, 5);
  p.r_policy.sigma = 2.0;
  return p;
}

/// Scripted detector: a fixed box or a thrown error per window.
class Scripted final : public Detector {
 public:
  std::function<std::vector<Detection>(const EventWindow&)> fn;
  std::vector<Detection> detect(const EventWindow& w, const EventTensor&) override { return fn(w); }
  std::string name() const override { return "scripted"; }
};

bool same(const StateEstimate& a, const StateEstimate& b) {
  return a.t == b.t && a.x == b.x && a.P == b.P && a.k == b.k;
}

}  // namespace

TEST_CASE("one record and one frame per completed window") {
  const auto& s = sim();
  OracleDetector det(s.groundtruth, scene().geometry, {});
  const auto r = run_pipeline(s.events, config(), det);
  const auto expected = static_cast<std::int64_t>(s.events.size() / 300);
  CHECK(r.stats.windows == expected);
  CHECK(r.records.size() == static_cast<std::size_t>(expected));
  CHECK(r.frames.size() == r.records.size());
  CHECK(r.trace.size() == r.records.size() + 1);
  CHECK(r.stats.pending_events == static_cast<std::int64_t>(s.events.size() % 300));
  CHECK(r.stats.accepted + r.stats.missed == r.stats.windows);
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    CHECK(r.records[i].estimate.k == static_cast<std::int64_t>(i));
    CHECK(r.records[i].estimate.t == s.events[(i + 1) * 300 - 1].t);
  }
}

TEST_CASE("noise-free oracle converges to the truth") {
  const auto& s = sim();
  OracleNoise n;
  n.sigma = 0;
  OracleDetector det(s.groundtruth, scene().geometry, n);
  const auto r = run_pipeline(s.events, config(), det);
  REQUIRE(r.stats.windows > 10);
  CHECK(r.stats.accepted == r.stats.windows);
  const auto& last = r.final_state;
  CHECK((last.position() - s.groundtruth.center(last.t)).norm() <= 1.0);
  CHECK((last.velocity() - Vec2(50, 10)).norm() <= 10.0);
}

TEST_CASE("p_miss = 1 is open-loop propagation of the prior") {
  const auto& s = sim();
  OracleNoise n;
  n.p_miss = 1;
  OracleDetector det(s.groundtruth, scene().geometry, n);
  auto cfg = config();
  const auto r = run_pipeline(s.events, cfg, det);
  CHECK(r.stats.accepted == 0);
  CHECK_FALSE(r.first_measurement_time);
  StateEstimate open = cfg.init.initial_state(cfg.geometry);
  for (const auto& rec : r.records) open = predict_to(open, rec.estimate.t, cfg.model);
  CHECK((r.final_state.x - open.x).norm() < 1e-9);
  CHECK((r.final_state.P - open.P).norm() <= 1e-9 * open.P.norm());
  for (const auto& rec : r.records) CHECK_FALSE(rec.updated);
}

TEST_CASE("empty stream gives no windows and keeps the prior") {
  OracleDetector det(sim().groundtruth, scene().geometry, {});
  const auto cfg = config();
  const auto r = run_pipeline(std::span<const Event>{}, cfg, det);
  CHECK(r.records.empty());
  CHECK(r.stats.windows == 0);
  CHECK(std::isnan(r.stats.mean_dt));
  CHECK(same(r.final_state, cfg.init.initial_state(cfg.geometry)));
}

TEST_CASE("concurrent mode reproduces the sequential result") {
  const auto& s = sim();
  OracleNoise n;
  n.sigma = 2;
  n.p_miss = 0.2;
  n.p_false_positive = 0.1;
  n.seed = 4;
  auto cfg = config();
  OracleDetector d1(s.groundtruth, cfg.geometry, n), d2(s.groundtruth, cfg.geometry, n);
  const auto a = run_pipeline(s.events, cfg, d1);
  cfg.concurrent = true;
  cfg.queue_capacity = 2;
  const auto b = run_pipeline(s.events, cfg, d2);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(same(a.records[i].estimate, b.records[i].estimate));
    CHECK(a.records[i].updated == b.records[i].updated);
  }
  CHECK(a.stats.accepted == b.stats.accepted);
}

TEST_CASE("latency shifts availability only") {
  const auto& s = sim();
  OracleDetector d1(s.groundtruth, scene().geometry, {}), d2(s.groundtruth, scene().geometry, {});
  auto cfg = config();
  const auto a = run_pipeline(s.events, cfg, d1);
  cfg.latency = 0.02;
  const auto b = run_pipeline(s.events, cfg, d2);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(same(a.records[i].estimate, b.records[i].estimate));
    CHECK(b.records[i].available_at == b.records[i].estimate.t + 0.02);
  }
}

TEST_CASE("connection and backend errors count as misses; protocol errors propagate") {
  const auto& s = sim();
  Scripted det;
  det.fn = [](const EventWindow& w) -> std::vector<Detection> {
    if (w.index % 3 == 1) throw ConnectionError("gone");
    if (w.index % 3 == 2) throw BackendError("oom");
    return {{{10, 10, 20, 20}, 0.9, 0, 0.0}};
  };
  const auto r = run_pipeline(s.events, config(), det);
  CHECK(r.stats.detector_failures == r.stats.windows - (r.stats.windows + 2) / 3);
  CHECK(r.stats.accepted == (r.stats.windows + 2) / 3);
  for (const auto& f : r.frames) {
    for (const auto& d : f.detections) CHECK(d.t == f.t);
  }

  det.fn = [](const EventWindow& w) -> std::vector<Detection> {
    if (w.index == 4) throw ProtocolError("bad k");
    return {};
  };
  CHECK_THROWS_AS(run_pipeline(s.events, config(), det), ProtocolError);
  auto cfg = config();
  cfg.concurrent = true;
  CHECK_THROWS_AS(run_pipeline(s.events, cfg, det), ProtocolError);
}

TEST_CASE("automatic init takes the first measurement as the position") {
  const auto& s = sim();
  Scripted det;
  det.fn = [](const EventWindow& w) -> std::vector<Detection> {
    if (w.index < 2) return {};
    return {{{40, 50, 50, 60}, 0.9, 0, 0.0}};
  };
  auto cfg = config();
  const auto r = run_pipeline(s.events, cfg, det);
  REQUIRE(r.records.size() > 3);
  const auto& first = r.records[2];
  CHECK(first.updated);
  CHECK(first.estimate.position() == Vec2(45, 55));
  CHECK(first.estimate.velocity() == Vec2::Zero());
  CHECK(first.estimate.P(0, 0) == 4.0);
  CHECK(first.estimate.P(2, 2) == cfg.init.velocity_variance(cfg.geometry).x());
  CHECK(*r.first_measurement_time == first.estimate.t);

  cfg.init.policy = InitConfig::Policy::prior;
  const auto p = run_pipeline(s.events, cfg, det);
  // With the diffuse prior the first update lands near, not on, the box centre.
  CHECK((p.records[2].estimate.position() - Vec2(45, 55)).norm() < 0.1);
  CHECK(p.records[2].estimate.position() != Vec2(45, 55));
}

TEST_CASE("gate rejects far outliers after initialization") {
  const auto& s = sim();
  Scripted det;
  det.fn = [](const EventWindow& w) -> std::vector<Detection> {
    if (w.index == 10) return {{{80, 0, 90, 10}, 0.9, 0, 0.0}};
    return {{{20, 30, 30, 40}, 0.9, 0, 0.0}};
  };
  auto cfg = config();
  cfg.gate = true;
  const auto r = run_pipeline(s.events, cfg, det);
  CHECK(r.stats.gated == 1);
  CHECK_FALSE(r.records[10].updated);
  cfg.gate = false;
  const auto u = run_pipeline(s.events, cfg, det);
  CHECK(u.stats.gated == 0);
  CHECK(u.records[10].updated);
}

TEST_CASE("snapshot publishes the latest estimate while running") {
  const auto& s = sim();
  OracleDetector det(s.groundtruth, scene().geometry, {});
  auto cfg = config();
  cfg.concurrent = true;
  EstimateSnapshot snap;
  std::atomic<bool> done{false};
  std::atomic<int> seen{0};
  std::thread reader([&] {
    while (!done) {
      if (auto e = snap.latest()) {
        if (is_spd(e->P)) ++seen;
      }
    }
  });
  const auto r = run_pipeline(s.events, cfg, det, &snap);
  done = true;
  reader.join();
  CHECK(seen > 0);
  REQUIRE(snap.latest());
  CHECK(same(*snap.latest(), r.final_state));
}

TEST_CASE("queries between windows follow the model") {
  const auto& s = sim();
  OracleDetector det(s.groundtruth, scene().geometry, {});
  const auto cfg = config();
  const auto r = run_pipeline(s.events, cfg, det);
  const auto& a = r.records[5].estimate;
  const double t = (a.t + r.records[6].estimate.t) / 2;
  const auto q = r.query(t);
  CHECK(q.t == t);
  CHECK((q.x - predict_to(a, t, cfg.model).x).norm() < 1e-12);
}

TEST_CASE("bounded queue drains after close") {
  BoundedQueue<int> q(2);
  CHECK(q.push(1));
  CHECK(q.push(2));
  q.close();
  CHECK_FALSE(q.push(3));
  CHECK(*q.pop() == 1);
  CHECK(*q.pop() == 2);
  CHECK_FALSE(q.pop());
}

TEST_CASE("pipeline config validation") {
  auto cfg = config();
  cfg.init.horizon = 0;
  OracleDetector det(sim().groundtruth, scene().geometry, {});
  CHECK_THROWS_AS(run_pipeline(sim().events, cfg, det), ConfigError);
  cfg = config();
  cfg.latency = -1;
  CHECK_THROWS_AS(run_pipeline(sim().events, cfg, det), ConfigError);
}
