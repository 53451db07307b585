#include <doctest.h>

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "evtrack/error.hpp"
#include "evtrack/io.hpp"
#include "evtrack/simulate.hpp"

using namespace evtrack;

namespace {

PipelineResult tracked() {
  SceneConfig c;
  c.geometry = {80, 60};
  c.duration = 0.6;
  c.radius = 5;
  c.motion = ConstantVelocity{{15, 20}, {60, 20}};
  static const auto sim = simulate_scene(c);
  PipelineConfig p;
  p.geometry = c.geometry;
  p.window = WindowConfig::with_count(250, 3);
  OracleNoise n;
  n.sigma = 1;
  n.p_miss = 0.3;
  n.p_false_positive = 0.2;
  n.seed = 2;
  OracleDetector det(sim.groundtruth, c.geometry, n);
  return run_pipeline(sim.events, p, det);
}

}  // namespace

TEST_CASE("estimate log round trip is exact") {
  const auto r = tracked();
  std::stringstream io;
  write_estimate_log(io, r);
  const std::string text = io.str();
  CHECK(text.rfind(std::string(kEstimateHeader) + "\n", 0) == 0);
  const auto rows = read_estimate_log(io);
  REQUIRE(rows.size() == r.records.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].estimate.t == r.records[i].estimate.t);
    CHECK(rows[i].estimate.k == r.records[i].estimate.k);
    CHECK(rows[i].estimate.x == r.records[i].estimate.x);
    CHECK(rows[i].estimate.P == r.records[i].estimate.P);
    CHECK(rows[i].updated == r.records[i].updated);
  }
}

TEST_CASE("query rows carry k = -1 and are skipped by the trace") {
  const auto r = tracked();
  std::stringstream io;
  write_estimate_log(io, r, 1000.0);
  const auto rows = read_estimate_log(io);
  std::size_t windows = 0, queries = 0;
  double last = -1;
  for (const auto& row : rows) {
    CHECK(row.estimate.t > last);
    last = row.estimate.t;
    if (row.estimate.k) {
      ++windows;
    } else {
      ++queries;
      CHECK_FALSE(row.updated);
    }
  }
  CHECK(windows == r.records.size());
  CHECK(queries > 100);
  const auto trace = trace_from_rows(rows, r.trace.model());
  CHECK(trace.size() == r.records.size());
  // A query row matches the model prediction from its preceding window.
  for (const auto& row : rows) {
    if (row.estimate.k || row.estimate.t <= r.records.front().estimate.t) continue;
    const auto want = r.query(row.estimate.t);
    CHECK((row.estimate.x - want.x).norm() < 1e-9);
    break;
  }
}

TEST_CASE("malformed estimate logs are parse errors") {
  std::istringstream empty("");
  CHECK_THROWS_AS(read_estimate_log(empty), ParseError);
  std::istringstream header("t,k,x\n");
  CHECK_THROWS_AS(read_estimate_log(header), ParseError);
  std::istringstream short_row(std::string(kEstimateHeader) + "\n0,0,1,2\n");
  CHECK_THROWS_AS(read_estimate_log(short_row), ParseError);
  std::string row = "0.5,3";
  for (int i = 0; i < 20; ++i) row += ",0";
  std::istringstream bad_flag(std::string(kEstimateHeader) + "\n" + row + ",2\n");
  CHECK_THROWS_AS(read_estimate_log(bad_flag), ParseError);
  std::istringstream bad_num(std::string(kEstimateHeader) + "\n" + "0.5x,3" + row.substr(5) + ",1\n");
  CHECK_THROWS_AS(read_estimate_log(bad_num), ParseError);
  CHECK_THROWS_AS(read_estimate_log_file("/nonexistent/est.csv"), ConfigError);
}

TEST_CASE("detections log round trip and frame reconstruction") {
  const auto r = tracked();
  std::stringstream io;
  write_detections_log(io, r.frames);
  std::vector<std::int64_t> ks;
  const auto dets = read_detections_log(io, &ks);
  std::size_t total = 0;
  for (const auto& f : r.frames) total += f.detections.size();
  REQUIRE(dets.size() == total);
  REQUIRE(ks.size() == total);

  std::stringstream est;
  write_estimate_log(est, r, 500.0);
  const auto rows = read_estimate_log(est);
  const auto frames = frames_from_logs(rows, dets, ks);
  REQUIRE(frames.size() == r.frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    CHECK(frames[i].k == r.frames[i].k);
    CHECK(frames[i].t == r.frames[i].t);
    REQUIRE(frames[i].detections.size() == r.frames[i].detections.size());
    for (std::size_t j = 0; j < frames[i].detections.size(); ++j) {
      CHECK(frames[i].detections[j] == r.frames[i].detections[j]);
    }
  }
  std::istringstream bad("k,t,xmin,ymin,xmax,ymax,conf,cls\n0,1,2\n");
  CHECK_THROWS_AS(read_detections_log(bad), ParseError);
}

TEST_CASE("report JSON uses null for undefined values") {
  EvalReport rep;
  rep.e_x = 1.5;
  rep.e_gt = std::nan("");
  rep.t_s = 0.1;
  rep.t_f = 2.0;
  const auto j = nlohmann::json::parse(report_to_json(rep));
  CHECK(j["e_x"] == 1.5);
  CHECK(j["e_gt"].is_null());
  CHECK(j["precision"].is_null());
  CHECK(j["tp"].is_null());
  CHECK(j["coverage"].is_null());
  CHECK(j["t_f"] == 2.0);
  rep.precision = 0.75;
  rep.tp = 3;
  const auto k = nlohmann::json::parse(report_to_json(rep));
  CHECK(k["precision"] == 0.75);
  CHECK(k["tp"] == 3);
  for (const char* key : {"e_x", "e_gt", "precision", "recall", "tp", "fp", "fn", "coverage", "t_s", "t_f"}) {
    CHECK(k.contains(key));
  }
}
