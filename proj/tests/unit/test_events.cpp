#include <doctest.h>

#include <sstream>

#include "evtrack/error.hpp"
#include "evtrack/events.hpp"
#include "evtrack/rng.hpp"
#include "oracles.hpp"

using namespace evtrack;

namespace {

std::vector<Event> ramp(int n, double dt = 1e-3) {
  std::vector<Event> out;
  for (int i = 0; i < n; ++i) {
    out.push_back({i * dt, static_cast<std::uint16_t>(i % 7), static_cast<std::uint16_t>(i % 5),
                   static_cast<std::int8_t>(i % 2 ? -1 : 1)});
  }
  return out;
}

}  // namespace

TEST_CASE("text line maps to an event") {
  const auto ev = parse_events("0.003500 120 64 1\n", EventFormat::text, SensorGeometry{240, 180});
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].t == 0.0035);
  CHECK(ev[0].x == 120);
  CHECK(ev[0].y == 64);
  CHECK(ev[0].polarity == 1);
}

TEST_CASE("polarity 0 decodes as -1, comments and blank lines are skipped") {
  const auto ev = parse_events("# header\n\n0.1 1 2 0\n0.2 3 4 1\n", EventFormat::text);
  REQUIRE(ev.size() == 2);
  CHECK(ev[0].polarity == -1);
  CHECK(ev[1].polarity == 1);
}

TEST_CASE("empty source gives no events") {
  CHECK(parse_events("", EventFormat::text).empty());
  CHECK(parse_events("", EventFormat::binary).empty());
}

TEST_CASE("coordinate outside the geometry is a validation error") {
  CHECK_THROWS_AS(parse_events("0.1 500 10 1\n", EventFormat::text, SensorGeometry{240, 180}),
                  ValidationError);
  CHECK_THROWS_AS(parse_events("0.1 -1 10 1\n", EventFormat::text), ValidationError);
}

TEST_CASE("malformed line reports its byte offset") {
  const std::string text = "0.1 1 1 1\n0.2 1 x 1\n";
  try {
    parse_events(text, EventFormat::text);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 10);
  }
  CHECK_THROWS_AS(parse_events("0.1 1 1\n", EventFormat::text), ParseError);
  CHECK_THROWS_AS(parse_events("0.1 1 1 2\n", EventFormat::text), ParseError);
}

TEST_CASE("binary format round-trips and rejects truncation") {
  const auto ev = ramp(50);
  std::ostringstream out;
  write_events(out, ev, EventFormat::binary);
  const std::string bytes = out.str();
  CHECK(bytes.size() == 50 * kBinaryRecordSize);
  const auto back = parse_events(bytes, EventFormat::binary);
  REQUIRE(back.size() == ev.size());
  for (std::size_t i = 0; i < ev.size(); ++i) {
    CHECK(back[i].t == ev[i].t);
    CHECK(back[i].x == ev[i].x);
    CHECK(back[i].polarity == ev[i].polarity);
  }
  CHECK_THROWS_AS(parse_events(bytes.substr(0, bytes.size() - 3), EventFormat::binary), ParseError);
}

TEST_CASE("text format round-trips timestamps exactly") {
  Rng rng(3);
  std::vector<Event> ev;
  double t = 0;
  for (int i = 0; i < 1000; ++i) {
    t += rng.exponential(1e5);
    ev.push_back({t, 1, 2, 1});
  }
  std::ostringstream out;
  write_events(out, ev, EventFormat::text);
  const auto back = parse_events(out.str(), EventFormat::text);
  REQUIRE(back.size() == ev.size());
  for (std::size_t i = 0; i < ev.size(); ++i) CHECK(back[i].t == ev[i].t);
}

TEST_CASE("10 events with N=4 give 2 windows and 2 pending") {
  const auto ev = ramp(10);
  const auto w = window_by_count(ev, 4);
  REQUIRE(w.windows.size() == 2);
  CHECK(w.windows[0].events.front().t == ev[0].t);
  CHECK(w.windows[1].events.back().t == ev[7].t);
  CHECK(w.windows[1].index == 1);
  REQUIRE(w.pending.size() == 2);
  CHECK(w.pending[0].t == ev[8].t);
}

TEST_CASE("N=1 gives one window per event") {
  const auto ev = ramp(6);
  const auto w = window_by_count(ev, 1);
  REQUIRE(w.windows.size() == 6);
  for (const auto& win : w.windows) CHECK(win.t_start() == win.t_end());
  CHECK(w.pending.empty());
}

TEST_CASE("events per pixel conversion") {
  CHECK(WindowConfig::with_events_per_pixel(0.2315).events_per_window({240, 180}) == 10001);
  CHECK(WindowConfig::with_events_per_pixel(1e-9).events_per_window({240, 180}) == 1);
  CHECK_THROWS_AS(WindowConfig::with_count(0).events_per_window({240, 180}), ConfigError);
  CHECK_THROWS_AS(WindowConfig::with_events_per_pixel(-1).events_per_window({240, 180}),
                  ConfigError);
}

TEST_CASE("decreasing timestamp names the offending index") {
  auto ev = ramp(8);
  ev[5].t = ev[4].t - 1e-6;
  EventWindower w(3);
  try {
    for (const auto& e : ev) w.push(e);
    FAIL("expected OrderingError");
  } catch (const OrderingError& e) {
    CHECK(e.index() == 5);
  }
}

TEST_CASE("tied timestamps across a boundary split by count") {
  std::vector<Event> ev(6, Event{0.5, 1, 1, 1});
  const auto w = window_by_count(ev, 4);
  REQUIRE(w.windows.size() == 1);
  CHECK(w.windows[0].events.size() == 4);
  CHECK(w.pending.size() == 2);
}

TEST_CASE("tensor boundary cases") {
  const SensorGeometry g{8, 6};
  SUBCASE("single event lands in bin 0") {
    EventWindow w{0, {{1.0, 3, 2, -1}}};
    const auto t = build_event_tensor(w, g, 5);
    CHECK(t.at(0, 2, 3) == -1.0);
    CHECK(t.sum() == -1.0);
  }
  SUBCASE("midpoint split at bin coordinate 1.5") {
    // t* = 1.5 / 4 = 0.375 over [0, 1].
    EventWindow w{0, {{0.0, 0, 0, 1}, {0.375, 4, 4, 1}, {1.0, 7, 5, 1}}};
    const auto t = build_event_tensor(w, g, 5);
    CHECK(t.at(1, 4, 4) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(t.at(2, 4, 4) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(t.at(0, 0, 0) == 1.0);
    CHECK(t.at(4, 5, 7) == 1.0);
  }
  SUBCASE("zero-duration window puts all mass in bin 0") {
    EventWindow w{0, {{2.0, 1, 1, 1}, {2.0, 2, 1, 1}, {2.0, 1, 1, -1}}};
    const auto t = build_event_tensor(w, g, 3);
    CHECK(t.at(0, 1, 1) == 0.0);
    CHECK(t.at(0, 1, 2) == 1.0);
    CHECK(t.sum() == 1.0);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(build_event_tensor(EventWindow{}, g, 5), DomainError);
    EventWindow w{0, {{0.0, 1, 1, 1}}};
    CHECK_THROWS_AS(build_event_tensor(w, g, 0), DomainError);
    EventWindow out{0, {{0.0, 8, 1, 1}}};
    CHECK_THROWS_AS(build_event_tensor(out, g, 5), ValidationError);
  }
}

TEST_CASE("tensor matches the direct-loop oracle") {
  Rng rng(42);
  const SensorGeometry g{32, 24};
  for (int trial = 0; trial < 50; ++trial) {
    EventWindow w;
    w.index = trial;
    double t = rng.uniform();
    const int n = 1 + static_cast<int>(rng.below(300));
    for (int i = 0; i < n; ++i) {
      t += rng.bernoulli(0.1) ? 0.0 : rng.exponential(1000.0);
      w.events.push_back({t, static_cast<std::uint16_t>(rng.below(32)),
                          static_cast<std::uint16_t>(rng.below(24)),
                          static_cast<std::int8_t>(rng.bernoulli(0.5) ? 1 : -1)});
    }
    const int bins = 1 + static_cast<int>(rng.below(9));
    const auto got = build_event_tensor(w, g, bins);
    const auto want = oracle::tensor(w, 32, 24, bins);
    REQUIRE(got.grid.size() == want.size());
    double err = 0.0;
    for (std::size_t i = 0; i < want.size(); ++i) err = std::max(err, std::abs(got.grid[i] - want[i]));
    CHECK(err < 1e-12);
    CHECK(got.t_end == w.t_end());
    CHECK(got.window_index == trial);
  }
}

TEST_CASE("streaming reader is lazy and matches bulk parse") {
  std::istringstream in("0.1 1 1 1\n0.2 2 2 0\n");
  EventReader reader(in, EventFormat::text);
  auto a = reader.next();
  REQUIRE(a);
  CHECK(a->x == 1);
  auto b = reader.next();
  REQUIRE(b);
  CHECK(b->polarity == -1);
  CHECK_FALSE(reader.next());
}

TEST_CASE("format names and extensions") {
  CHECK(format_from_path("a.bin") == EventFormat::binary);
  CHECK(format_from_path("a.raw") == EventFormat::binary);
  CHECK(format_from_path("a.txt") == EventFormat::text);
  CHECK(parse_format_name("binary") == EventFormat::binary);
  CHECK_FALSE(parse_format_name("hdf5"));
}
