#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <thread>

#include "evtrack/bridge.hpp"
#include "evtrack/error.hpp"
#include "evtrack/rng.hpp"
#include "mock_bridge.hpp"

using namespace evtrack;
using namespace evtrack::bridge;
using evtrack::testing::MockConfig;
using evtrack::testing::MockServer;
using namespace std::chrono_literals;

namespace {

EventWindow make_window(std::int64_t k, int n, double t0) {
  EventWindow w{k, {}};
  for (int i = 0; i < n; ++i) {
    w.events.push_back({t0 + i * 1e-5, static_cast<std::uint16_t>(i % 240),
                        static_cast<std::uint16_t>(i % 180), static_cast<std::int8_t>(i % 3 ? 1 : -1)});
  }
  return w;
}

const Detection kBox{{10, 20, 30, 60}, 0.75, 0, 0.0};

}  // namespace

TEST_CASE("messages encode to the documented shapes") {
  CHECK(encode(Hello{1, 240, 180, 5}) ==
        R"({"type":"hello","version":1,"width":240,"height":180,"bins":5})");
  CHECK(encode(Ready{"e2vid+yolo"}) == R"({"type":"ready","backend":"e2vid+yolo"})");
  DetectRequest r{3, 0.5, {{0.25, 1, 2, -1}, {0.5, 3, 4, 1}}};
  CHECK(encode(r) ==
        R"({"type":"detect","k":3,"t_end":0.5,"events":[[0.25,1,2,-1],[0.5,3,4,1]]})");
  // Integral timestamps keep a fraction so they stay doubles on the wire.
  CHECK(encode(DetectRequest{0, 2.0, {{2.0, 0, 0, 1}}}) ==
        R"({"type":"detect","k":0,"t_end":2.0,"events":[[2.0,0,0,1]]})");
  // Integral doubles are accepted where integers are expected.
  const auto loose = std::get<DetectRequest>(
      decode(R"({"type":"detect","k":1.0,"t_end":1,"events":[[1,2.0,3.0,-1.0]]})"));
  CHECK(loose.events[0].y == 3);
  CHECK(encode(ErrorResponse{7, "boom"}) == R"({"type":"error","k":7,"message":"boom"})");
}

TEST_CASE("decode round-trips every message type") {
  const DetectionsResponse d{4, {kBox}};
  const auto back = std::get<DetectionsResponse>(decode(encode(d)));
  CHECK(back.k == 4);
  REQUIRE(back.boxes.size() == 1);
  CHECK(back.boxes[0].bbox.x_max == 30);
  CHECK(back.boxes[0].confidence == 0.75);
  const auto h = std::get<Hello>(decode(encode(Hello{1, 64, 48, 3})));
  CHECK(h.bins == 3);
  const auto e = std::get<ErrorResponse>(decode(R"({"type":"error","message":"x"})"));
  CHECK_FALSE(e.k);
}

TEST_CASE("strict decoder rejects schema violations") {
  CHECK_THROWS_AS(decode("not json"), ProtocolError);
  CHECK_THROWS_AS(decode(R"({"type":"nope"})"), ProtocolError);
  CHECK_THROWS_AS(decode(R"({"type":"ready"})"), ProtocolError);
  CHECK_THROWS_AS(decode(R"({"type":"ready","backend":"m","extra":1})"), ProtocolError);
  CHECK_THROWS_AS(decode(R"({"type":"detect","k":0,"t_end":1,"events":[[1,2,3,0]]})"), ProtocolError);
  CHECK_THROWS_AS(decode(R"({"type":"detect","k":0,"t_end":1,"events":[[1,2,3]]})"), ProtocolError);
  CHECK_THROWS_AS(decode(R"({"type":"detect","k":0.5,"t_end":1,"events":[]})"), ProtocolError);
  CHECK_THROWS_AS(decode(R"({"type":"detections","k":0,"boxes":[{"xmin":0}]})"), ProtocolError);
  CHECK_THROWS_AS(decode(R"([1,2])"), ProtocolError);
}

TEST_CASE("1e6 random events re-serialize byte-identically") {
  Rng rng(12);
  DetectRequest r;
  r.k = 123456789;
  double t = 1e-3;
  r.events.reserve(1000000);
  for (int i = 0; i < 1000000; ++i) {
    t += rng.exponential(1e6);
    r.events.push_back({t, static_cast<std::uint16_t>(rng.below(65536)),
                        static_cast<std::uint16_t>(rng.below(65536)),
                        static_cast<std::int8_t>(rng.bernoulli(0.5) ? 1 : -1)});
  }
  r.t_end = t;
  const std::string once = encode(r);
  const auto parsed = std::get<DetectRequest>(decode(once));
  REQUIRE(parsed.events.size() == r.events.size());
  bool equal = true;
  for (std::size_t i = 0; i < r.events.size(); ++i) {
    equal &= parsed.events[i].t == r.events[i].t && parsed.events[i].x == r.events[i].x &&
             parsed.events[i].y == r.events[i].y && parsed.events[i].polarity == r.events[i].polarity;
  }
  CHECK(equal);
  CHECK(encode(parsed) == once);
}

TEST_CASE("loopback: configured box comes back stamped with t_end") {
  MockConfig cfg;
  cfg.responses = {{kBox}};
  MockServer server(cfg);
  BridgeClient client(server.take_client(), {1000ms});
  CHECK(client.handshake({240, 180}, 5).backend == "mock");
  for (int k = 0; k < 5; ++k) {
    const auto w = make_window(k, 50, k * 0.1);
    const auto d = client.detect(w);
    REQUIRE(d.size() == 1);
    CHECK(d[0].bbox.x_min == 10);
    CHECK(d[0].confidence == 0.75);
    CHECK(d[0].t == w.t_end());
  }
  CHECK(client.requests_sent() == 5);
  client = BridgeClient(nullptr);
  const auto stats = server.finish();
  CHECK(stats.requests == 5);
  CHECK(stats.violations == 0);
  CHECK(stats.events == 250);
}

TEST_CASE("detect before handshake is refused client-side") {
  MockServer server(MockConfig{});
  BridgeClient client(server.take_client());
  CHECK_THROWS_AS(client.detect(make_window(0, 3, 0.0)), ProtocolError);
}

TEST_CASE("handshake refusal is a backend error") {
  MockConfig cfg;
  cfg.expect_bins = 5;
  MockServer server(cfg);
  BridgeClient client(server.take_client(), {1000ms});
  CHECK_THROWS_AS(client.handshake({240, 180}, 3), BackendError);
}

TEST_CASE("dropped connection surfaces as ConnectionError within the timeout") {
  MockConfig cfg;
  cfg.drop_after = 3;
  MockServer server(cfg);
  BridgeClient client(server.take_client(), {2000ms});
  client.handshake({240, 180}, 5);
  for (int k = 0; k < 3; ++k) client.detect(make_window(k, 10, k * 0.1));
  const auto start = std::chrono::steady_clock::now();
  CHECK_THROWS_AS(client.detect(make_window(3, 10, 0.3)), ConnectionError);
  CHECK(std::chrono::steady_clock::now() - start < 2000ms);
  CHECK_FALSE(client.connected());
  CHECK_THROWS_AS(client.detect(make_window(4, 10, 0.4)), ConnectionError);
}

TEST_CASE("stalled backend times out") {
  MockConfig cfg;
  cfg.stall_at = 0;
  MockServer server(cfg);
  BridgeClient client(server.take_client(), {150ms});
  client.handshake({240, 180}, 5);
  const auto start = std::chrono::steady_clock::now();
  CHECK_THROWS_AS(client.detect(make_window(0, 10, 0.0)), ConnectionError);
  const auto took = std::chrono::steady_clock::now() - start;
  CHECK(took >= 140ms);
  CHECK(took < 1500ms);
}

TEST_CASE("k mismatch is a protocol error, backend error is recoverable") {
  MockConfig cfg;
  cfg.error_at = 0;
  cfg.wrong_k_at = 2;
  MockServer server(cfg);
  BridgeClient client(server.take_client(), {1000ms});
  client.handshake({240, 180}, 5);
  CHECK_THROWS_AS(client.detect(make_window(0, 10, 0.0)), BackendError);
  CHECK(client.connected());
  CHECK(client.detect(make_window(1, 10, 0.1)).empty());
  CHECK_THROWS_AS(client.detect(make_window(2, 10, 0.2)), ProtocolError);
  CHECK_FALSE(client.connected());
}

TEST_CASE("exec: address runs the mock as a child process") {
  auto channel = open_address(std::string("exec:") + EVTRACK_MOCK_BRIDGE +
                                  " --box 1,2,3,4,0.5,0 --bins 5",
                              1000ms);
  BridgeClient client(std::move(channel), {2000ms});
  client.handshake({64, 48}, 5);
  const auto d = client.detect(make_window(0, 20, 1.0));
  REQUIRE(d.size() == 1);
  CHECK(d[0].bbox.y_max == 4);
}

TEST_CASE("tcp transport") {
  const int srv = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  REQUIRE(::bind(srv, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
  REQUIRE(::listen(srv, 1) == 0);
  socklen_t len = sizeof addr;
  ::getsockname(srv, reinterpret_cast<sockaddr*>(&addr), &len);
  const int port = ntohs(addr.sin_port);

  testing::MockStats stats;
  std::thread server([&] {
    const int fd = ::accept(srv, nullptr, nullptr);
    LineChannel ch(fd, fd);
    MockConfig cfg;
    cfg.responses = {{kBox}};
    stats = testing::serve_mock(ch, cfg);
  });
  {
    BridgeClient client(open_address("tcp://127.0.0.1:" + std::to_string(port), 1000ms), {1000ms});
    client.handshake({240, 180}, 5);
    for (int k = 0; k < 20; ++k) CHECK(client.detect(make_window(k, 5, k * 0.01)).size() == 1);
  }
  server.join();
  ::close(srv);
  CHECK(stats.requests == 20);
  CHECK(stats.violations == 0);

  // Nothing listens on the port any more.
  CHECK_THROWS_AS(open_address("127.0.0.1:" + std::to_string(port), 500ms), ConnectionError);
  CHECK_THROWS_AS(open_address("bogus", 500ms), ConfigError);
}
