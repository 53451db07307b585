#include "evtrack/bridge.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstring>
#include <mutex>

#include <json.hpp>

#include "evtrack/error.hpp"

namespace evtrack::bridge {

using ojson = nlohmann::ordered_json;

namespace {

void append_double(std::string& out, double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{} || !std::isfinite(v)) throw ProtocolError("cannot encode non-finite number");
  std::string_view s(buf.data(), static_cast<std::size_t>(ptr - buf.data()));
  out.append(s);
  if (s.find_first_of(".eE") == std::string_view::npos) out.append(".0");
}

ojson box_json(const Detection& d) {
  ojson b;
  b["xmin"] = d.bbox.x_min;
  b["ymin"] = d.bbox.y_min;
  b["xmax"] = d.bbox.x_max;
  b["ymax"] = d.bbox.y_max;
  b["conf"] = d.confidence;
  b["cls"] = d.class_id;
  return b;
}

struct Encoder {
  std::string operator()(const Hello& m) const {
    ojson j;
    j["type"] = "hello";
    j["version"] = m.version;
    j["width"] = m.width;
    j["height"] = m.height;
    j["bins"] = m.bins;
    return j.dump();
  }
  std::string operator()(const Ready& m) const {
    ojson j;
    j["type"] = "ready";
    j["backend"] = m.backend;
    return j.dump();
  }
  std::string operator()(const DetectRequest& m) const {
    // Hand-rolled: windows can hold millions of events.
    std::string out;
    out.reserve(64 + m.events.size() * 32);
    out.append(R"({"type":"detect","k":)");
    out.append(std::to_string(m.k));
    out.append(R"(,"t_end":)");
    append_double(out, m.t_end);
    out.append(R"(,"events":[)");
    bool first = true;
    for (const Event& e : m.events) {
      if (!first) out.push_back(',');
      first = false;
      out.push_back('[');
      append_double(out, e.t);
      out.push_back(',');
      out.append(std::to_string(e.x));
      out.push_back(',');
      out.append(std::to_string(e.y));
      out.push_back(',');
      out.append(e.polarity > 0 ? "1" : "-1");
      out.push_back(']');
    }
    out.append("]}");
    return out;
  }
  std::string operator()(const DetectionsResponse& m) const {
    ojson j;
    j["type"] = "detections";
    j["k"] = m.k;
    j["boxes"] = ojson::array();
    for (const auto& d : m.boxes) j["boxes"].push_back(box_json(d));
    return j.dump();
  }
  std::string operator()(const ErrorResponse& m) const {
    ojson j;
    j["type"] = "error";
    if (m.k) j["k"] = *m.k;
    j["message"] = m.message;
    return j.dump();
  }
};

[[noreturn]] void bad(const std::string& what) { throw ProtocolError("protocol: " + what); }

const ojson& field(const ojson& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) bad(std::string("missing field '") + name + "'");
  return *it;
}

double number(const ojson& v, const char* name) {
  if (!v.is_number()) bad(std::string("field '") + name + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) bad(std::string("field '") + name + "' must be finite");
  return d;
}

std::int64_t integer(const ojson& v, const char* name) {
  const double d = number(v, name);
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (std::floor(d) != d || std::abs(d) > 9.0e15) {
    bad(std::string("field '") + name + "' must be integral");
  }
  return static_cast<std::int64_t>(d);
}

void only_keys(const ojson& j, std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) bad("unexpected field '" + it.key() + "'");
  }
}

Detection decode_box(const ojson& b) {
  if (!b.is_object()) bad("box must be an object");
  only_keys(b, {"xmin", "ymin", "xmax", "ymax", "conf", "cls"});
  Detection d;
  d.bbox = {number(field(b, "xmin"), "xmin"), number(field(b, "ymin"), "ymin"),
            number(field(b, "xmax"), "xmax"), number(field(b, "ymax"), "ymax")};
  d.confidence = number(field(b, "conf"), "conf");
  d.class_id = static_cast<int>(integer(field(b, "cls"), "cls"));
  if (!d.bbox.valid()) bad("degenerate box");
  if (d.confidence < 0.0 || d.confidence > 1.0) bad("confidence outside [0, 1]");
  return d;
}

}  // namespace

std::string encode(const Message& msg) { return std::visit(Encoder{}, msg); }

Message decode(std::string_view line) {
  ojson j;
  try {
    j = ojson::parse(line.begin(), line.end());
  } catch (const nlohmann::json::exception& e) {
    bad(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) bad("message must be a JSON object");
  const ojson& type_field = field(j, "type");
  if (!type_field.is_string()) bad("'type' must be a string");
  const auto type = type_field.get<std::string>();

  if (type == "hello") {
    only_keys(j, {"type", "version", "width", "height", "bins"});
    Hello h;
    h.version = static_cast<int>(integer(field(j, "version"), "version"));
    h.width = static_cast<int>(integer(field(j, "width"), "width"));
    h.height = static_cast<int>(integer(field(j, "height"), "height"));
    h.bins = static_cast<int>(integer(field(j, "bins"), "bins"));
    return h;
  }
  if (type == "ready") {
    only_keys(j, {"type", "backend"});
    const ojson& b = field(j, "backend");
    if (!b.is_string()) bad("'backend' must be a string");
    return Ready{b.get<std::string>()};
  }
  if (type == "detect") {
    only_keys(j, {"type", "k", "t_end", "events"});
    DetectRequest r;
    r.k = integer(field(j, "k"), "k");
    r.t_end = number(field(j, "t_end"), "t_end");
    const ojson& events = field(j, "events");
    if (!events.is_array()) bad("'events' must be an array");
    r.events.reserve(events.size());
    for (const ojson& e : events) {
      if (!e.is_array() || e.size() != 4) bad("event must be [t, x, y, p]");
      const double t = number(e[0], "t");
      const std::int64_t x = integer(e[1], "x");
      const std::int64_t y = integer(e[2], "y");
      const std::int64_t p = integer(e[3], "p");
      if (x < 0 || y < 0 || x > 0xFFFF || y > 0xFFFF) bad("event coordinate out of range");
      if (p != 1 && p != -1) bad("event polarity must be +1 or -1");
      r.events.push_back({t, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
                          static_cast<std::int8_t>(p)});
    }
    return r;
  }
  if (type == "detections") {
    only_keys(j, {"type", "k", "boxes"});
    DetectionsResponse r;
    r.k = integer(field(j, "k"), "k");
    const ojson& boxes = field(j, "boxes");
    if (!boxes.is_array()) bad("'boxes' must be an array");
    for (const ojson& b : boxes) r.boxes.push_back(decode_box(b));
    return r;
  }
  if (type == "error") {
    only_keys(j, {"type", "k", "message"});
    ErrorResponse r;
    if (auto it = j.find("k"); it != j.end() && !it->is_null()) r.k = integer(*it, "k");
    const ojson& m = field(j, "message");
    if (!m.is_string()) bad("'message' must be a string");
    r.message = m.get<std::string>();
    return r;
  }
  bad("unknown message type '" + type + "'");
}

// ---------------------------------------------------------------------------
// Transport

namespace {

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] {
    struct sigaction sa {};
    sa.sa_handler = SIG_IGN;
    sigemptyset(&sa.sa_mask);
    sigaction(SIGPIPE, &sa, nullptr);
  });
}

std::string errno_text() { return std::strerror(errno); }

}  // namespace

LineChannel::LineChannel(int read_fd, int write_fd) : read_fd_(read_fd), write_fd_(write_fd) {
  ignore_sigpipe();
}

LineChannel::~LineChannel() { close(); }

void LineChannel::close() {
  if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
  if (read_fd_ >= 0) ::close(read_fd_);
  read_fd_ = write_fd_ = -1;
  if (child_pid_ > 0) {
    int status = 0;
    ::waitpid(child_pid_, &status, 0);
    child_pid_ = -1;
  }
}

void LineChannel::send_line(std::string_view line) {
  if (write_fd_ < 0) throw ConnectionError("channel is closed");
  std::string data(line);
  data.push_back('\n');
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(write_fd_, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw ConnectionError("write failed: " + errno_text());
    }
    done += static_cast<std::size_t>(n);
  }
}

std::optional<std::string> LineChannel::try_recv_line(std::chrono::milliseconds timeout) {
  if (read_fd_ < 0) throw ConnectionError("channel is closed");
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  std::array<char, 65536> chunk{};
  while (true) {
    if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return line;
    }
    int wait_ms = -1;
    if (timeout.count() >= 0) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw ConnectionError("timed out waiting for the backend");
      wait_ms = static_cast<int>(left.count());
    }
    pollfd pfd{read_fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, wait_ms);
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw ConnectionError("poll failed: " + errno_text());
    }
    if (ready == 0) throw ConnectionError("timed out waiting for the backend");
    const ssize_t n = ::read(read_fd_, chunk.data(), chunk.size());
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw ConnectionError("read failed: " + errno_text());
    }
    if (n == 0) {
      if (!buffer_.empty()) throw ConnectionError("connection closed mid-message");
      return std::nullopt;
    }
    buffer_.append(chunk.data(), static_cast<std::size_t>(n));
  }
}

std::string LineChannel::recv_line(std::chrono::milliseconds timeout) {
  auto line = try_recv_line(timeout);
  if (!line) throw ConnectionError("connection closed by the backend");
  return *line;
}

std::unique_ptr<LineChannel> connect_tcp(const std::string& host, int port,
                                         std::chrono::milliseconds timeout) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
    throw ConnectionError("cannot resolve '" + host + "': " + gai_strerror(rc));
  }
  std::string last_error = "no addresses";
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    const int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
    if (rc < 0 && errno == EINPROGRESS) {
      pollfd pfd{fd, POLLOUT, 0};
      const int polled = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
      if (polled == 1) {
        int err = 0;
        socklen_t len = sizeof(err);
        ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        rc = err == 0 ? 0 : -1;
        errno = err;
      } else {
        rc = -1;
        if (polled == 0) errno = ETIMEDOUT;
      }
    }
    if (rc == 0) {
      ::fcntl(fd, F_SETFL, flags);
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      ::freeaddrinfo(res);
      return std::make_unique<LineChannel>(fd, fd);
    }
    last_error = errno_text();
    ::close(fd);
  }
  ::freeaddrinfo(res);
  throw ConnectionError("cannot connect to " + host + ":" + service + ": " + last_error);
}

std::unique_ptr<LineChannel> spawn_process(const std::string& command) {
  int to_child[2];
  int from_child[2];
  if (::pipe2(to_child, O_CLOEXEC) != 0) throw ConnectionError("pipe failed: " + errno_text());
  if (::pipe2(from_child, O_CLOEXEC) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw ConnectionError("pipe failed: " + errno_text());
  }
  const pid_t pid = ::fork();
  if (pid < 0) throw ConnectionError("fork failed: " + errno_text());
  if (pid == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  auto channel = std::make_unique<LineChannel>(from_child[0], to_child[1]);
  channel->attach_child(pid);
  return channel;
}

std::unique_ptr<LineChannel> open_address(const std::string& address,
                                          std::chrono::milliseconds timeout) {
  if (address.rfind("exec:", 0) == 0) return spawn_process(address.substr(5));
  std::string rest = address;
  if (rest.rfind("tcp://", 0) == 0) rest = rest.substr(6);
  const auto colon = rest.rfind(':');
  if (colon == std::string::npos || colon == 0) {
    throw ConfigError("bridge address must be tcp://host:port, host:port or exec:<command>");
  }
  int port = 0;
  const std::string port_text = rest.substr(colon + 1);
  auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || port <= 0 || port > 65535) {
    throw ConfigError("invalid bridge port '" + port_text + "'");
  }
  std::string host = rest.substr(0, colon);
  if (host.size() > 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
  return connect_tcp(host, port, timeout);
}

// ---------------------------------------------------------------------------
// Client

BridgeClient::BridgeClient(std::unique_ptr<LineChannel> channel, ClientOptions options)
    : channel_(std::move(channel)), options_(options) {}

Message BridgeClient::receive() {
  std::string line;
  try {
    line = channel_->recv_line(options_.timeout);
  } catch (const ConnectionError&) {
    broken_ = true;
    throw;
  }
  try {
    return decode(line);
  } catch (const ProtocolError&) {
    broken_ = true;
    throw;
  }
}

Ready BridgeClient::handshake(const SensorGeometry& geometry, int bins) {
  if (!connected()) throw ConnectionError("bridge is not connected");
  try {
    channel_->send_line(encode(Hello{kProtocolVersion, geometry.width, geometry.height, bins}));
  } catch (const ConnectionError&) {
    broken_ = true;
    throw;
  }
  Message reply = receive();
  if (auto* err = std::get_if<ErrorResponse>(&reply)) {
    broken_ = true;
    throw BackendError("backend refused handshake: " + err->message);
  }
  auto* ready = std::get_if<Ready>(&reply);
  if (ready == nullptr) {
    broken_ = true;
    throw ProtocolError("protocol: expected 'ready' after 'hello'");
  }
  ready_ = true;
  backend_ = ready->backend;
  return *ready;
}

std::vector<Detection> BridgeClient::detect(const EventWindow& window) {
  if (!connected()) throw ConnectionError("bridge connection is down");
  if (!ready_) throw ProtocolError("protocol: detect before handshake");
  DetectRequest req{window.index, window.t_end(), window.events};
  try {
    channel_->send_line(encode(req));
  } catch (const ConnectionError&) {
    broken_ = true;
    throw;
  }
  ++sent_;
  Message reply = receive();
  if (auto* err = std::get_if<ErrorResponse>(&reply)) {
    if (err->k && *err->k != window.index) {
      broken_ = true;
      throw ProtocolError("protocol: error response for k=" + std::to_string(*err->k) +
                          " while waiting for k=" + std::to_string(window.index));
    }
    throw BackendError("backend error for window " + std::to_string(window.index) + ": " +
                       err->message);
  }
  auto* resp = std::get_if<DetectionsResponse>(&reply);
  if (resp == nullptr) {
    broken_ = true;
    throw ProtocolError("protocol: expected 'detections'");
  }
  if (resp->k != window.index) {
    broken_ = true;
    throw ProtocolError("protocol: response k=" + std::to_string(resp->k) +
                        " does not echo request k=" + std::to_string(window.index));
  }
  for (auto& d : resp->boxes) d.t = window.t_end();
  return std::move(resp->boxes);
}

std::vector<Detection> BridgeDetector::detect(const EventWindow& window, const EventTensor&) {
  return client_->detect(window);
}

}  // namespace evtrack::bridge
