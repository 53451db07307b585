#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "evtrack/detection.hpp"
#include "evtrack/events.hpp"

namespace evtrack::bridge {

// Newline-delimited JSON messages exchanged with a detection backend.

inline constexpr int kProtocolVersion = 1;

struct Hello {
  int version = kProtocolVersion;
  int width = 0;
  int height = 0;
  int bins = 0;
};

struct Ready {
  std::string backend;
};

struct DetectRequest {
  std::int64_t k = 0;
  double t_end = 0.0;
  std::vector<Event> events;  ///< serialized as [t, x, y, p] with p = +1 / -1
};

/// Detections for request k. Detection::t is left at 0 on the wire; the
/// client stamps it with the window time.
struct DetectionsResponse {
  std::int64_t k = 0;
  std::vector<Detection> boxes;
};

struct ErrorResponse {
  std::optional<std::int64_t> k;
  std::string message;
};

using Message = std::variant<Hello, Ready, DetectRequest, DetectionsResponse, ErrorResponse>;

/// One JSON object, no trailing newline.
std::string encode(const Message& msg);

/// Strict decoder. Throws ProtocolError on invalid JSON, unknown type,
/// missing or mistyped fields.
Message decode(std::string_view line);

/// Bidirectional line channel over a pair of file descriptors (a socket, or
/// the pipes of a child process). Owns the descriptors.
class LineChannel {
 public:
  LineChannel(int read_fd, int write_fd);
  ~LineChannel();
  LineChannel(const LineChannel&) = delete;
  LineChannel& operator=(const LineChannel&) = delete;

  /// Writes line + '\n'. Throws ConnectionError on failure.
  void send_line(std::string_view line);

  /// Next line without the newline. Throws ConnectionError on EOF, error or
  /// timeout (a negative timeout waits forever).
  std::string recv_line(std::chrono::milliseconds timeout);

  /// Like recv_line but returns nullopt on a clean EOF.
  std::optional<std::string> try_recv_line(std::chrono::milliseconds timeout);

  void close();

  /// Child process attached to this channel, if any (reaped on close).
  void attach_child(int pid) { child_pid_ = pid; }

 private:
  int read_fd_;
  int write_fd_;
  int child_pid_ = -1;
  std::string buffer_;
};

/// "tcp://host:port" or "host:port".
std::unique_ptr<LineChannel> connect_tcp(const std::string& host, int port,
                                         std::chrono::milliseconds timeout);

/// Runs `sh -c command` with its stdin/stdout connected to the channel.
std::unique_ptr<LineChannel> spawn_process(const std::string& command);

/// Parses "tcp://host:port", "host:port" or "exec:<command>" and connects.
std::unique_ptr<LineChannel> open_address(const std::string& address,
                                          std::chrono::milliseconds timeout);

struct ClientOptions {
  std::chrono::milliseconds timeout{5000};
};

/// Client side of the protocol. One request in flight; responses must echo k
/// and arrive in order.
class BridgeClient {
 public:
  BridgeClient(std::unique_ptr<LineChannel> channel, ClientOptions options = {});

  /// Sends hello and waits for ready. Throws BackendError if the backend
  /// refuses, ProtocolError on anything else unexpected.
  Ready handshake(const SensorGeometry& geometry, int bins);

  /// Sends the raw window and returns the backend's boxes stamped with t_end.
  /// ConnectionError: transport failure or timeout (the client is then dead).
  /// ProtocolError: malformed response or k mismatch.
  /// BackendError: backend reported an error for this window.
  std::vector<Detection> detect(const EventWindow& window);

  bool connected() const noexcept { return channel_ != nullptr && !broken_; }
  const std::string& backend() const noexcept { return backend_; }
  std::int64_t requests_sent() const noexcept { return sent_; }

 private:
  Message receive();

  std::unique_ptr<LineChannel> channel_;
  ClientOptions options_;
  bool ready_ = false;
  bool broken_ = false;
  std::string backend_;
  std::int64_t sent_ = 0;
};

/// Detector backed by a bridge connection.
class BridgeDetector final : public Detector {
 public:
  explicit BridgeDetector(std::unique_ptr<BridgeClient> client) : client_(std::move(client)) {}

  std::vector<Detection> detect(const EventWindow& window, const EventTensor& tensor) override;
  std::string name() const override { return "bridge:" + client_->backend(); }

  BridgeClient& client() noexcept { return *client_; }

 private:
  std::unique_ptr<BridgeClient> client_;
};

}  // namespace evtrack::bridge
