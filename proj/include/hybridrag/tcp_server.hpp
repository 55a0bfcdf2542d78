#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "hybridrag/protocol.hpp"

namespace hybridrag {

struct BindAddress {
  std::string host = "127.0.0.1";
  std::uint16_t port = 7878;
};

/// Parses "host:port" (or ":port"). Throws Error(kInvalidArgument).
BindAddress parse_bind_address(const std::string& text);

/// Newline-delimited JSON over TCP. One thread per connection; requests on a
/// connection are answered in order, one response line per request line.
class TcpServer {
 public:
  TcpServer(std::shared_ptr<ProtocolHandler> handler, BindAddress address,
            std::size_t max_line_bytes = 150u * 1024u * 1024u);
  ~TcpServer();
  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  /// Binds, listens and starts accepting in the background. Port 0 picks
  /// an ephemeral port. Throws Error(kBindError).
  void start();
  /// Blocks until stop() is called from another thread.
  void wait();
  void stop();

  std::uint16_t port() const noexcept { return bound_port_; }
  bool running() const noexcept { return running_; }

 private:
  void accept_loop();
  void serve_connection(int fd);

  std::shared_ptr<ProtocolHandler> handler_;
  BindAddress address_;
  std::size_t max_line_bytes_;
  int listen_fd_ = -1;
  std::uint16_t bound_port_ = 0;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::mutex conn_mutex_;
  std::vector<int> conn_fds_;
  std::vector<std::thread> conn_threads_;
};

/// Blocking client for the line protocol. Connects lazily and reconnects
/// once if the cached connection has gone stale.
class ProtocolClient {
 public:
  ProtocolClient(std::string host, std::uint16_t port,
                 std::chrono::milliseconds timeout = std::chrono::seconds(300));
  ~ProtocolClient();
  ProtocolClient(const ProtocolClient&) = delete;
  ProtocolClient& operator=(const ProtocolClient&) = delete;

  /// Sends one line (a '\n' is appended) and returns the response line.
  /// Throws Error(kEndpointUnavailable) when the server cannot be reached.
  std::string round_trip(const std::string& line);
  void close();

 private:
  void connect_socket();
  std::string host_;
  std::uint16_t port_;
  std::chrono::milliseconds timeout_;
  int fd_ = -1;
  std::string buffer_;
};

}  // namespace hybridrag
