#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "hybridrag/tcp_server.hpp"

namespace httplib {
class Server;
}

namespace hybridrag {

struct GatewayConfig {
  BindAddress listen{"127.0.0.1", 8000};
  BindAddress upstream{"127.0.0.1", 7878};
  /// Browser origin allowed by CORS; unset disables CORS headers.
  std::optional<std::string> cors_origin;
  std::size_t upload_cap_bytes = 100u * 1024u * 1024u;
  std::chrono::milliseconds upstream_timeout = std::chrono::seconds(300);
  std::size_t max_pooled_connections = 8;

  /// HYBRIDRAG_GATEWAY_ADDR, HYBRIDRAG_SERVER_ADDR, HYBRIDRAG_CORS_ORIGIN.
  static GatewayConfig from_env();
};

struct GatewayReply {
  int status = 200;
  std::string body;
};

/// REST facade over the line protocol. Holds no sessions and no document
/// content; every response body is the protocol server's response line.
///
///     POST   /api/documents            multipart "file" (+ optional "format")
///     GET    /api/documents
///     DELETE /api/documents/{id}
///     POST   /api/query                {"session_id", "question"}
///     POST   /api/sessions/{id}/reset
///     GET    /api/health
class Gateway {
 public:
  explicit Gateway(GatewayConfig config);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Binds and serves in the background. Throws Error(kBindError).
  void start();
  void wait();
  void stop();
  std::uint16_t port() const noexcept { return port_; }

  /// Sends one protocol request upstream and maps the outcome to HTTP:
  /// 200 on status=ok, 400 on request errors, 502 on upstream failures.
  GatewayReply forward(const nlohmann::json& request);

  /// Total protocol requests sent upstream.
  std::size_t forwarded_count() const;

 private:
  void install_routes();
  std::unique_ptr<ProtocolClient> acquire();
  void release(std::unique_ptr<ProtocolClient> client);

  GatewayConfig config_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::uint16_t port_ = 0;
  mutable std::mutex pool_mutex_;
  std::vector<std::unique_ptr<ProtocolClient>> pool_;
  std::size_t forwarded_ = 0;
};

/// HTTP status for a protocol error message.
int http_status_for_error(std::string_view error_message);

}  // namespace hybridrag
