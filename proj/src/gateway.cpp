#include "hybridrag/gateway.hpp"

#include <httplib.h>

#include <spdlog/spdlog.h>

#include "hybridrag/config.hpp"
#include "hybridrag/error.hpp"
#include "hybridrag/ingest.hpp"
#include "hybridrag/protocol.hpp"
#include "hybridrag/util.hpp"

namespace hybridrag {

using nlohmann::json;

namespace {

constexpr std::string_view kServerUnreachable = "server unreachable";
constexpr std::string_view kServerTimeout = "server timed out";
constexpr const char* kJson = "application/json";

GatewayReply local_error(int status, std::string_view message) {
  return {status, error_response(message).dump()};
}

void emit(httplib::Response& res, const GatewayReply& reply) {
  res.status = reply.status;
  res.set_content(reply.body, kJson);
}

}  // namespace

GatewayConfig GatewayConfig::from_env() {
  GatewayConfig c;
  if (auto v = env_value("HYBRIDRAG_GATEWAY_ADDR")) c.listen = parse_bind_address(*v);
  if (auto v = env_value("HYBRIDRAG_SERVER_ADDR")) c.upstream = parse_bind_address(*v);
  if (auto v = env_value("HYBRIDRAG_CORS_ORIGIN")) c.cors_origin = *v;
  return c;
}

int http_status_for_error(std::string_view m) {
  namespace pe = protocol_errors;
  if (m == pe::kEmbeddingUnavailable || m == pe::kGenerationUnavailable ||
      m == pe::kGenerationTimeout || m == pe::kGenerationFailed || m == pe::kIndexWriteFailed ||
      m == pe::kInternalError || m == kServerUnreachable || m == kServerTimeout) {
    return 502;
  }
  return 400;
}

Gateway::Gateway(GatewayConfig config)
    : config_(std::move(config)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

Gateway::~Gateway() { stop(); }

void Gateway::start() {
  const auto& addr = config_.listen;
  if (addr.port == 0) {
    int p = server_->bind_to_any_port(addr.host);
    if (p <= 0) throw Error(ErrorCode::kBindError, "cannot bind gateway port");
    port_ = static_cast<std::uint16_t>(p);
  } else {
    if (!server_->bind_to_port(addr.host, addr.port)) {
      throw Error(ErrorCode::kBindError, "cannot bind port " + std::to_string(addr.port));
    }
    port_ = addr.port;
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  spdlog::info("gateway listening on {}:{}", addr.host, port_);
}

void Gateway::wait() {
  if (thread_.joinable()) thread_.join();
}

void Gateway::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
  std::lock_guard lock(pool_mutex_);
  pool_.clear();
}

std::size_t Gateway::forwarded_count() const {
  std::lock_guard lock(pool_mutex_);
  return forwarded_;
}

std::unique_ptr<ProtocolClient> Gateway::acquire() {
  {
    std::lock_guard lock(pool_mutex_);
    ++forwarded_;
    if (!pool_.empty()) {
      auto c = std::move(pool_.back());
      pool_.pop_back();
      return c;
    }
  }
  return std::make_unique<ProtocolClient>(config_.upstream.host, config_.upstream.port,
                                          config_.upstream_timeout);
}

void Gateway::release(std::unique_ptr<ProtocolClient> client) {
  std::lock_guard lock(pool_mutex_);
  if (pool_.size() < config_.max_pooled_connections) pool_.push_back(std::move(client));
}

GatewayReply Gateway::forward(const json& request) {
  auto client = acquire();
  std::string line;
  try {
    line = client->round_trip(request.dump());
  } catch (const Error& e) {
    return local_error(502, e.code() == ErrorCode::kTimeout ? kServerTimeout : kServerUnreachable);
  }
  release(std::move(client));
  auto parsed = json::parse(line, nullptr, false);
  int status = 502;
  if (parsed.is_object()) {
    auto st = parsed.find("status");
    if (st != parsed.end() && *st == "ok") {
      status = 200;
    } else if (auto em = parsed.find("error_message"); em != parsed.end() && em->is_string()) {
      status = http_status_for_error(em->get<std::string>());
    }
  }
  return {status, std::move(line)};
}

void Gateway::install_routes() {
  auto& svr = *server_;
  svr.set_payload_max_length(config_.upload_cap_bytes + 1024u * 1024u);

  if (config_.cors_origin) {
    const std::string origin = *config_.cors_origin;
    svr.set_pre_routing_handler([origin](const httplib::Request& req, httplib::Response& res) {
      if (req.get_header_value("Origin") == origin) {
        res.set_header("Access-Control-Allow-Origin", origin);
        res.set_header("Vary", "Origin");
        res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
      }
      if (req.method == "OPTIONS") {
        res.status = 204;
        return httplib::Server::HandlerResponse::Handled;
      }
      return httplib::Server::HandlerResponse::Unhandled;
    });
  }

  svr.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) {
    emit(res, forward({{"command", "health"}, {"params", json::object()}}));
  });

  svr.Get("/api/documents", [this](const httplib::Request&, httplib::Response& res) {
    emit(res, forward({{"command", "list_documents"}, {"params", json::object()}}));
  });

  svr.Post("/api/documents", [this](const httplib::Request& req, httplib::Response& res) {
    if (!req.is_multipart_form_data() || !req.has_file("file")) {
      return emit(res, local_error(400, "invalid parameter: file"));
    }
    auto file = req.get_file_value("file");
    if (file.filename.empty()) return emit(res, local_error(400, "invalid parameter: filename"));
    if (file.content.size() > config_.upload_cap_bytes) {
      return emit(res, local_error(400, protocol_errors::kDocumentTooLarge));
    }
    std::string format;
    if (req.has_file("format")) {
      format = ascii_lower(trim(req.get_file_value("format").content));
    }
    try {
      if (!format.empty()) {
        format = std::string(to_string(parse_document_format(format)));
      } else if (auto f = format_from_filename(file.filename)) {
        format = std::string(to_string(*f));
      } else {
        return emit(res, local_error(400, protocol_errors::kUnsupportedFormat));
      }
    } catch (const Error&) {
      return emit(res, local_error(400, protocol_errors::kUnsupportedFormat));
    }
    json request{{"command", "upload_document"},
                 {"params",
                  {{"filename", file.filename},
                   {"format", format},
                   {"content_b64", base64_encode(file.content)}}}};
    emit(res, forward(request));
  });

  svr.Delete("/api/documents/:id", [this](const httplib::Request& req, httplib::Response& res) {
    const auto& id = req.path_params.at("id");
    emit(res, forward({{"command", "delete_document"}, {"params", {{"doc_id", id}}}}));
  });

  svr.Post("/api/query", [this](const httplib::Request& req, httplib::Response& res) {
    auto body = json::parse(req.body, nullptr, false);
    if (!body.is_object()) return emit(res, local_error(400, protocol_errors::kMalformedRequest));
    for (const char* key : {"session_id", "question"}) {
      auto it = body.find(key);
      if (it == body.end() || !it->is_string() || it->get<std::string>().empty()) {
        return emit(res, local_error(400, std::string("invalid parameter: ") + key));
      }
    }
    json request{{"command", "query"},
                 {"params", {{"session_id", body["session_id"]}, {"question", body["question"]}}}};
    emit(res, forward(request));
  });

  svr.Post("/api/sessions/:id/reset", [this](const httplib::Request& req, httplib::Response& res) {
    const auto& id = req.path_params.at("id");
    emit(res, forward({{"command", "reset_history"}, {"params", {{"session_id", id}}}}));
  });
}

}  // namespace hybridrag
