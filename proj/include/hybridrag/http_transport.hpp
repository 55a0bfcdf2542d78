#pragma once

#include <chrono>
#include <string>
#include <utility>
#include <vector>

namespace hybridrag {

struct HttpRequest {
  std::string url;  // scheme://host[:port]/path
  std::string body;
  std::string content_type = "application/json";
  std::vector<std::pair<std::string, std::string>> headers;
  std::chrono::milliseconds timeout{120000};
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Outbound HTTP. Every remote call the library makes (embeddings,
/// generation, judging) goes through one of these so tests can capture and
/// stub traffic.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  /// Throws Error(kEndpointUnavailable) when the host cannot be reached and
  /// Error(kTimeout) when the response does not arrive in time.
  virtual HttpResponse post(const HttpRequest& request) = 0;
};

class HttplibTransport final : public HttpTransport {
 public:
  HttpResponse post(const HttpRequest& request) override;
};

struct ParsedUrl {
  std::string scheme;
  std::string host;
  int port = 0;
  std::string path;

  std::string origin() const;
};

/// Throws Error(kInvalidArgument) for anything but http(s)://host[:port][/path].
ParsedUrl parse_url(const std::string& url);

}  // namespace hybridrag
