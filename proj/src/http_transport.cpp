#include <httplib.h>

#include "hybridrag/http_transport.hpp"

#include "hybridrag/error.hpp"

namespace hybridrag {

std::string ParsedUrl::origin() const {
  return scheme + "://" + host + ":" + std::to_string(port);
}

ParsedUrl parse_url(const std::string& url) {
  ParsedUrl out;
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument, "url lacks scheme");
  }
  out.scheme = url.substr(0, scheme_end);
  if (out.scheme != "http" && out.scheme != "https") {
    throw Error(ErrorCode::kInvalidArgument, "unsupported url scheme");
  }
  auto rest = url.substr(scheme_end + 3);
  auto slash = rest.find('/');
  std::string authority = rest.substr(0, slash);
  out.path = slash == std::string::npos ? "/" : rest.substr(slash);
  auto colon = authority.rfind(':');
  if (colon != std::string::npos && authority.find(']') == std::string::npos) {
    out.host = authority.substr(0, colon);
    try {
      out.port = std::stoi(authority.substr(colon + 1));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, "invalid url port");
    }
  } else {
    out.host = authority;
    out.port = out.scheme == "https" ? 443 : 80;
  }
  if (out.host.empty()) throw Error(ErrorCode::kInvalidArgument, "url lacks host");
  return out;
}

HttpResponse HttplibTransport::post(const HttpRequest& request) {
  const auto url = parse_url(request.url);
  httplib::Client client(url.origin());
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
  const auto usecs =
      std::chrono::duration_cast<std::chrono::microseconds>(request.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  for (const auto& [k, v] : request.headers) headers.emplace(k, v);

  const auto started = std::chrono::steady_clock::now();
  auto result = client.Post(url.path, headers, request.body, request.content_type);
  if (!result) {
    const auto elapsed = std::chrono::steady_clock::now() - started;
    const auto err = result.error();
    if (err == httplib::Error::ConnectionTimeout ||
        (err == httplib::Error::Read && elapsed >= request.timeout)) {
      throw Error(ErrorCode::kTimeout, "request timed out");
    }
    if (err == httplib::Error::Read || err == httplib::Error::Write) {
      throw Error(ErrorCode::kModelError, "connection dropped");
    }
    throw Error(ErrorCode::kEndpointUnavailable, "endpoint unavailable");
  }
  return HttpResponse{result->status, result->body};
}

}  // namespace hybridrag
