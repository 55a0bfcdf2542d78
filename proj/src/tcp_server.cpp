#include "hybridrag/tcp_server.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <spdlog/spdlog.h>

#include "hybridrag/error.hpp"

namespace hybridrag {

BindAddress parse_bind_address(const std::string& text) {
  BindAddress out;
  auto colon = text.rfind(':');
  if (colon == std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument, "bind address must be host:port");
  }
  if (colon > 0) out.host = text.substr(0, colon);
  try {
    int port = std::stoi(text.substr(colon + 1));
    if (port < 0 || port > 65535) throw std::out_of_range("port");
    out.port = static_cast<std::uint16_t>(port);
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidArgument, "invalid port in bind address");
  }
  return out;
}

namespace {

bool send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

bool resolve_ipv4(const std::string& host, in_addr& out) {
  if (host.empty() || host == "0.0.0.0") {
    out.s_addr = htonl(INADDR_ANY);
    return true;
  }
  if (::inet_pton(AF_INET, host.c_str(), &out) == 1) return true;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) return false;
  out = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  ::freeaddrinfo(res);
  return true;
}

}  // namespace

TcpServer::TcpServer(std::shared_ptr<ProtocolHandler> handler, BindAddress address,
                     std::size_t max_line_bytes)
    : handler_(std::move(handler)), address_(std::move(address)), max_line_bytes_(max_line_bytes) {}

TcpServer::~TcpServer() { stop(); }

void TcpServer::start() {
  in_addr addr{};
  if (!resolve_ipv4(address_.host, addr)) throw Error(ErrorCode::kBindError, "cannot resolve bind host");
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw Error(ErrorCode::kBindError, "socket() failed");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_addr = addr;
  sa.sin_port = htons(address_.port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) != 0 ||
      ::listen(listen_fd_, 64) != 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw Error(ErrorCode::kBindError, "cannot bind port " + std::to_string(address_.port));
  }
  socklen_t len = sizeof(sa);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&sa), &len);
  bound_port_ = ntohs(sa.sin_port);
  running_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
  spdlog::info("protocol server listening on {}:{}", address_.host, bound_port_);
}

void TcpServer::wait() {
  if (accept_thread_.joinable()) accept_thread_.join();
}

void TcpServer::stop() {
  if (!running_.exchange(false)) {
    if (accept_thread_.joinable()) accept_thread_.join();
    return;
  }
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  if (accept_thread_.joinable() && accept_thread_.get_id() != std::this_thread::get_id()) {
    accept_thread_.join();
  }
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(conn_mutex_);
    for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
    threads = std::move(conn_threads_);
  }
  for (auto& t : threads) {
    if (t.joinable()) t.join();
  }
}

void TcpServer::accept_loop() {
  while (running_) {
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      if (!running_) break;
      continue;
    }
    std::lock_guard lock(conn_mutex_);
    if (!running_) {
      ::close(fd);
      break;
    }
    conn_fds_.push_back(fd);
    conn_threads_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void TcpServer::serve_connection(int fd) {
  std::string buffer;
  bool discarding = false;
  char chunk[64 * 1024];
  bool open = true;
  while (open) {
    ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
    std::size_t start = 0;
    while (true) {
      auto nl = buffer.find('\n', start);
      if (nl == std::string::npos) break;
      std::string_view line(buffer.data() + start, nl - start);
      start = nl + 1;
      if (discarding) {
        discarding = false;
        continue;
      }
      std::string reply = line.size() > max_line_bytes_
                              ? error_response(protocol_errors::kRequestTooLarge).dump()
                              : handler_->handle_line(line);
      reply.push_back('\n');
      if (!send_all(fd, reply)) {
        open = false;
        break;
      }
    }
    buffer.erase(0, start);
    if (open && buffer.size() > max_line_bytes_) {
      buffer.clear();
      if (!discarding) {
        std::string reply = error_response(protocol_errors::kRequestTooLarge).dump() + "\n";
        if (!send_all(fd, reply)) break;
      }
      discarding = true;
    }
  }
  ::close(fd);
  std::lock_guard lock(conn_mutex_);
  std::erase(conn_fds_, fd);
}

ProtocolClient::ProtocolClient(std::string host, std::uint16_t port,
                               std::chrono::milliseconds timeout)
    : host_(std::move(host)), port_(port), timeout_(timeout) {}

ProtocolClient::~ProtocolClient() { close(); }

void ProtocolClient::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
  buffer_.clear();
}

void ProtocolClient::connect_socket() {
  in_addr addr{};
  if (!resolve_ipv4(host_, addr)) throw Error(ErrorCode::kEndpointUnavailable, "server unreachable");
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw Error(ErrorCode::kEndpointUnavailable, "server unreachable");
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(timeout_.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((timeout_.count() % 1000) * 1000);
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_addr = addr;
  sa.sin_port = htons(port_);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) != 0) {
    ::close(fd);
    throw Error(ErrorCode::kEndpointUnavailable, "server unreachable");
  }
  fd_ = fd;
}

std::string ProtocolClient::round_trip(const std::string& line) {
  for (int attempt = 0; attempt < 2; ++attempt) {
    const bool fresh = fd_ < 0;
    if (fresh) connect_socket();
    std::string framed = line;
    framed.push_back('\n');
    if (!send_all(fd_, framed)) {
      close();
      if (fresh) break;
      continue;
    }
    while (true) {
      auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string reply = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return reply;
      }
      char chunk[64 * 1024];
      ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) {
        const bool timed_out = n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK);
        close();
        if (timed_out) throw Error(ErrorCode::kTimeout, "server timed out");
        break;
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
    if (fresh) break;
  }
  throw Error(ErrorCode::kEndpointUnavailable, "server unreachable");
}

}  // namespace hybridrag
