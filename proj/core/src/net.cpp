#include "net.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <cstring>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>
#include <fcntl.h>

namespace skyt::net {

namespace {

[[noreturn]] void fail(const std::string& what) {
  throw Error(ErrorCode::transport, what + ": " + std::strerror(errno));
}

}  // namespace

HostPort parse_address(const std::string& address) {
  auto colon = address.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::invalid_argument, "address '" + address + "' lacks a port");
  HostPort hp;
  hp.host = address.substr(0, colon);
  if (hp.host.size() >= 2 && hp.host.front() == '[' && hp.host.back() == ']') {
    hp.host = hp.host.substr(1, hp.host.size() - 2);
  }
  const auto port = address.substr(colon + 1);
  try {
    std::size_t used = 0;
    auto v = std::stoul(port, &used);
    if (used != port.size() || v > 65535) throw std::out_of_range("port");
    hp.port = static_cast<std::uint16_t>(v);
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::invalid_argument, "bad port in address '" + address + "'");
  }
  return hp;
}

void Socket::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void Socket::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::set_timeout(std::chrono::milliseconds t) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(t.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((t.count() % 1000) * 1000);
  ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  ::setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
}

void Socket::send_all(ByteView data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    auto n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail("send");
    }
    sent += static_cast<std::size_t>(n);
  }
}

bool Socket::read_frame(Frame& out) {
  Bytes buf(kFrameLengthBytes);
  std::size_t have = 0;
  auto fill = [&](std::size_t upto) {
    while (have < upto) {
      auto n = ::recv(fd_, buf.data() + have, upto - have, 0);
      if (n == 0) {
        if (have == 0) return false;
        throw Error(ErrorCode::transport, "connection closed mid-frame");
      }
      if (n < 0) {
        if (errno == EINTR) continue;
        if (errno == EAGAIN || errno == EWOULDBLOCK) throw Error(ErrorCode::transport, "timed out");
        fail("recv");
      }
      have += static_cast<std::size_t>(n);
    }
    return true;
  };
  if (!fill(kFrameLengthBytes)) return false;
  for (;;) {
    auto d = decode_frame(ByteView(buf.data(), have));
    if (d.frame) {
      out = std::move(*d.frame);
      return true;
    }
    buf.resize(have + d.bytes_needed);
    fill(have + d.bytes_needed);
  }
}

Socket connect_to(const std::string& address, std::chrono::milliseconds timeout) {
  auto hp = parse_address(address);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const auto host = hp.host.empty() ? std::string("127.0.0.1") : hp.host;
  if (int rc = ::getaddrinfo(host.c_str(), std::to_string(hp.port).c_str(), &hints, &res); rc != 0) {
    throw Error(ErrorCode::transport, "resolve '" + host + "': " + ::gai_strerror(rc));
  }
  std::string last = "no addresses";
  for (auto* ai = res; ai; ai = ai->ai_next) {
    Socket s(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
    if (!s.valid()) continue;
    // Non-blocking connect so the timeout also bounds connection setup.
    const int flags = ::fcntl(s.fd(), F_GETFL, 0);
    ::fcntl(s.fd(), F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(s.fd(), ai->ai_addr, ai->ai_addrlen);
    if (rc != 0 && errno == EINPROGRESS) {
      pollfd p{s.fd(), POLLOUT, 0};
      const int ready = ::poll(&p, 1, static_cast<int>(timeout.count()));
      if (ready == 1) {
        int err = 0;
        socklen_t len = sizeof err;
        ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
        rc = err == 0 ? 0 : -1;
        errno = err;
      } else {
        if (ready == 0) errno = ETIMEDOUT;
        rc = -1;
      }
    }
    if (rc != 0) {
      last = std::strerror(errno);
      continue;
    }
    ::fcntl(s.fd(), F_SETFL, flags);
    int one = 1;
    ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    s.set_timeout(timeout);
    ::freeaddrinfo(res);
    return s;
  }
  ::freeaddrinfo(res);
  throw Error(ErrorCode::transport, "connect " + address + ": " + last);
}

Socket listen_on(const std::string& address, int backlog) {
  auto hp = parse_address(address);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const char* host = hp.host.empty() ? nullptr : hp.host.c_str();
  if (int rc = ::getaddrinfo(host, std::to_string(hp.port).c_str(), &hints, &res); rc != 0) {
    throw Error(ErrorCode::transport, "resolve '" + hp.host + "': " + ::gai_strerror(rc));
  }
  std::string last = "no addresses";
  for (auto* ai = res; ai; ai = ai->ai_next) {
    Socket s(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
    if (!s.valid()) continue;
    int one = 1;
    ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(s.fd(), ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(s.fd(), backlog) == 0) {
      ::freeaddrinfo(res);
      return s;
    }
    last = std::strerror(errno);
  }
  ::freeaddrinfo(res);
  throw Error(ErrorCode::transport, "listen " + address + ": " + last);
}

std::uint16_t local_port(const Socket& s) {
  sockaddr_storage ss{};
  socklen_t len = sizeof ss;
  if (::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&ss), &len) != 0) fail("getsockname");
  if (ss.ss_family == AF_INET6) return ntohs(reinterpret_cast<sockaddr_in6*>(&ss)->sin6_port);
  return ntohs(reinterpret_cast<sockaddr_in*>(&ss)->sin_port);
}

}  // namespace skyt::net
