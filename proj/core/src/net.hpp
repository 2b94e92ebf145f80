#pragma once

// POSIX socket helpers shared by the server and the client.

#include <chrono>
#include <cstdint>
#include <string>

#include "skyt/bytes.hpp"
#include "skyt/wire.hpp"

namespace skyt::net {

struct HostPort {
  std::string host;
  std::uint16_t port = 0;
};

// "host:port"; a bare ":port" means all interfaces.
HostPort parse_address(const std::string& address);

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket() { close(); }
  Socket(Socket&& o) noexcept : fd_(o.release()) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = o.release();
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  int release() {
    int fd = fd_;
    fd_ = -1;
    return fd;
  }
  void close();
  void shutdown();
  void set_timeout(std::chrono::milliseconds t);

  void send_all(ByteView data);
  // Reads one frame; returns false on a clean close before any byte.
  bool read_frame(Frame& out);

 private:
  int fd_ = -1;
};

Socket connect_to(const std::string& address, std::chrono::milliseconds timeout);
Socket listen_on(const std::string& address, int backlog = 128);
std::uint16_t local_port(const Socket& s);

}  // namespace skyt::net
