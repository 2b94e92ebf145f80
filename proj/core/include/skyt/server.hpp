#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "skyt/costmodel.hpp"
#include "skyt/kvstore.hpp"
#include "skyt/wire.hpp"

namespace skyt {

struct ServerOptions {
  std::string listen = "127.0.0.1:0";
  DeviceProfile profile = DeviceProfile::client();
  std::chrono::milliseconds io_timeout{60000};
};

// Answers one request frame against a namespace. Never throws: failures become
// status responses.
Response handle_request(const Frame& request, KvNamespace& ns, const DeviceProfile& profile);

// Reads an EXEC program stored under `prefix`: the key itself, or its stripe
// chunks "<prefix>.s<j>" concatenated in chunk order.
std::string load_program(const KvNamespace& ns, const std::string& prefix);

// TCP daemon, one thread per connection, one in-flight request per connection.
class Server {
 public:
  Server(KvNamespace& ns, ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  void start();
  void stop();
  // Blocks until stop() is called from another thread.
  void wait();

  std::uint16_t port() const { return port_; }
  // "host:port" usable by clients.
  std::string address() const;

 private:
  struct Connection;
  void accept_loop();
  void serve_connection(Connection& c);
  void reap_finished();

  KvNamespace& ns_;
  ServerOptions options_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::list<std::unique_ptr<Connection>> connections_;
};

}  // namespace skyt
