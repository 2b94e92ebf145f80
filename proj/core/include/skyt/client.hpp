#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "skyt/engine.hpp"
#include "skyt/wire.hpp"

namespace skyt {

struct ClientOptions {
  std::chrono::milliseconds timeout{30000};
};

// Blocking client; one request/response per call over a lazily opened
// connection. Transport failures raise ErrorCode::transport and drop the
// connection; non-ok statuses raise the matching typed error.
class Client {
 public:
  explicit Client(std::string address, ClientOptions options = {});
  ~Client();
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  std::uint64_t put(const std::string& key, ByteView value);
  Bytes get(const std::string& key);
  std::optional<Bytes> try_get(const std::string& key);
  void del(const std::string& key);
  std::vector<std::string> scan(const std::string& prefix);
  ExecResult exec(const std::string& plan_prefix, const ExecArgs& args);

  // Stores a program under `prefix`, striped into chunks when it exceeds `chunk_bytes`.
  void put_program(const std::string& prefix, const std::string& document,
                   std::size_t chunk_bytes = 512 * 1024);

  const std::string& address() const { return address_; }

 private:
  Response call(const Request& r);

  std::string address_;
  ClientOptions options_;
  std::mutex mu_;
  struct Conn;
  std::unique_ptr<Conn> conn_;
};

// Uploads a partition over the wire, one key per slice stripe plus metadata.
void put_partition_remote(Client& client, const Partition& partition, unsigned stripe_factor = 1);

// A downstream device reached over the network. `profile` is the device's
// declared profile, used for transfer accounting by the coordinator.
class RemoteDevice : public Device {
 public:
  RemoteDevice(std::string name, std::string address, DeviceProfile profile,
               ClientOptions options = {});

  std::string name() const override { return name_; }
  const DeviceProfile& profile() const override { return profile_; }
  bool holds(const std::string& partition_key) override;
  ExecResult exec(const QueryPlan& sub_plan, const ExecBudget& budget) override;

 private:
  std::string name_;
  DeviceProfile profile_;
  Client client_;
  std::uint64_t programs_ = 0;
};

}  // namespace skyt
