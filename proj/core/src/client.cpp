#include "skyt/client.hpp"

#include "net.hpp"

namespace skyt {

struct Client::Conn {
  net::Socket socket;
};

Client::Client(std::string address, ClientOptions options)
    : address_(std::move(address)), options_(options) {
  net::parse_address(address_);
}

Client::~Client() = default;

Response Client::call(const Request& r) {
  const auto frame = encode_frame(encode_request(r));
  const auto op = static_cast<Opcode>(r.index() + 1);
  std::lock_guard lock(mu_);
  try {
    if (!conn_) conn_ = std::make_unique<Conn>(Conn{net::connect_to(address_, options_.timeout)});
    conn_->socket.send_all(frame);
    Frame reply;
    if (!conn_->socket.read_frame(reply)) throw Error(ErrorCode::transport, "server closed the connection");
    auto resp = decode_response(reply);
    if (resp.op != op) throw Error(ErrorCode::protocol, "response opcode does not match the request");
    return resp;
  } catch (const Error& e) {
    conn_.reset();
    if (e.code() == ErrorCode::frame_too_large) throw Error(ErrorCode::transport, e.what());
    throw;
  }
}

std::uint64_t Client::put(const std::string& key, ByteView value) {
  auto r = call(PutRequest{key, Bytes(value.begin(), value.end())});
  if (r.status != Status::ok) raise_status(r);
  ByteReader rd(r.payload);
  return rd.u64_be();
}

Bytes Client::get(const std::string& key) {
  auto r = call(GetRequest{key});
  if (r.status != Status::ok) raise_status(r);
  return std::move(r.payload);
}

std::optional<Bytes> Client::try_get(const std::string& key) {
  auto r = call(GetRequest{key});
  if (r.status == Status::not_found) return std::nullopt;
  if (r.status != Status::ok) raise_status(r);
  return std::move(r.payload);
}

void Client::del(const std::string& key) {
  auto r = call(DeleteRequest{key});
  if (r.status != Status::ok) raise_status(r);
}

std::vector<std::string> Client::scan(const std::string& prefix) {
  auto r = call(ScanRequest{prefix});
  if (r.status != Status::ok) raise_status(r);
  return decode_key_list(r.payload);
}

ExecResult Client::exec(const std::string& plan_prefix, const ExecArgs& args) {
  auto r = call(ExecRequest{plan_prefix, encode_exec_args(args)});
  if (r.status != Status::ok) raise_status(r);
  return decode_exec_result(r.payload);
}

void Client::put_program(const std::string& prefix, const std::string& document,
                         std::size_t chunk_bytes) {
  if (chunk_bytes == 0) throw Error(ErrorCode::invalid_argument, "chunk_bytes must be positive");
  if (document.size() <= chunk_bytes) {
    put(prefix, as_bytes(document));
    return;
  }
  for (std::size_t off = 0, j = 0; off < document.size(); off += chunk_bytes, ++j) {
    put(prefix + ".s" + std::to_string(j), as_bytes(std::string_view(document).substr(off, chunk_bytes)));
  }
}

void put_partition_remote(Client& client, const Partition& partition, unsigned stripe_factor) {
  for (const auto& s : partition.slices) {
    const auto key = slice_key_name(partition.partition_key, s.slice_index);
    const auto encoding = encode_slice(s);
    if (stripe_factor == 1) {
      client.put(key, encoding);
    } else {
      auto chunks = split_stripes(encoding, stripe_factor);
      for (unsigned j = 0; j < stripe_factor; ++j) client.put(stripe_key_name(key, j), chunks[j]);
    }
  }
  client.put(meta_key_name(partition.partition_key), encode_metadata(partition.meta));
}

RemoteDevice::RemoteDevice(std::string name, std::string address, DeviceProfile profile,
                           ClientOptions options)
    : name_(std::move(name)), profile_(std::move(profile)), client_(std::move(address), options) {
  profile_.validate();
}

bool RemoteDevice::holds(const std::string& partition_key) {
  return client_.try_get(meta_key_name(partition_key)).has_value();
}

ExecResult RemoteDevice::exec(const QueryPlan& sub_plan, const ExecBudget& budget) {
  const auto prefix = "prog." + name_ + "." + std::to_string(programs_++);
  const auto doc = serialize_plan(sub_plan);
  client_.put_program(prefix, doc);
  auto result = client_.exec(prefix, ExecArgs{budget, {}});
  for (const auto& key : client_.scan(prefix)) {
    if (key == prefix || key.rfind(prefix + ".s", 0) == 0) client_.del(key);
  }
  resolve_stored(result, [&](const std::string& key) { return client_.get(key); });
  return result;
}

}  // namespace skyt
