#include "skyt/server.hpp"

#include <algorithm>
#include <charconv>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include "net.hpp"

namespace skyt {

namespace {

Bytes message(const std::string& text) { return Bytes(text.begin(), text.end()); }

bool is_request(std::uint8_t op) { return op >= 0x01 && op <= 0x05; }

}  // namespace

std::string load_program(const KvNamespace& ns, const std::string& prefix) {
  if (auto whole = ns.try_get(prefix)) return to_string(ByteView(*whole));
  const std::string stem = prefix + ".s";
  std::vector<std::pair<unsigned, std::string>> chunks;
  for (const auto& key : ns.scan_prefix(stem)) {
    unsigned j = 0;
    const char* first = key.data() + stem.size();
    const char* last = key.data() + key.size();
    auto [ptr, ec] = std::from_chars(first, last, j);
    if (ec == std::errc{} && ptr == last && first != last) chunks.emplace_back(j, key);
  }
  if (chunks.empty()) throw Error(ErrorCode::not_found, "no program under '" + prefix + "'");
  std::sort(chunks.begin(), chunks.end());
  std::string doc;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    if (chunks[i].first != i) {
      throw Error(ErrorCode::corruption, "program '" + prefix + "' is missing chunk " + std::to_string(i));
    }
    auto v = ns.get(chunks[i].second);
    doc.append(v.begin(), v.end());
  }
  return doc;
}

Response handle_request(const Frame& request, KvNamespace& ns, const DeviceProfile& profile) {
  Response resp;
  resp.op = is_request(request.opcode) ? static_cast<Opcode>(request.opcode) : Opcode::get;
  try {
    auto req = decode_request(request);
    std::visit(
        [&](const auto& r) {
          using T = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<T, PutRequest>) {
            const auto version = ns.put(r.key, r.value);
            ByteWriter(resp.payload).u64_be(version);
          } else if constexpr (std::is_same_v<T, GetRequest>) {
            resp.payload = ns.get(r.key);
          } else if constexpr (std::is_same_v<T, DeleteRequest>) {
            ns.del(r.key);
          } else if constexpr (std::is_same_v<T, ScanRequest>) {
            resp.payload = encode_key_list(ns.scan_prefix(r.prefix));
          } else {
            const auto plan = parse_plan(load_program(ns, r.plan_prefix));
            const auto args = decode_exec_args(r.args, ExecBudget::from_qos(plan.qos));
            SimClock clock;
            auto result = execute_downstream(plan, *args.budget, ns, profile, clock, args.out_prefix);
            resp.payload = encode_exec_result(result);
            if (resp.payload.size() + 2 > kMaxFrameBytes) {
              throw Error(ErrorCode::exec, "EXEC result of " + std::to_string(resp.payload.size()) +
                                               " bytes exceeds the frame limit; use out_prefix");
            }
          }
        },
        req);
    resp.status = Status::ok;
  } catch (const Error& e) {
    resp.status = status_for(e.code());
    resp.payload = message(e.what());
  } catch (const std::exception& e) {
    resp.status = Status::exec_error;
    resp.payload = message(e.what());
  }
  return resp;
}

struct Server::Connection {
  net::Socket socket;
  std::thread thread;
  std::atomic<bool> done{false};
};

Server::Server(KvNamespace& ns, ServerOptions options) : ns_(ns), options_(std::move(options)) {
  options_.profile.validate();
}

Server::~Server() { stop(); }

void Server::start() {
  if (running_) return;
  auto s = net::listen_on(options_.listen);
  port_ = net::local_port(s);
  listen_fd_ = s.release();
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

std::string Server::address() const {
  auto hp = net::parse_address(options_.listen);
  std::string host = hp.host;
  if (host.empty() || host == "0.0.0.0") host = "127.0.0.1";
  if (host == "::") host = "::1";
  if (host.find(':') != std::string::npos) host = "[" + host + "]";
  return host + ":" + std::to_string(port_);
}

void Server::accept_loop() {
  while (running_) {
    pollfd p{listen_fd_, POLLIN, 0};
    const int ready = ::poll(&p, 1, 100);
    reap_finished();
    if (ready <= 0 || !running_) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    auto c = std::make_unique<Connection>();
    c->socket = net::Socket(fd);
    c->socket.set_timeout(options_.io_timeout);
    auto* raw = c.get();
    std::lock_guard lock(mu_);
    connections_.push_back(std::move(c));
    raw->thread = std::thread([this, raw] { serve_connection(*raw); });
  }
}

void Server::serve_connection(Connection& c) {
  try {
    Frame request;
    while (running_ && c.socket.read_frame(request)) {
      auto response = handle_request(request, ns_, options_.profile);
      c.socket.send_all(encode_frame(encode_response(response)));
    }
  } catch (const Error&) {
    // Transport or framing failure: the stream cannot be resynchronized.
  }
  c.socket.shutdown();
  c.done = true;
}

void Server::reap_finished() {
  std::list<std::unique_ptr<Connection>> finished;
  {
    std::lock_guard lock(mu_);
    for (auto it = connections_.begin(); it != connections_.end();) {
      if ((*it)->done) {
        finished.push_back(std::move(*it));
        it = connections_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& c : finished) c->thread.join();
}

void Server::stop() {
  if (!running_.exchange(false)) return;
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listen_fd_);
  listen_fd_ = -1;
  std::list<std::unique_ptr<Connection>> all;
  {
    std::lock_guard lock(mu_);
    all.swap(connections_);
  }
  for (auto& c : all) c->socket.shutdown();
  for (auto& c : all) c->thread.join();
}

void Server::wait() {
  while (running_) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

}  // namespace skyt
