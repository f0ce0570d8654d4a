#pragma once

// TCP transport for the coordinator/worker protocol (POSIX sockets).

#include "pushnpg/coordinator.hpp"
#include "pushnpg/protocol.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <iostream>
#include <map>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace pushnpg {

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;

  std::string str() const { return host + ":" + std::to_string(port); }
};

inline Endpoint parse_endpoint(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == s.size())
    throw std::invalid_argument("endpoint '" + s + "' is not HOST:PORT");
  const std::string port = s.substr(colon + 1);
  char* end = nullptr;
  const long p = std::strtol(port.c_str(), &end, 10);
  if (*end != '\0' || p < 0 || p > 65535) throw std::invalid_argument("endpoint '" + s + "' has a bad port");
  return {s.substr(0, colon), static_cast<std::uint16_t>(p)};
}

namespace net {

using Clock = std::chrono::steady_clock;

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Socket() { close(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

inline sockaddr_in resolve(const Endpoint& ep) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (int rc = ::getaddrinfo(ep.host.c_str(), nullptr, &hints, &res); rc != 0 || !res)
    throw ConnectionLost("cannot resolve " + ep.host + ": " + ::gai_strerror(rc));
  sockaddr_in addr{};
  std::memcpy(&addr, res->ai_addr, sizeof(addr));
  ::freeaddrinfo(res);
  addr.sin_port = htons(ep.port);
  return addr;
}

inline Socket listen_on(const Endpoint& ep) {
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s.valid()) throw ConnectionLost(std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  const sockaddr_in addr = resolve(ep);
  if (::bind(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0)
    throw ConnectionLost("bind " + ep.str() + ": " + std::strerror(errno));
  if (::listen(s.fd(), 64) != 0) throw ConnectionLost("listen " + ep.str() + ": " + std::strerror(errno));
  return s;
}

/// Port actually bound (useful with port 0).
inline std::uint16_t local_port(const Socket& s) {
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
  return ntohs(addr.sin_port);
}

inline Socket connect_to(const Endpoint& ep) {
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s.valid()) throw ConnectionLost(std::string("socket: ") + std::strerror(errno));
  const sockaddr_in addr = resolve(ep);
  if (::connect(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0)
    throw ConnectionLost("connect " + ep.str() + ": " + std::strerror(errno));
  int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return s;
}

inline void send_all(const Socket& s, const Bytes& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(s.fd(), data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw ConnectionLost(std::string("send: ") + std::strerror(errno));
    sent += static_cast<std::size_t>(n);
  }
}

/// Waits until `fd` is readable; false on deadline.
inline bool wait_readable(int fd, Clock::time_point deadline) {
  for (;;) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    if (left <= 0) return false;
    pollfd p{fd, POLLIN, 0};
    const int rc = ::poll(&p, 1, static_cast<int>(std::min<long long>(left, 1000)));
    if (rc < 0 && errno == EINTR) continue;
    if (rc < 0) throw ConnectionLost(std::string("poll: ") + std::strerror(errno));
    if (rc > 0) return true;
  }
}

inline void recv_exact(const Socket& s, std::uint8_t* out, std::size_t n, Clock::time_point deadline) {
  std::size_t got = 0;
  while (got < n) {
    if (!wait_readable(s.fd(), deadline)) throw WorkerTimeout("receive timed out");
    const ssize_t r = ::recv(s.fd(), out + got, n - got, 0);
    if (r < 0 && errno == EINTR) continue;
    if (r == 0) throw ConnectionLost("peer closed the connection");
    if (r < 0) throw ConnectionLost(std::string("recv: ") + std::strerror(errno));
    got += static_cast<std::size_t>(r);
  }
}

/// Reads one frame; the header is validated before the payload is read.
inline Message recv_message(const Socket& s, Clock::time_point deadline) {
  Bytes buf(kHeaderSize);
  recv_exact(s, buf.data(), kHeaderSize, deadline);
  const FrameHeader h = decode_header(buf.data());
  buf.resize(kHeaderSize + h.payload_bytes);
  recv_exact(s, buf.data() + kHeaderSize, h.payload_bytes, deadline);
  return decode_payload(h, buf.data() + kHeaderSize);
}

inline Clock::time_point deadline_after(double seconds) {
  return Clock::now() + std::chrono::milliseconds(static_cast<long long>(seconds * 1000.0));
}

}  // namespace net

/// Coordinator side of the TCP transport. Workers connect and register with
/// HELLO; a registered id may reconnect later and replaces its old socket.
class TcpWorkerGroup : public WorkerGroup {
 public:
  TcpWorkerGroup(const RunConfig& cfg, const Endpoint& listen, std::ostream* log = nullptr)
      : cfg_(cfg), hash_(cfg.hash()), listener_(net::listen_on(listen)), log_(log) {}

  std::uint16_t port() const { return net::local_port(listener_); }

  /// Blocks until every worker id 0..workers-1 has registered.
  void wait_for_workers() {
    const auto deadline = net::deadline_after(cfg_.dist.hello_timeout_s);
    while (conns_.size() < static_cast<std::size_t>(cfg_.dist.workers)) {
      if (!net::wait_readable(listener_.fd(), deadline))
        throw WorkerTimeout("only " + std::to_string(conns_.size()) + " of " + std::to_string(cfg_.dist.workers) +
                            " workers registered within " + std::to_string(cfg_.dist.hello_timeout_s) + " s");
      accept_one();
    }
  }

  std::size_t size() const override { return static_cast<std::size_t>(cfg_.dist.workers); }

  std::vector<FisherReport> round(const PolicyBroadcast& msg, double timeout_s) override {
    if (conns_.size() < size()) wait_for_workers();
    const Bytes wire_msg = encode(msg);
    std::map<std::uint32_t, FisherReport> got;
    std::vector<std::uint32_t> registered;
    for (const auto& kv : conns_) registered.push_back(kv.first);
    for (auto id : registered) send_or_drop(id, wire_msg);
    const auto deadline = net::deadline_after(timeout_s);
    while (got.size() < size()) {
      std::vector<pollfd> fds;
      std::vector<std::uint32_t> ids;
      fds.push_back({listener_.fd(), POLLIN, 0});
      for (auto& [id, sock] : conns_)
        if (!got.count(id)) {
          fds.push_back({sock.fd(), POLLIN, 0});
          ids.push_back(id);
        }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - net::Clock::now()).count();
      if (left <= 0)
        throw WorkerTimeout("round " + std::to_string(msg.iteration) + ": " + std::to_string(size() - got.size()) +
                            " worker(s) did not report within " + std::to_string(timeout_s) + " s");
      const int rc = ::poll(fds.data(), fds.size(), static_cast<int>(std::min<long long>(left, 1000)));
      if (rc < 0 && errno != EINTR) throw ConnectionLost(std::string("poll: ") + std::strerror(errno));
      if (rc <= 0) continue;
      if (fds[0].revents & POLLIN) {
        const auto id = accept_one();
        if (id && !got.count(*id)) send_or_drop(*id, wire_msg);  // reconnected mid-round
      }
      for (std::size_t k = 1; k < fds.size(); ++k) {
        if (!(fds[k].revents & (POLLIN | POLLHUP | POLLERR))) continue;
        const std::uint32_t id = ids[k - 1];
        auto it = conns_.find(id);
        if (it == conns_.end() || it->second.fd() != fds[k].fd) continue;
        try {
          Message m = net::recv_message(it->second, deadline);
          auto* rep = std::get_if<FisherReport>(&m);
          if (!rep) throw ProtocolError("expected REPORT from worker " + std::to_string(id));
          if (rep->worker_id != id) throw ProtocolError("worker " + std::to_string(id) + " reported a foreign id");
          if (rep->iteration != msg.iteration)
            throw IterationMismatch("worker " + std::to_string(id) + " reported iteration " +
                                    std::to_string(rep->iteration) + ", expected " + std::to_string(msg.iteration));
          got.emplace(id, std::move(*rep));
        } catch (const ConnectionLost& e) {
          note("worker " + std::to_string(id) + " disconnected: " + e.what());
          conns_.erase(it);  // may come back with HELLO before the deadline
        }
      }
    }
    std::vector<FisherReport> out;
    for (auto& [id, r] : got) out.push_back(std::move(r));
    return out;
  }

  void shutdown(std::uint32_t iteration) override {
    const Bytes bye = encode(Shutdown{iteration});
    for (auto& [id, sock] : conns_) {
      try {
        net::send_all(sock, bye);
      } catch (const ConnectionLost&) {
      }
    }
    conns_.clear();
  }

 private:
  void note(const std::string& s) {
    if (log_) *log_ << s << std::endl;
  }

  void send_or_drop(std::uint32_t id, const Bytes& data) {
    try {
      net::send_all(conns_.at(id), data);
    } catch (const ConnectionLost& e) {
      note("worker " + std::to_string(id) + " unreachable: " + e.what());
      conns_.erase(id);
    }
  }

  /// Accepts one connection and reads its HELLO. Returns the id on success.
  std::optional<std::uint32_t> accept_one() {
    net::Socket s(::accept(listener_.fd(), nullptr, nullptr));
    if (!s.valid()) return std::nullopt;
    int one = 1;
    ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    auto reject = [&](const std::string& why) {
      note("rejected worker: " + why);
      try {
        net::send_all(s, encode(Shutdown{0}));
      } catch (const ConnectionLost&) {
      }
      return std::optional<std::uint32_t>{};
    };
    Hello h;
    try {
      Message m = net::recv_message(s, net::deadline_after(std::min(10.0, cfg_.dist.hello_timeout_s)));
      auto* hp = std::get_if<Hello>(&m);
      if (!hp) return reject("first message was not HELLO");
      h = *hp;
    } catch (const std::exception& e) {
      return reject(e.what());
    }
    if (h.config_hash != hash_) return reject("config hash mismatch from worker " + std::to_string(h.worker_id));
    if (h.worker_id >= size()) return reject("worker id " + std::to_string(h.worker_id) + " out of range");
    if (static_cast<int>(h.rollouts) != cfg_.dist.rollouts_per_worker)
      return reject("worker " + std::to_string(h.worker_id) + " announced a different rollout count");
    note("worker " + std::to_string(h.worker_id) + " registered");
    conns_[h.worker_id] = std::move(s);
    return h.worker_id;
  }

  RunConfig cfg_;
  std::uint64_t hash_;
  net::Socket listener_;
  std::map<std::uint32_t, net::Socket> conns_;
  std::ostream* log_;
};

struct WorkerOptions {
  int retries = 3;
  double backoff_s = 0.5;  // doubles after every failed attempt
  double idle_timeout_s = 3600.0;
};

/// Worker process loop: connect, HELLO, answer broadcasts until SHUTDOWN.
/// Returns 0 on SHUTDOWN, 1 once connection retries are exhausted, 2 on a
/// refused broadcast (config drift).
inline int run_tcp_worker(const RunConfig& cfg, const std::vector<Endpoint>& coordinators, std::uint32_t worker_id,
                          const WorkerOptions& opt = {}, std::ostream* log = &std::cerr) {
  if (coordinators.empty()) throw std::invalid_argument("worker: no coordinator endpoint");
  Worker worker(cfg, worker_id, cfg.dist.rollouts_per_worker);
  const Hello hello{worker_id, cfg.hash(), static_cast<std::uint32_t>(cfg.dist.rollouts_per_worker)};
  int failures = 0;
  double backoff = opt.backoff_s;
  auto say = [log](const std::string& s) {
    if (log) *log << s << std::endl;
  };
  for (;;) {
    try {
      net::Socket s;
      std::string last_error;
      for (const auto& ep : coordinators) {
        try {
          s = net::connect_to(ep);
          break;
        } catch (const ConnectionLost& e) {
          last_error = e.what();
        }
      }
      if (!s.valid()) throw ConnectionLost(last_error);
      net::send_all(s, encode(hello));
      failures = 0;
      backoff = opt.backoff_s;
      for (;;) {
        Message m = net::recv_message(s, net::deadline_after(opt.idle_timeout_s));
        if (std::holds_alternative<Shutdown>(m)) {
          say("worker " + std::to_string(worker_id) + ": shutdown");
          return 0;
        }
        auto* b = std::get_if<PolicyBroadcast>(&m);
        if (!b) throw ProtocolError("unexpected message type from coordinator");
        FisherReport rep;
        try {
          rep = worker.run_round(*b);
        } catch (const ProtocolError& e) {
          say(std::string("worker refused broadcast: ") + e.what());
          return 2;
        }
        net::send_all(s, encode(rep));
      }
    } catch (const ConnectionLost& e) {
      if (++failures > opt.retries) {
        say("worker " + std::to_string(worker_id) + ": giving up: " + e.what());
        return 1;
      }
      say("worker " + std::to_string(worker_id) + ": " + e.what() + "; retry " + std::to_string(failures) + " in " +
          std::to_string(backoff) + " s");
      std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long long>(backoff * 1000)));
      backoff *= 2.0;
    } catch (const WorkerTimeout& e) {
      say("worker " + std::to_string(worker_id) + ": coordinator idle: " + e.what());
      return 1;
    }
  }
}

}  // namespace pushnpg
