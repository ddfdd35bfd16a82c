#include "sp2p/daemon.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <unistd.h>

#include <algorithm>
#include <cstring>
#include <iostream>

namespace sp2p {

// --- transport ----------------------------------------------------------------

namespace {

bool split_endpoint(const std::string& ep, std::string& host,
                    std::uint16_t& port) {
  std::size_t colon = ep.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == ep.size()) {
    return false;
  }
  host = ep.substr(0, colon);
  std::uint32_t p = 0;
  for (std::size_t i = colon + 1; i < ep.size(); ++i) {
    char c = ep[i];
    if (c < '0' || c > '9') return false;
    p = p * 10 + static_cast<std::uint32_t>(c - '0');
    if (p > 65535) return false;
  }
  port = static_cast<std::uint16_t>(p);
  return true;
}

}  // namespace

Result<std::unique_ptr<UdpTransport>, std::string> UdpTransport::bind(
    const std::string& endpoint) {
  std::string host;
  std::uint16_t port = 0;
  if (!split_endpoint(endpoint, host, port)) {
    return std::string("bad endpoint '") + endpoint +
           "' (expected host:port)";
  }

  int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd < 0) return std::string("socket: ") + std::strerror(errno);

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (host == "*") {
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
  } else if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    return std::string("bad bind address '") + host + "'";
  }
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    std::string err = std::string("bind ") + endpoint + ": " +
                      std::strerror(errno);
    ::close(fd);
    return err;
  }
  return std::unique_ptr<UdpTransport>(new UdpTransport(fd));
}

UdpTransport::~UdpTransport() {
  if (fd_ >= 0) ::close(fd_);
}

std::string UdpTransport::local_endpoint() const {
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  if (getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
    return "0.0.0.0:0";
  }
  char ip[INET_ADDRSTRLEN] = {0};
  inet_ntop(AF_INET, &addr.sin_addr, ip, sizeof(ip));
  std::string host = ip;
  // An INADDR_ANY bind is unusable as a reply address; advertise loopback.
  if (host == "0.0.0.0") host = "127.0.0.1";
  return host + ":" + std::to_string(ntohs(addr.sin_port));
}

bool UdpTransport::recv(std::vector<std::uint8_t>& buf,
                        std::string& from_endpoint, int timeout_ms) {
  pollfd p{fd_, POLLIN, 0};
  int rc = ::poll(&p, 1, timeout_ms);
  if (rc <= 0 || !(p.revents & POLLIN)) return false;

  buf.resize(kMaxMessageBytes + 1);
  sockaddr_in from{};
  socklen_t len = sizeof(from);
  ssize_t n = ::recvfrom(fd_, buf.data(), buf.size(), 0,
                         reinterpret_cast<sockaddr*>(&from), &len);
  if (n < 0) return false;
  buf.resize(static_cast<std::size_t>(n));

  char ip[INET_ADDRSTRLEN] = {0};
  inet_ntop(AF_INET, &from.sin_addr, ip, sizeof(ip));
  from_endpoint = std::string(ip) + ":" + std::to_string(ntohs(from.sin_port));
  return true;
}

bool UdpTransport::send(const std::string& endpoint,
                        std::span<const std::uint8_t> bytes) {
  std::uint32_t ip = 0;
  std::uint16_t port = 0;
  if (auto it = resolved_.find(endpoint); it != resolved_.end()) {
    ip = it->second.first;
    port = it->second.second;
  } else {
    std::string host;
    if (!split_endpoint(endpoint, host, port)) return false;
    in_addr a{};
    if (inet_pton(AF_INET, host.c_str(), &a) == 1) {
      ip = a.s_addr;
    } else {
      addrinfo hints{};
      hints.ai_family = AF_INET;
      hints.ai_socktype = SOCK_DGRAM;
      addrinfo* res = nullptr;
      if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res) {
        return false;
      }
      ip = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr.s_addr;
      freeaddrinfo(res);
    }
    resolved_[endpoint] = {ip, port};
  }

  sockaddr_in to{};
  to.sin_family = AF_INET;
  to.sin_port = htons(port);
  to.sin_addr.s_addr = ip;
  ssize_t n = ::sendto(fd_, bytes.data(), bytes.size(), 0,
                       reinterpret_cast<sockaddr*>(&to), sizeof(to));
  return n == static_cast<ssize_t>(bytes.size());
}

// --- daemon -------------------------------------------------------------------

Result<std::unique_ptr<Daemon>, std::string> Daemon::create(NodeConfig cfg) {
  auto transport = UdpTransport::bind(cfg.endpoint);
  if (!transport) return transport.error();

  std::unique_ptr<Daemon> d(new Daemon());
  d->transport_ = std::move(transport).value();
  // Advertise the resolved address (handles port 0 and wildcard binds).
  cfg.endpoint = d->transport_->local_endpoint();

  LocalStore store;
  if (!cfg.sandbox.empty()) {
    auto root = SandboxRoot::open(cfg.sandbox);
    if (!root) return root.error();
    store.root = std::move(root).value();

    bool have_index = false;
    if (!cfg.index_cache.empty()) {
      if (auto cached = InvertedIndex::load(cfg.index_cache)) {
        store.index =
            std::make_shared<InvertedIndex>(std::move(cached).value());
        have_index = true;
      }
    }
    if (!have_index) {
      auto idx = build_index(*store.root, store.extractors);
      if (!idx) return idx.error();
      store.index = std::make_shared<InvertedIndex>(std::move(idx).value());
      if (!cfg.index_cache.empty()) {
        if (auto saved = store.index->save(cfg.index_cache); !saved) {
          return saved.error();
        }
      }
    }
  }

  d->cfg_ = cfg;
  d->epoch_ = std::chrono::steady_clock::now();
  d->node_ = std::make_unique<Node>(cfg, std::move(store), *d);
  return d;
}

std::uint64_t Daemon::now() {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::steady_clock::now() - epoch_)
          .count());
}

void Daemon::send(const NodeAddr& to, const Message& m) {
  auto encoded = encode(m);
  if (!encoded) {
    log("encode failure, message dropped");
    return;
  }
  if (verbose) {
    log(std::string("send ") + to_string(m.tag()) + " -> " + to.endpoint);
  }
  transport_->send(to.endpoint, encoded.value());
}

void Daemon::set_alarm(std::uint64_t at) {
  if (!alarm_ || at < *alarm_) alarm_ = at;
}

void Daemon::log(std::string_view line) {
  std::cerr << "[" << now() << "ms node " << cfg_.node_id << "] " << line
            << "\n";
}

void Daemon::pump_once(int max_wait_ms) {
  int wait = max_wait_ms;
  if (alarm_) {
    std::uint64_t t = now();
    std::uint64_t until = *alarm_ > t ? *alarm_ - t : 0;
    wait = static_cast<int>(std::min<std::uint64_t>(
        until, static_cast<std::uint64_t>(max_wait_ms)));
  }

  std::vector<std::uint8_t> buf;
  std::string from;
  if (transport_->recv(buf, from, wait)) {
    if (buf.size() <= kMaxMessageBytes) {
      if (verbose) log(std::string("recv ") + std::to_string(buf.size()) +
                       " bytes from " + from);
      node_->handle_datagram(buf, from);
    } else {
      log("oversize datagram ignored");
    }
  }
  if (alarm_ && now() >= *alarm_) {
    alarm_.reset();
    node_->on_alarm();
  }
}

bool Daemon::join() {
  bool done = false;
  bool ok = false;
  node_->start([&](bool joined) {
    done = true;
    ok = joined;
  });
  std::uint64_t budget =
      cfg_.join_timeout * static_cast<std::uint64_t>(cfg_.join_attempts) +
      2000;
  run_until([&] { return done; }, budget);
  return ok && node_->joined();
}

bool Daemon::run_until(const std::function<bool()>& pred,
                       std::uint64_t max_ms) {
  std::uint64_t give_up = max_ms > 0 ? now() + max_ms : 0;
  while (!stopped_.load()) {
    if (pred()) return true;
    if (give_up && now() >= give_up) return pred();
    pump_once(50);
  }
  return pred();
}

void Daemon::run() {
  while (!stopped_.load()) pump_once(50);
}

NodeId ephemeral_node_id() {
  auto t = static_cast<std::uint64_t>(
      std::chrono::steady_clock::now().time_since_epoch().count());
  std::uint64_t pid = static_cast<std::uint64_t>(::getpid());
  // High bit set keeps these clear of small hand-assigned ids.
  return (1ULL << 63) | (t ^ (pid << 32)) | 1;
}

}  // namespace sp2p
