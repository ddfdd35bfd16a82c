#ifndef SP2P_DAEMON_HPP
#define SP2P_DAEMON_HPP

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "sp2p/node.hpp"

namespace sp2p {

// Thin IPv4/UDP wrapper: bind once, then non-blocking-ish send/recv with a
// poll timeout. Endpoint strings are "host:port".
class UdpTransport {
 public:
  static Result<std::unique_ptr<UdpTransport>, std::string> bind(
      const std::string& endpoint);
  ~UdpTransport();

  UdpTransport(const UdpTransport&) = delete;
  UdpTransport& operator=(const UdpTransport&) = delete;

  // Waits up to timeout_ms for a datagram. True when one was read.
  bool recv(std::vector<std::uint8_t>& buf, std::string& from_endpoint,
            int timeout_ms);
  bool send(const std::string& endpoint, std::span<const std::uint8_t> bytes);

  // The address the socket actually bound (resolves port 0).
  std::string local_endpoint() const;

 private:
  explicit UdpTransport(int fd) : fd_(fd) {}

  int fd_;
  std::map<std::string, std::pair<std::uint32_t, std::uint16_t>> resolved_;
};

// Runs one Node over a real socket: the wall-clock, UDP-backed NodeEnv.
// Single-threaded; run()/run_until() pump the socket and the timer.
class Daemon final : public NodeEnv {
 public:
  // Binds the endpoint, opens the sandbox (when configured), loads or
  // builds the index, and constructs the node. Does not join yet.
  static Result<std::unique_ptr<Daemon>, std::string> create(NodeConfig cfg);

  Node& node() { return *node_; }

  // Starts the join handshake and pumps until it settles. False when the
  // join failed or timed out.
  bool join();

  // Pumps until pred() returns true. With max_ms > 0, gives up after that
  // long (returning pred()).
  bool run_until(const std::function<bool()>& pred, std::uint64_t max_ms = 0);

  // Serves until stop() is called (e.g. from a signal handler).
  void run();
  void stop() { stopped_.store(true); }

  bool verbose = false;

  // NodeEnv
  std::uint64_t now() override;
  void send(const NodeAddr& to, const Message& m) override;
  void set_alarm(std::uint64_t at) override;
  void log(std::string_view line) override;

 private:
  Daemon() = default;
  void pump_once(int max_wait_ms);

  NodeConfig cfg_;
  std::unique_ptr<UdpTransport> transport_;
  std::unique_ptr<Node> node_;
  std::chrono::steady_clock::time_point epoch_;
  std::optional<std::uint64_t> alarm_;
  std::atomic<bool> stopped_{false};
};

// Ephemeral client identity for one-shot CLI operations: unlikely to
// collide with configured node ids or with other concurrent clients.
NodeId ephemeral_node_id();

}  // namespace sp2p

#endif  // SP2P_DAEMON_HPP
