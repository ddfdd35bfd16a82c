#ifndef SP2P_SIMNET_HPP
#define SP2P_SIMNET_HPP

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "sp2p/node.hpp"

namespace sp2p {

struct SimNodeSpec {
  NodeId id = 0;
  DomainPath domain;
  std::string sandbox;                      // optional on-disk corpus
  std::map<std::string, std::string> docs;  // optional in-memory corpus
};

struct SimConfig {
  std::uint64_t seed = 1;
  std::uint64_t latency_min = 1;
  std::uint64_t latency_max = 1;
  double loss = 0.0;

  std::size_t n_tuple = 2;
  CachePolicy cache_policy = CachePolicy::Lru;
  std::size_t cache_capacity = 32;
  std::uint8_t ttl = 16;
  std::uint64_t query_deadline = 2000;

  std::vector<SimNodeSpec> nodes;

  struct Action {
    enum class Kind { Query, Kill, Fetch, List };
    Kind kind = Kind::Query;
    NodeId origin = 0;
    NodeId peer = 0;    // fetch/list server
    std::string arg;    // query input or path
  };
  std::vector<Action> script;
};

enum class TraceKind { Send, Deliver, Drop, Timer, Serve };

struct TraceEvent {
  std::uint64_t tick = 0;
  TraceKind kind = TraceKind::Send;
  NodeId src = 0;
  NodeId dst = 0;
  MsgTag tag = MsgTag::Ping;
  std::uint64_t msg_id = 0;
};

std::string trace_line(const TraceEvent& e);

// Deterministic discrete-event network: virtual ticks, seeded latency and
// loss, and a total order on events (tick, then insertion sequence). The
// same configuration and script always produce byte-identical traces.
class SimNet {
 public:
  explicit SimNet(SimConfig cfg);
  ~SimNet();

  SimNet(const SimNet&) = delete;
  SimNet& operator=(const SimNet&) = delete;

  // Creates all nodes and joins them one at a time through the first one,
  // letting the network settle between joins.
  Result<Unit, std::string> build();

  // Runs events until none remain. False when `max_ticks` was reached
  // with events still pending (a livelock or runaway rebroadcast).
  bool run_until_quiescent(std::uint64_t max_ticks = 10'000'000);

  std::uint64_t now() const { return now_; }
  bool alive(NodeId id) const { return nodes_.count(id) > 0; }
  std::vector<NodeId> node_ids() const;
  Node& node(NodeId id);

  // Scripted faults and workload. Results are collected once the network
  // quiesces (or the deadline passes) and read back by id.
  std::uint64_t inject_query(NodeId origin, const Query& q,
                             std::optional<std::size_t> expected = {});
  std::uint64_t inject_fetch(NodeId origin, NodeId server,
                             std::string rel_path);
  std::uint64_t inject_list(NodeId origin, NodeId server,
                            std::string rel_path);
  void kill_node(NodeId id);

  const QueryOutcome* query_outcome(std::uint64_t id) const;
  const Result<std::vector<std::uint8_t>, FileError>* fetch_result(
      std::uint64_t id) const;
  const Result<std::vector<WireDirEntry>, FileError>* list_result(
      std::uint64_t id) const;

  // Changes the loss rate from now on. Lets a scenario bring the network
  // up cleanly and then degrade it.
  void set_loss(double loss);

  const std::vector<TraceEvent>& trace() const { return trace_; }
  std::string trace_text() const;

  // Forgets recorded events (long sweeps would otherwise hoard memory).
  void clear_trace() { trace_.clear(); }

  const SimConfig& config() const { return cfg_; }

 private:
  friend class SimEnv;

  struct PendingEvent {
    bool is_alarm = false;
    NodeId dst = 0;
    NodeId from = 0;
    std::vector<std::uint8_t> bytes;
  };

  struct NodeRec {
    std::unique_ptr<NodeEnv> env;
    std::unique_ptr<Node> node;
    bool join_ok = false;
  };

  void env_send(NodeId from, const NodeAddr& to, const Message& m);
  void env_set_alarm(NodeId who, std::uint64_t at);
  void env_serve(NodeId who, std::uint64_t msg_id);
  void schedule(std::uint64_t tick, PendingEvent ev);
  std::uint64_t roll_latency();
  bool roll_loss();

  SimConfig cfg_;
  std::mt19937_64 rng_;
  std::uint64_t now_ = 0;
  std::uint64_t seq_ = 0;
  std::map<std::pair<std::uint64_t, std::uint64_t>, PendingEvent> events_;
  std::set<std::pair<NodeId, std::uint64_t>> alarms_;
  std::map<NodeId, NodeRec> nodes_;
  std::vector<TraceEvent> trace_;

  std::map<std::uint64_t, QueryOutcome> query_outcomes_;
  std::map<std::uint64_t, Result<std::vector<std::uint8_t>, FileError>>
      fetch_results_;
  std::map<std::uint64_t, Result<std::vector<WireDirEntry>, FileError>>
      list_results_;
};

}  // namespace sp2p

#endif  // SP2P_SIMNET_HPP
