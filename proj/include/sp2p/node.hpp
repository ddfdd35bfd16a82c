#ifndef SP2P_NODE_HPP
#define SP2P_NODE_HPP

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sp2p/digest.hpp"
#include "sp2p/overlay.hpp"
#include "sp2p/query.hpp"
#include "sp2p/search_index.hpp"
#include "sp2p/wire.hpp"

namespace sp2p {

// Everything a node needs from the outside world: a clock, a way to send a
// message and a one-shot alarm. The simulator implements this with virtual
// time and an event queue; the daemon with a UDP socket and a timer heap.
// The node itself is single-threaded and never blocks.
class NodeEnv {
 public:
  virtual ~NodeEnv() = default;

  virtual std::uint64_t now() = 0;
  virtual void send(const NodeAddr& to, const Message& m) = 0;

  // Asks for on_alarm() to run at time `at` (or as soon after as the
  // environment can manage). Requests may be redundant; earlier ones win.
  virtual void set_alarm(std::uint64_t at) = 0;

  // Observability hooks.
  virtual void on_serve(std::uint64_t /*msg_id*/) {}
  virtual void log(std::string_view /*line*/) {}
};

struct NodeConfig {
  NodeId node_id = 0;
  std::string endpoint;
  DomainPath domain;
  std::string bootstrap;    // empty: this node starts the overlay
  std::string sandbox;      // directory served and indexed; empty: none
  std::string index_cache;  // where the index image is kept; empty: none

  std::size_t n_tuple = 2;
  CachePolicy cache_policy = CachePolicy::Lru;
  std::size_t cache_capacity = 32;

  std::uint8_t ttl = 16;
  std::uint16_t per_node_k = 10;
  std::uint64_t query_deadline = 2000;

  std::uint64_t join_timeout = 1000;
  int join_attempts = 4;

  std::uint64_t probe_timeout = 500;
  int probe_attempts = 3;

  std::uint64_t list_timeout = 500;
  int list_attempts = 4;

  std::uint64_t chunk_timeout = 500;
  int chunk_retries = 16;  // re-sends per chunk after the first request
  std::size_t fetch_window = 8;
  std::uint64_t max_fetch_bytes = 256ULL << 20;
};

// Local documents a node serves: an optional sandboxed directory plus the
// index over it. Nodes without a sandbox can still carry an in-memory
// corpus (texts keyed by path) for exercising search.
struct LocalStore {
  std::optional<SandboxRoot> root;
  ExtractorRegistry extractors = ExtractorRegistry::builtin();
  std::shared_ptr<const InvertedIndex> index =
      std::make_shared<InvertedIndex>();
  std::map<std::string, std::string> inline_texts;
};

// Sliding window remembering the last N message keys, so re-broadcast
// storms process each message once. A key may be re-processed when it
// arrives again at a higher phase (a join seen greedy-first, flood-later).
class DedupWindow {
 public:
  explicit DedupWindow(std::size_t capacity = 4096);

  // True when (node,id) was already recorded at `phase` or higher;
  // otherwise records it and returns false.
  bool seen_or_insert(NodeId node, std::uint64_t id, std::uint8_t phase = 0);

  std::size_t size() const { return seen_.size(); }

 private:
  std::size_t capacity_;
  std::map<std::pair<NodeId, std::uint64_t>, std::uint8_t> seen_;
  std::deque<std::pair<NodeId, std::uint64_t>> order_;
};

struct NodeMetrics {
  std::uint64_t decode_errors = 0;
  std::uint64_t dup_drops = 0;
  std::uint64_t late_results = 0;
  std::uint64_t serves = 0;
  std::uint64_t forwards = 0;
  std::uint64_t rebroadcasts = 0;
  std::uint64_t dead_end_replies = 0;
  std::uint64_t peers_failed = 0;
};

using QueryCallback = std::function<void(QueryOutcome)>;
using ListCallback =
    std::function<void(Result<std::vector<WireDirEntry>, FileError>)>;
using FetchCallback =
    std::function<void(Result<std::vector<std::uint8_t>, FileError>)>;
using JoinCallback = std::function<void(bool joined)>;

// One overlay participant. Drives all protocol behaviour (join, routed
// queries, serving, liveness probes, directory listing, chunked fetch) on
// top of a NodeEnv; identical logic runs in simulation and over real UDP.
class Node {
 public:
  Node(NodeConfig cfg, LocalStore store, NodeEnv& env);

  // Begins the join handshake (or immediately becomes the first node when
  // no bootstrap is configured).
  void start(JoinCallback done = nullptr);

  // Feeds one received datagram through decode and dispatch.
  void handle_datagram(std::span<const std::uint8_t> bytes,
                       std::string_view from_endpoint = {});

  // Fires due timers. The environment calls this at (or after) the time
  // passed to set_alarm.
  void on_alarm();

  // Issues a query from this node. The callback runs once, either when
  // `expected_responders` distinct nodes have answered or at the deadline.
  std::uint64_t run_query(const Query& q, QueryCallback done,
                          std::optional<std::size_t> expected_responders = {});

  // Same, but hands the query to one explicit first hop instead of routing
  // by this node's own table. Used by thin clients that know a daemon.
  std::uint64_t run_query_via(const NodeAddr& relay, const Query& q,
                              QueryCallback done,
                              std::optional<std::size_t> expected = {});

  // Remote directory listing / file fetch against a specific peer.
  std::uint64_t start_list(const NodeAddr& peer, std::string rel_path,
                           ListCallback done);
  std::uint64_t start_fetch(const NodeAddr& peer, std::string rel_path,
                            FetchCallback done);

  // Liveness probe; after the configured attempts go unanswered the peer
  // is dropped from the route table.
  void start_probe(NodeId peer);
  void probe_all();

  // Rebuilds the index from the sandbox. Returns the document count.
  Result<std::size_t, std::string> reindex();

  bool joined() const { return joined_; }
  bool join_failed() const { return join_failed_; }
  const NodeConfig& config() const { return cfg_; }
  PeerInfo self_peer() const;
  RouteTable& table() { return table_; }
  const RouteTable& table() const { return table_; }
  const NodeMetrics& metrics() const { return metrics_; }
  LocalStore& store() { return store_; }

  // Earliest pending deadline, if any timer is armed.
  std::optional<std::uint64_t> next_deadline() const;

 private:
  struct JoinState {
    int attempts = 0;
    std::uint64_t deadline = 0;
    std::set<std::uint64_t> msg_ids;
  };

  struct QueryState {
    Query q;
    std::uint64_t started = 0;
    std::uint64_t deadline = 0;
    std::optional<std::size_t> expected;
    std::set<NodeId> responders;
    std::map<std::pair<NodeId, std::string>, QueryHit> hits;
    bool dead_end = false;
    QueryCallback done;
  };

  struct ProbeState {
    NodeAddr addr;
    int attempts = 0;
    std::uint64_t deadline = 0;
  };

  struct ListState {
    NodeAddr peer;
    std::string rel_path;
    int attempts = 0;
    std::uint64_t deadline = 0;
    ListCallback done;
  };

  struct FetchState {
    NodeAddr peer;
    std::string rel_path;
    bool size_known = false;
    std::uint64_t file_size = 0;
    std::size_t num_chunks = 0;
    bool digest_known = false;
    Sha256 digest{};
    std::vector<std::uint8_t> buf;
    std::vector<bool> have;
    std::size_t have_count = 0;
    std::uint64_t next_offset = 0;
    struct Pending {
      int attempts = 0;
      std::uint64_t deadline = 0;
    };
    std::map<std::uint64_t, Pending> outstanding;  // keyed by offset
    FetchCallback done;
  };

  std::uint64_t next_id() { return ++id_counter_; }
  NodeAddr self_addr() const { return NodeAddr{cfg_.node_id, cfg_.endpoint}; }
  void learn_from(const Message& m);
  void send_msg(const NodeAddr& to, std::uint64_t msg_id, std::uint8_t ttl,
                Payload payload);
  void arm_alarm();

  // inbound handlers
  void handle_join_req(const Message& m);
  void handle_join_ack(const Message& m);
  void handle_query(const Message& m);
  void handle_result(const Message& m);
  void handle_ping(const Message& m);
  void handle_pong(const Message& m);
  void handle_list_req(const Message& m);
  void handle_list_resp(const Message& m);
  void handle_file_req(const Message& m);
  void handle_file_chunk(const Message& m);

  // query plumbing
  std::uint64_t begin_query(const Query& q, QueryCallback done,
                            std::optional<std::size_t> expected, Message& m);
  void route_query(const Message& m);
  void serve_query(const Message& m);
  void finish_query(std::uint64_t msg_id, bool complete);

  // join plumbing
  void send_join_req();
  void send_join_ack(const Message& req);

  // fetch plumbing
  void fetch_fill_window(std::uint64_t session, FetchState& st);
  void fetch_send(std::uint64_t session, FetchState& st,
                  std::vector<std::uint64_t> offsets);
  void fetch_fail(std::uint64_t session, FileError err);
  void fetch_finish(std::uint64_t session);

  // serving plumbing
  FileChunk build_chunk(const FileReq& req, std::uint64_t offset);

  NodeConfig cfg_;
  LocalStore store_;
  NodeEnv& env_;
  RouteTable table_;
  DedupWindow dedup_;
  NodeMetrics metrics_;

  std::uint64_t id_counter_ = 0;
  bool joined_ = false;
  bool join_failed_ = false;
  JoinCallback join_done_;
  std::optional<JoinState> joining_;

  std::map<std::uint64_t, QueryState> queries_;
  std::map<NodeId, ProbeState> probes_;
  std::map<std::uint64_t, ListState> lists_;
  std::map<std::uint64_t, FetchState> fetches_;
};

}  // namespace sp2p

#endif  // SP2P_NODE_HPP
