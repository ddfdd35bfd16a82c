#include "sp2p/simnet.hpp"

#include <algorithm>
#include <cstdio>

namespace sp2p {

std::string trace_line(const TraceEvent& e) {
  char buf[160];
  switch (e.kind) {
    case TraceKind::Send:
      std::snprintf(buf, sizeof(buf), "%08llu SEND %llu %llu %s %llu",
                    static_cast<unsigned long long>(e.tick),
                    static_cast<unsigned long long>(e.src),
                    static_cast<unsigned long long>(e.dst), to_string(e.tag),
                    static_cast<unsigned long long>(e.msg_id));
      break;
    case TraceKind::Deliver:
      std::snprintf(buf, sizeof(buf), "%08llu DELIVER %llu %llu %s %llu",
                    static_cast<unsigned long long>(e.tick),
                    static_cast<unsigned long long>(e.src),
                    static_cast<unsigned long long>(e.dst), to_string(e.tag),
                    static_cast<unsigned long long>(e.msg_id));
      break;
    case TraceKind::Drop:
      std::snprintf(buf, sizeof(buf), "%08llu DROP %llu %llu %s %llu",
                    static_cast<unsigned long long>(e.tick),
                    static_cast<unsigned long long>(e.src),
                    static_cast<unsigned long long>(e.dst), to_string(e.tag),
                    static_cast<unsigned long long>(e.msg_id));
      break;
    case TraceKind::Timer:
      std::snprintf(buf, sizeof(buf), "%08llu TIMER %llu",
                    static_cast<unsigned long long>(e.tick),
                    static_cast<unsigned long long>(e.dst));
      break;
    case TraceKind::Serve:
      std::snprintf(buf, sizeof(buf), "%08llu SERVE %llu %llu",
                    static_cast<unsigned long long>(e.tick),
                    static_cast<unsigned long long>(e.dst),
                    static_cast<unsigned long long>(e.msg_id));
      break;
  }
  return buf;
}

namespace {

// Endpoints inside the simulator are "sim:<id>".
std::string sim_endpoint(NodeId id) { return "sim:" + std::to_string(id); }

std::optional<NodeId> parse_sim_endpoint(const std::string& ep) {
  if (ep.rfind("sim:", 0) != 0) return std::nullopt;
  NodeId id = 0;
  for (std::size_t i = 4; i < ep.size(); ++i) {
    if (ep[i] < '0' || ep[i] > '9') return std::nullopt;
    id = id * 10 + static_cast<NodeId>(ep[i] - '0');
  }
  return id;
}

}  // namespace

// Bridges one node to the simulated network.
class SimEnv : public NodeEnv {
 public:
  SimEnv(SimNet* net, NodeId id) : net_(net), id_(id) {}

  std::uint64_t now() override { return net_->now(); }
  void send(const NodeAddr& to, const Message& m) override {
    net_->env_send(id_, to, m);
  }
  void set_alarm(std::uint64_t at) override { net_->env_set_alarm(id_, at); }
  void on_serve(std::uint64_t msg_id) override { net_->env_serve(id_, msg_id); }
  void log(std::string_view) override {}

 private:
  SimNet* net_;
  NodeId id_;
};

SimNet::SimNet(SimConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.seed) {
  if (cfg_.latency_max < cfg_.latency_min) {
    cfg_.latency_max = cfg_.latency_min;
  }
}

SimNet::~SimNet() = default;

// Uniform draw without std::uniform_int_distribution, whose mapping is
// implementation-defined; traces must be identical across toolchains.
std::uint64_t SimNet::roll_latency() {
  std::uint64_t span = cfg_.latency_max - cfg_.latency_min + 1;
  return cfg_.latency_min + rng_() % span;
}

void SimNet::set_loss(double loss) {
  if (loss < 0.0) loss = 0.0;
  if (loss >= 1.0) loss = 0.999;
  cfg_.loss = loss;
}

bool SimNet::roll_loss() {
  if (cfg_.loss <= 0.0) return false;
  // 53-bit mantissa draw gives a uniform double in [0,1).
  double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  return u < cfg_.loss;
}

void SimNet::schedule(std::uint64_t tick, PendingEvent ev) {
  events_.emplace(std::make_pair(tick, ++seq_), std::move(ev));
}

void SimNet::env_send(NodeId from, const NodeAddr& to, const Message& m) {
  auto encoded = encode(m);
  if (!encoded) return;  // serving paths cap sizes; nothing to do here
  auto dst = parse_sim_endpoint(to.endpoint);
  if (!dst) return;

  trace_.push_back(
      TraceEvent{now_, TraceKind::Send, from, *dst, m.tag(), m.msg_id});
  if (roll_loss()) {
    trace_.push_back(
        TraceEvent{now_, TraceKind::Drop, from, *dst, m.tag(), m.msg_id});
    return;
  }
  std::uint64_t at = now_ + roll_latency();
  PendingEvent ev;
  ev.dst = *dst;
  ev.from = from;
  ev.bytes = std::move(encoded).value();
  schedule(at, std::move(ev));
}

void SimNet::env_set_alarm(NodeId who, std::uint64_t at) {
  if (at < now_) at = now_;
  if (!alarms_.insert(std::make_pair(who, at)).second) return;
  PendingEvent ev;
  ev.is_alarm = true;
  ev.dst = who;
  schedule(at, std::move(ev));
}

void SimNet::env_serve(NodeId who, std::uint64_t msg_id) {
  trace_.push_back(
      TraceEvent{now_, TraceKind::Serve, who, who, MsgTag::Query, msg_id});
}

Result<Unit, std::string> SimNet::build() {
  if (cfg_.nodes.empty()) return std::string("no nodes configured");
  std::set<NodeId> ids;
  for (const auto& spec : cfg_.nodes) {
    if (spec.id == 0) return std::string("node id 0 is reserved");
    if (!ids.insert(spec.id).second) {
      return std::string("duplicate node id ") + std::to_string(spec.id);
    }
  }

  const NodeId bootstrap_id = cfg_.nodes.front().id;
  for (const auto& spec : cfg_.nodes) {
    NodeConfig nc;
    nc.node_id = spec.id;
    nc.endpoint = sim_endpoint(spec.id);
    nc.domain = spec.domain;
    nc.bootstrap = spec.id == bootstrap_id ? "" : sim_endpoint(bootstrap_id);
    nc.sandbox = spec.sandbox;
    nc.n_tuple = cfg_.n_tuple;
    nc.cache_policy = cfg_.cache_policy;
    nc.cache_capacity = cfg_.cache_capacity;
    nc.ttl = cfg_.ttl;
    nc.query_deadline = cfg_.query_deadline;

    LocalStore store;
    if (!spec.sandbox.empty()) {
      auto root = SandboxRoot::open(spec.sandbox);
      if (!root) return root.error();
      store.root = std::move(root).value();
      auto idx = build_index(*store.root, store.extractors);
      if (!idx) return idx.error();
      store.index = std::make_shared<InvertedIndex>(std::move(idx).value());
    } else if (!spec.docs.empty()) {
      auto idx = std::make_shared<InvertedIndex>();
      for (const auto& [path, text] : spec.docs) {
        idx->add_document(path, text, text.size(), 0);
      }
      store.index = idx;
      store.inline_texts = spec.docs;
    }

    auto rec = NodeRec{};
    auto env = std::make_unique<SimEnv>(this, spec.id);
    rec.node = std::make_unique<Node>(nc, std::move(store), *env);
    rec.env = std::move(env);
    auto [it, inserted] = nodes_.emplace(spec.id, std::move(rec));
    (void)inserted;

    NodeRec& r = it->second;
    r.node->start([&r](bool ok) { r.join_ok = ok; });
    if (!run_until_quiescent()) {
      return std::string("network failed to settle while node ") +
             std::to_string(spec.id) + " joined";
    }
    if (!r.node->joined()) {
      return std::string("node ") + std::to_string(spec.id) +
             " failed to join";
    }
  }
  return Unit{};
}

bool SimNet::run_until_quiescent(std::uint64_t max_ticks) {
  while (!events_.empty()) {
    auto it = events_.begin();
    std::uint64_t tick = it->first.first;
    if (tick > max_ticks) return false;
    PendingEvent ev = std::move(it->second);
    events_.erase(it);
    now_ = std::max(now_, tick);

    auto nit = nodes_.find(ev.dst);
    if (ev.is_alarm) {
      alarms_.erase(std::make_pair(ev.dst, tick));
      if (nit == nodes_.end()) continue;
      trace_.push_back(TraceEvent{now_, TraceKind::Timer, ev.dst, ev.dst,
                                  MsgTag::Ping, 0});
      nit->second.node->on_alarm();
      continue;
    }

    auto decoded = decode(ev.bytes);
    MsgTag tag = decoded ? decoded.value().tag() : MsgTag::Ping;
    std::uint64_t msg_id = decoded ? decoded.value().msg_id : 0;
    if (nit == nodes_.end()) {
      // The receiver died while the datagram was in flight.
      trace_.push_back(
          TraceEvent{now_, TraceKind::Drop, ev.from, ev.dst, tag, msg_id});
      continue;
    }
    trace_.push_back(
        TraceEvent{now_, TraceKind::Deliver, ev.from, ev.dst, tag, msg_id});
    nit->second.node->handle_datagram(ev.bytes, sim_endpoint(ev.from));
  }
  return true;
}

std::vector<NodeId> SimNet::node_ids() const {
  std::vector<NodeId> out;
  out.reserve(nodes_.size());
  for (const auto& [id, rec] : nodes_) out.push_back(id);
  return out;
}

Node& SimNet::node(NodeId id) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw std::out_of_range("no such node");
  return *it->second.node;
}

std::uint64_t SimNet::inject_query(NodeId origin, const Query& q,
                                   std::optional<std::size_t> expected) {
  auto holder = std::make_shared<std::uint64_t>(0);
  std::uint64_t id = node(origin).run_query(
      q,
      [this, holder](QueryOutcome out) {
        query_outcomes_[*holder] = std::move(out);
      },
      expected);
  *holder = id;
  return id;
}

std::uint64_t SimNet::inject_fetch(NodeId origin, NodeId server,
                                   std::string rel_path) {
  auto holder = std::make_shared<std::uint64_t>(0);
  std::uint64_t id = node(origin).start_fetch(
      NodeAddr{server, sim_endpoint(server)}, std::move(rel_path),
      [this, holder](Result<std::vector<std::uint8_t>, FileError> r) {
        fetch_results_.emplace(*holder, std::move(r));
      });
  *holder = id;
  return id;
}

std::uint64_t SimNet::inject_list(NodeId origin, NodeId server,
                                  std::string rel_path) {
  auto holder = std::make_shared<std::uint64_t>(0);
  std::uint64_t id = node(origin).start_list(
      NodeAddr{server, sim_endpoint(server)}, std::move(rel_path),
      [this, holder](Result<std::vector<WireDirEntry>, FileError> r) {
        list_results_.emplace(*holder, std::move(r));
      });
  *holder = id;
  return id;
}

void SimNet::kill_node(NodeId id) {
  nodes_.erase(id);
  // Surviving holders of routes to the dead node probe it; the probes go
  // unanswered and the peer is dropped everywhere.
  for (auto& [nid, rec] : nodes_) {
    if (rec.node->table().knows(id)) rec.node->start_probe(id);
  }
}

const QueryOutcome* SimNet::query_outcome(std::uint64_t id) const {
  auto it = query_outcomes_.find(id);
  return it == query_outcomes_.end() ? nullptr : &it->second;
}

const Result<std::vector<std::uint8_t>, FileError>* SimNet::fetch_result(
    std::uint64_t id) const {
  auto it = fetch_results_.find(id);
  return it == fetch_results_.end() ? nullptr : &it->second;
}

const Result<std::vector<WireDirEntry>, FileError>* SimNet::list_result(
    std::uint64_t id) const {
  auto it = list_results_.find(id);
  return it == list_results_.end() ? nullptr : &it->second;
}

std::string SimNet::trace_text() const {
  std::string out;
  for (const auto& e : trace_) {
    out += trace_line(e);
    out += '\n';
  }
  return out;
}

}  // namespace sp2p
