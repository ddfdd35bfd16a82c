#include "sp2p/overlay.hpp"

#include <algorithm>
#include <cassert>

namespace sp2p {

const char* to_string(CachePolicy p) {
  return p == CachePolicy::Lru ? "lru" : "mind";
}

std::optional<CachePolicy> cache_policy_from(std::string_view name) {
  if (name == "lru") return CachePolicy::Lru;
  if (name == "mind") return CachePolicy::MinD;
  return std::nullopt;
}

RouteTable::RouteTable(PeerInfo self, std::size_t n_tuple, CachePolicy policy,
                       std::size_t cache_capacity)
    : self_(std::move(self)),
      n_tuple_(n_tuple == 0 ? 1 : n_tuple),
      policy_(policy),
      cache_capacity_(cache_capacity) {}

DomainPath RouteTable::slot_key(const DomainPath& self_domain,
                                const DomainPath& peer_domain) {
  std::size_t cpl = common_prefix_len(self_domain, peer_domain);
  std::size_t cut = std::min(cpl + 1, peer_domain.labels().size());
  return peer_domain.prefix(cut);
}

std::vector<PeerInfo> RouteTable::elect_gateways(std::vector<PeerInfo> members,
                                                 std::size_t n) {
  std::sort(members.begin(), members.end(),
            [](const PeerInfo& a, const PeerInfo& b) {
              return a.addr.node < b.addr.node;
            });
  members.erase(std::unique(members.begin(), members.end(),
                            [](const PeerInfo& a, const PeerInfo& b) {
                              return a.addr.node == b.addr.node;
                            }),
                members.end());
  if (members.size() > n) members.resize(n);
  return members;
}

bool RouteTable::knows(NodeId id) const {
  if (leaf_.count(id) || cache_.count(id)) return true;
  for (const auto& [key, vec] : slots_) {
    for (const auto& e : vec) {
      if (e.peer.addr.node == id) return true;
    }
  }
  return false;
}

std::optional<PeerInfo> RouteTable::find(NodeId id) const {
  if (auto it = leaf_.find(id); it != leaf_.end()) return it->second.peer;
  if (auto it = cache_.find(id); it != cache_.end()) return it->second.peer;
  for (const auto& [key, vec] : slots_) {
    for (const auto& e : vec) {
      if (e.peer.addr.node == id) return e.peer;
    }
  }
  return std::nullopt;
}

void RouteTable::learn(const PeerInfo& p) {
  NodeId id = p.addr.node;
  if (id == 0 || id == self_.addr.node || (id & kTransientIdBit)) return;

  // Refresh in place when we already hold this peer under the same domain.
  if (auto it = leaf_.find(id); it != leaf_.end()) {
    if (it->second.peer.domain == p.domain) {
      it->second.peer = p;
      touch(it->second);
      return;
    }
    leaf_.erase(it);  // domain changed: replace below
  }
  if (auto it = cache_.find(id); it != cache_.end()) {
    if (it->second.peer.domain == p.domain) {
      it->second.peer = p;
      touch(it->second);
      return;
    }
    cache_.erase(it);
  }
  for (auto& [key, vec] : slots_) {
    for (auto vit = vec.begin(); vit != vec.end(); ++vit) {
      if (vit->peer.addr.node != id) continue;
      if (vit->peer.domain == p.domain) {
        vit->peer = p;
        touch(*vit);
        return;
      }
      vec.erase(vit);
      break;
    }
  }
  for (auto it = slots_.begin(); it != slots_.end();) {
    it = it->second.empty() ? slots_.erase(it) : std::next(it);
  }

  if (p.domain == self_.domain) {
    RouteEntry e{p, RouteKind::Tree, ++clock_, 0};
    e.last_used = e.inserted_at;
    leaf_.emplace(id, std::move(e));
    return;
  }

  DomainPath key = slot_key(self_.domain, p.domain);
  auto& vec = slots_[key];
  auto by_id = [](const RouteEntry& a, const RouteEntry& b) {
    return a.peer.addr.node < b.peer.addr.node;
  };
  RouteEntry e{p, RouteKind::Tree, ++clock_, 0};
  e.last_used = e.inserted_at;
  if (vec.size() < n_tuple_) {
    vec.insert(std::upper_bound(vec.begin(), vec.end(), e, by_id),
               std::move(e));
    return;
  }
  if (id < vec.back().peer.addr.node) {
    // The slot keeps the n smallest ids; the displaced peer is still a
    // perfectly good route, so it spills into the cache.
    PeerInfo demoted = vec.back().peer;
    vec.pop_back();
    vec.insert(std::upper_bound(vec.begin(), vec.end(), e, by_id),
               std::move(e));
    cache_insert(demoted);
    return;
  }
  cache_insert(p);
}

void RouteTable::cache_insert(const PeerInfo& p) {
  NodeId id = p.addr.node;
  if (id == 0 || id == self_.addr.node || (id & kTransientIdBit)) return;

  if (auto it = leaf_.find(id); it != leaf_.end()) {
    touch(it->second);
    return;
  }
  for (auto& [key, vec] : slots_) {
    for (auto& e : vec) {
      if (e.peer.addr.node == id) {
        touch(e);
        return;
      }
    }
  }
  if (auto it = cache_.find(id); it != cache_.end()) {
    it->second.peer = p;
    touch(it->second);
    return;
  }
  if (cache_capacity_ == 0) return;
  if (cache_.size() >= cache_capacity_) evict_one();
  RouteEntry e{p, RouteKind::Cached, ++clock_, 0};
  e.last_used = e.inserted_at;
  cache_.emplace(id, std::move(e));
}

void RouteTable::evict_one() {
  assert(!cache_.empty());
  auto victim = cache_.begin();
  for (auto it = std::next(cache_.begin()); it != cache_.end(); ++it) {
    bool worse;
    if (policy_ == CachePolicy::Lru) {
      worse = it->second.last_used < victim->second.last_used ||
              (it->second.last_used == victim->second.last_used &&
               it->second.inserted_at < victim->second.inserted_at);
    } else {
      std::size_t dv = domain_distance(victim->second.peer.domain,
                                       self_.domain);
      std::size_t di = domain_distance(it->second.peer.domain, self_.domain);
      worse = di < dv || (di == dv && it->second.inserted_at <
                                          victim->second.inserted_at);
    }
    if (worse) victim = it;
  }
  cache_.erase(victim);
}

void RouteTable::remove_peer(NodeId id) {
  leaf_.erase(id);
  cache_.erase(id);
  for (auto it = slots_.begin(); it != slots_.end();) {
    auto& vec = it->second;
    vec.erase(std::remove_if(vec.begin(), vec.end(),
                             [id](const RouteEntry& e) {
                               return e.peer.addr.node == id;
                             }),
              vec.end());
    it = vec.empty() ? slots_.erase(it) : std::next(it);
  }
}

std::vector<RouteEntry> RouteTable::candidates_for(const DomainPath& target,
                                                   NodeId exclude) const {
  std::size_t self_cpl = common_prefix_len(target, self_.domain);
  std::size_t self_dist = domain_distance(target, self_.domain);

  std::vector<RouteEntry> out;
  auto consider = [&](const RouteEntry& e) {
    if (e.peer.addr.node == exclude) return;
    std::size_t cpl = common_prefix_len(target, e.peer.domain);
    std::size_t dist = domain_distance(target, e.peer.domain);
    if (cpl > self_cpl || (cpl == self_cpl && dist < self_dist)) {
      out.push_back(e);
    }
  };
  for (const auto& [id, e] : leaf_) consider(e);
  for (const auto& [key, vec] : slots_) {
    for (const auto& e : vec) consider(e);
  }
  for (const auto& [id, e] : cache_) consider(e);

  std::sort(out.begin(), out.end(),
            [&](const RouteEntry& a, const RouteEntry& b) {
              std::size_t ca = common_prefix_len(target, a.peer.domain);
              std::size_t cb = common_prefix_len(target, b.peer.domain);
              if (ca != cb) return ca > cb;
              std::size_t da = domain_distance(target, a.peer.domain);
              std::size_t db = domain_distance(target, b.peer.domain);
              if (da != db) return da < db;
              return a.peer.addr.node < b.peer.addr.node;
            });
  return out;
}

std::vector<PeerInfo> RouteTable::peers_in_subtree(
    const DomainPath& prefix) const {
  std::map<NodeId, PeerInfo> acc;
  auto consider = [&](const RouteEntry& e) {
    if (is_ancestor_or_self(prefix, e.peer.domain)) {
      acc.emplace(e.peer.addr.node, e.peer);
    }
  };
  for (const auto& [id, e] : leaf_) consider(e);
  for (const auto& [key, vec] : slots_) {
    for (const auto& e : vec) consider(e);
  }
  for (const auto& [id, e] : cache_) consider(e);

  std::vector<PeerInfo> out;
  out.reserve(acc.size());
  for (auto& [id, p] : acc) out.push_back(std::move(p));
  return out;
}

std::vector<PeerInfo> RouteTable::all_peers() const {
  return peers_in_subtree(DomainPath::root());
}

GroupView RouteTable::group_view(std::size_t layer) const {
  std::size_t depth = self_.domain.depth();
  if (layer > depth) layer = depth;

  // Bottom-up: the gateways of the vertex one layer down on the self path
  // represent that branch inside the current group.
  std::vector<PeerInfo> lower_gateways;
  GroupView gv;
  for (std::size_t lay = depth + 1; lay-- > layer;) {
    DomainPath vertex = self_.domain.prefix(lay + 1);
    std::map<NodeId, PeerInfo> members;

    if (lay == depth) {
      members.emplace(self_.addr.node, self_);
      for (const auto& [id, e] : leaf_) members.emplace(id, e.peer);
    } else {
      if (auto it = slots_.find(vertex); it != slots_.end()) {
        for (const auto& e : it->second) {
          members.emplace(e.peer.addr.node, e.peer);
        }
      }
      for (const auto& p : lower_gateways) members.emplace(p.addr.node, p);
    }

    // Sibling branches hanging off this vertex, one slot per branch; the
    // slot contents are that branch's gateway replicas as known here.
    DomainPath own_child =
        lay < depth ? self_.domain.prefix(lay + 2) : self_.domain;
    for (const auto& [key, vec] : slots_) {
      if (key.labels().size() != lay + 2) continue;
      if (!is_ancestor_or_self(vertex, key)) continue;
      if (lay < depth && key == own_child) continue;
      for (const auto& e : vec) members.emplace(e.peer.addr.node, e.peer);
    }

    gv.prefix = vertex;
    gv.members.clear();
    for (const auto& [id, p] : members) gv.members.push_back(p);
    gv.gateways = elect_gateways(gv.members, n_tuple_);
    lower_gateways = gv.gateways;
  }
  return gv;
}

}  // namespace sp2p
