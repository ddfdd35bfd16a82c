#ifndef SP2P_OVERLAY_HPP
#define SP2P_OVERLAY_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sp2p/domain.hpp"
#include "sp2p/wire.hpp"

namespace sp2p {

enum class RouteKind : std::uint8_t { Tree, Cached };
enum class CachePolicy : std::uint8_t { Lru, MinD };

const char* to_string(CachePolicy p);
std::optional<CachePolicy> cache_policy_from(std::string_view name);

struct RouteEntry {
  PeerInfo peer;
  RouteKind kind = RouteKind::Tree;
  std::uint64_t inserted_at = 0;  // logical timestamps, monotonic per table
  std::uint64_t last_used = 0;
};

// The members of one tree vertex along this node's own path, together with
// the n-tuple of gateways elected from them.
struct GroupView {
  DomainPath prefix;
  std::vector<PeerInfo> members;
  std::vector<PeerInfo> gateways;
};

// Routing state of one node. Three layers:
//
//  * leaf members: every known node sharing this node's exact domain
//    (never evicted; a leaf group must see all of itself),
//  * tree slots: for each branch direction, the best n candidates
//    (smallest ids), the n-tuple gateway replicas of that branch,
//  * cache: bounded scratch of additional routes, evicted by policy.
//
// Everything is recomputed from std::map state so iteration order, and with
// it routing, is deterministic.
class RouteTable {
 public:
  RouteTable(PeerInfo self, std::size_t n_tuple, CachePolicy policy,
             std::size_t cache_capacity);

  const PeerInfo& self() const { return self_; }
  const DomainPath& self_domain() const { return self_.domain; }

  // Feeds one observed peer through leaf/slot/cache placement. Slot losers
  // spill into the cache rather than being forgotten.
  void learn(const PeerInfo& p);

  // Inserts directly into the cache (still refreshes an existing entry).
  void cache_insert(const PeerInfo& p);

  // Forgets a peer everywhere; gateway views re-elect on the fly.
  void remove_peer(NodeId id);

  bool knows(NodeId id) const;
  std::optional<PeerInfo> find(NodeId id) const;

  // Next-hop candidates strictly nearer to `target` than this node is,
  // ordered by descending shared prefix, then ascending tree distance,
  // then ascending node id. `exclude` removes one id (usually the
  // message origin) from consideration.
  std::vector<RouteEntry> candidates_for(const DomainPath& target,
                                         NodeId exclude = 0) const;

  // Known peers whose domain lies at or under `prefix`, id-ascending.
  std::vector<PeerInfo> peers_in_subtree(const DomainPath& prefix) const;

  // Every known peer, id-ascending.
  std::vector<PeerInfo> all_peers() const;

  // Group composition at `layer` labels below the root along the self path
  // (layer == self depth gives the leaf group, which includes self).
  GroupView group_view(std::size_t layer) const;
  GroupView leaf_view() const { return group_view(self_.domain.depth()); }

  std::size_t n_tuple() const { return n_tuple_; }
  CachePolicy policy() const { return policy_; }
  std::size_t cache_capacity() const { return cache_capacity_; }
  std::size_t cache_size() const { return cache_.size(); }

  const std::map<NodeId, RouteEntry>& leaf_members() const { return leaf_; }
  const std::map<DomainPath, std::vector<RouteEntry>>& slots() const {
    return slots_;
  }
  const std::map<NodeId, RouteEntry>& cached() const { return cache_; }

  // The slot a peer in `peer_domain` files under, from the perspective of
  // `self_domain`: the peer-side path cut one label past the shared prefix.
  static DomainPath slot_key(const DomainPath& self_domain,
                             const DomainPath& peer_domain);

  // The n gateway replicas of a group: the n members with smallest ids.
  static std::vector<PeerInfo> elect_gateways(std::vector<PeerInfo> members,
                                              std::size_t n);

 private:
  void touch(RouteEntry& e) { e.last_used = ++clock_; }
  void evict_one();

  PeerInfo self_;
  std::size_t n_tuple_;
  CachePolicy policy_;
  std::size_t cache_capacity_;
  std::uint64_t clock_ = 0;

  std::map<NodeId, RouteEntry> leaf_;
  std::map<DomainPath, std::vector<RouteEntry>> slots_;  // key: slot_key()
  std::map<NodeId, RouteEntry> cache_;
};

}  // namespace sp2p

#endif  // SP2P_OVERLAY_HPP
