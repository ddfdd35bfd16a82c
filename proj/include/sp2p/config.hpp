#ifndef SP2P_CONFIG_HPP
#define SP2P_CONFIG_HPP

#include <string>
#include <string_view>

#include "sp2p/node.hpp"
#include "sp2p/simnet.hpp"

namespace sp2p {

// Node configuration file: one "key = value" per line, '#' comments.
// Keys: node_id, bind, domain, bootstrap, sandbox, index_cache, n_tuple,
// cache_policy (lru|mind), cache_capacity, ttl, per_node_k,
// query_deadline_ms, join_timeout_ms, join_attempts, probe_timeout_ms,
// probe_attempts, list_timeout_ms, chunk_timeout_ms, chunk_retries,
// fetch_window. Unknown keys and malformed values are errors naming the
// line. The SP2P_BIND and SP2P_SANDBOX environment variables, when set,
// override bind and sandbox.
Result<NodeConfig, std::string> parse_node_config(std::string_view text);

// Applies SP2P_BIND / SP2P_SANDBOX on top of a parsed config.
void apply_env_overrides(NodeConfig& cfg);

// Simulation scenario file: same line syntax. Keys: seed, latency ("N" or
// "MIN..MAX" ticks), loss, n_tuple, cache_policy, cache_capacity, ttl,
// query_deadline_ms; repeated "node = <id> <domain> [sandbox]" declare the
// network (first node bootstraps the rest); repeated "doc = <id> <path>
// <text>" attach an in-memory document to a node; script steps run in file
// order: "query = <origin> <keywords>@<domain>", "kill = <id>",
// "fetch = <origin> <server> <path>", "list = <origin> <server> <path>".
Result<SimConfig, std::string> parse_sim_config(std::string_view text);

Result<std::string, std::string> read_text_file(const std::string& path);

}  // namespace sp2p

#endif  // SP2P_CONFIG_HPP
