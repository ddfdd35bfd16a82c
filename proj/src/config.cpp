#include "sp2p/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace sp2p {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' ||
                        s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::string line_err(int line, const std::string& what) {
  return "line " + std::to_string(line) + ": " + what;
}

bool parse_u64(std::string_view s, std::uint64_t& out) {
  if (s.empty() || s.size() > 20) return false;
  std::uint64_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
    std::uint64_t next = v * 10 + static_cast<std::uint64_t>(c - '0');
    if (next < v) return false;
    v = next;
  }
  out = v;
  return true;
}

bool parse_double(std::string_view s, double& out) {
  try {
    std::size_t used = 0;
    out = std::stod(std::string(s), &used);
    return used == s.size();
  } catch (...) {
    return false;
  }
}

// Splits on runs of spaces/tabs.
std::vector<std::string_view> fields(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

// Walks "key = value" lines, invoking fn(line_no, key, value). fn returns
// an error string or empty.
Result<Unit, std::string> each_kv(
    std::string_view text,
    const std::function<std::string(int, std::string_view, std::string_view)>&
        fn) {
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line = eol == std::string_view::npos
                                ? text.substr(pos)
                                : text.substr(pos, eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;

    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      return line_err(line_no, "expected 'key = value'");
    }
    std::string_view key = trim(line.substr(0, eq));
    std::string_view value = trim(line.substr(eq + 1));
    if (key.empty()) return line_err(line_no, "empty key");
    std::string err = fn(line_no, key, value);
    if (!err.empty()) return err;
  }
  return Unit{};
}

std::string set_u64_field(int line, std::string_view key, std::string_view v,
                          std::uint64_t lo, std::uint64_t hi,
                          std::uint64_t& out) {
  std::uint64_t parsed = 0;
  if (!parse_u64(v, parsed) || parsed < lo || parsed > hi) {
    return line_err(line, std::string(key) + " must be an integer in [" +
                              std::to_string(lo) + ", " + std::to_string(hi) +
                              "]");
  }
  out = parsed;
  return {};
}

}  // namespace

Result<std::string, std::string> read_text_file(const std::string& path) {
  using R = Result<std::string, std::string>;
  std::ifstream f(path, std::ios::binary);
  if (!f) return R::err("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return R::ok(ss.str());
}

Result<NodeConfig, std::string> parse_node_config(std::string_view text) {
  NodeConfig cfg;
  bool have_id = false, have_bind = false, have_domain = false;

  auto r = each_kv(text, [&](int line, std::string_view key,
                             std::string_view value) -> std::string {
    std::uint64_t u = 0;
    if (key == "node_id") {
      if (!parse_u64(value, u) || u == 0) {
        return line_err(line, "node_id must be a positive integer");
      }
      cfg.node_id = u;
      have_id = true;
    } else if (key == "bind") {
      if (value.empty()) return line_err(line, "bind must not be empty");
      cfg.endpoint = std::string(value);
      have_bind = true;
    } else if (key == "domain") {
      auto d = DomainPath::parse(value);
      if (!d) return line_err(line, std::string("domain: ") +
                                        to_string(d.error()));
      cfg.domain = std::move(d).value();
      have_domain = true;
    } else if (key == "bootstrap") {
      cfg.bootstrap = std::string(value);
    } else if (key == "sandbox") {
      cfg.sandbox = std::string(value);
    } else if (key == "index_cache") {
      cfg.index_cache = std::string(value);
    } else if (key == "n_tuple") {
      std::string e = set_u64_field(line, key, value, 1, 8, u);
      if (!e.empty()) return e;
      cfg.n_tuple = u;
    } else if (key == "cache_policy") {
      auto p = cache_policy_from(value);
      if (!p) return line_err(line, "cache_policy must be lru or mind");
      cfg.cache_policy = *p;
    } else if (key == "cache_capacity") {
      std::string e = set_u64_field(line, key, value, 0, 65536, u);
      if (!e.empty()) return e;
      cfg.cache_capacity = u;
    } else if (key == "ttl") {
      std::string e = set_u64_field(line, key, value, 0, kMaxTtl, u);
      if (!e.empty()) return e;
      cfg.ttl = static_cast<std::uint8_t>(u);
    } else if (key == "per_node_k") {
      std::string e = set_u64_field(line, key, value, 1, kMaxHits, u);
      if (!e.empty()) return e;
      cfg.per_node_k = static_cast<std::uint16_t>(u);
    } else if (key == "query_deadline_ms") {
      std::string e = set_u64_field(line, key, value, 1, 3600000, u);
      if (!e.empty()) return e;
      cfg.query_deadline = u;
    } else if (key == "join_timeout_ms") {
      std::string e = set_u64_field(line, key, value, 1, 3600000, u);
      if (!e.empty()) return e;
      cfg.join_timeout = u;
    } else if (key == "join_attempts") {
      std::string e = set_u64_field(line, key, value, 1, 100, u);
      if (!e.empty()) return e;
      cfg.join_attempts = static_cast<int>(u);
    } else if (key == "probe_timeout_ms") {
      std::string e = set_u64_field(line, key, value, 1, 3600000, u);
      if (!e.empty()) return e;
      cfg.probe_timeout = u;
    } else if (key == "probe_attempts") {
      std::string e = set_u64_field(line, key, value, 1, 100, u);
      if (!e.empty()) return e;
      cfg.probe_attempts = static_cast<int>(u);
    } else if (key == "list_timeout_ms") {
      std::string e = set_u64_field(line, key, value, 1, 3600000, u);
      if (!e.empty()) return e;
      cfg.list_timeout = u;
    } else if (key == "chunk_timeout_ms") {
      std::string e = set_u64_field(line, key, value, 1, 3600000, u);
      if (!e.empty()) return e;
      cfg.chunk_timeout = u;
    } else if (key == "chunk_retries") {
      std::string e = set_u64_field(line, key, value, 0, 1000, u);
      if (!e.empty()) return e;
      cfg.chunk_retries = static_cast<int>(u);
    } else if (key == "fetch_window") {
      std::string e = set_u64_field(line, key, value, 1, kMaxFileOffsets, u);
      if (!e.empty()) return e;
      cfg.fetch_window = u;
    } else {
      return line_err(line, "unknown key '" + std::string(key) + "'");
    }
    return {};
  });
  if (!r) return r.error();

  if (!have_id) return std::string("node_id is required");
  if (!have_bind) return std::string("bind is required");
  if (!have_domain) return std::string("domain is required");
  return cfg;
}

void apply_env_overrides(NodeConfig& cfg) {
  if (const char* bind = std::getenv("SP2P_BIND"); bind && *bind) {
    cfg.endpoint = bind;
  }
  if (const char* sandbox = std::getenv("SP2P_SANDBOX"); sandbox && *sandbox) {
    cfg.sandbox = sandbox;
  }
}

Result<SimConfig, std::string> parse_sim_config(std::string_view text) {
  SimConfig cfg;

  auto r = each_kv(text, [&](int line, std::string_view key,
                             std::string_view value) -> std::string {
    std::uint64_t u = 0;
    if (key == "seed") {
      if (!parse_u64(value, u)) return line_err(line, "seed must be integer");
      cfg.seed = u;
    } else if (key == "latency") {
      std::size_t dots = value.find("..");
      if (dots == std::string_view::npos) {
        if (!parse_u64(value, u) || u == 0) {
          return line_err(line, "latency must be N or MIN..MAX (ticks >= 1)");
        }
        cfg.latency_min = cfg.latency_max = u;
      } else {
        std::uint64_t lo = 0, hi = 0;
        if (!parse_u64(trim(value.substr(0, dots)), lo) ||
            !parse_u64(trim(value.substr(dots + 2)), hi) || lo == 0 ||
            hi < lo) {
          return line_err(line, "latency must be N or MIN..MAX (ticks >= 1)");
        }
        cfg.latency_min = lo;
        cfg.latency_max = hi;
      }
    } else if (key == "loss") {
      double d = 0;
      if (!parse_double(value, d) || d < 0.0 || d >= 1.0) {
        return line_err(line, "loss must be in [0, 1)");
      }
      cfg.loss = d;
    } else if (key == "n_tuple") {
      std::string e = set_u64_field(line, key, value, 1, 8, u);
      if (!e.empty()) return e;
      cfg.n_tuple = u;
    } else if (key == "cache_policy") {
      auto p = cache_policy_from(value);
      if (!p) return line_err(line, "cache_policy must be lru or mind");
      cfg.cache_policy = *p;
    } else if (key == "cache_capacity") {
      std::string e = set_u64_field(line, key, value, 0, 65536, u);
      if (!e.empty()) return e;
      cfg.cache_capacity = u;
    } else if (key == "ttl") {
      std::string e = set_u64_field(line, key, value, 0, kMaxTtl, u);
      if (!e.empty()) return e;
      cfg.ttl = static_cast<std::uint8_t>(u);
    } else if (key == "query_deadline_ms") {
      std::string e = set_u64_field(line, key, value, 1, 3600000, u);
      if (!e.empty()) return e;
      cfg.query_deadline = u;
    } else if (key == "node") {
      auto f = fields(value);
      if (f.size() < 2 || f.size() > 3) {
        return line_err(line, "node needs '<id> <domain> [sandbox]'");
      }
      SimNodeSpec spec;
      if (!parse_u64(f[0], spec.id) || spec.id == 0) {
        return line_err(line, "node id must be a positive integer");
      }
      auto d = DomainPath::parse(f[1]);
      if (!d) return line_err(line, std::string("node domain: ") +
                                        to_string(d.error()));
      spec.domain = std::move(d).value();
      if (f.size() == 3) spec.sandbox = std::string(f[2]);
      cfg.nodes.push_back(std::move(spec));
    } else if (key == "doc") {
      auto f = fields(value);
      if (f.size() < 3) {
        return line_err(line, "doc needs '<node_id> <path> <text>'");
      }
      std::uint64_t id = 0;
      if (!parse_u64(f[0], id)) {
        return line_err(line, "doc node id must be an integer");
      }
      SimNodeSpec* spec = nullptr;
      for (auto& s : cfg.nodes) {
        if (s.id == id) spec = &s;
      }
      if (!spec) return line_err(line, "doc references unknown node");
      // The text is everything after the path field. Searches start past
      // the preceding field so a repeated token cannot derail the split.
      std::size_t path_at = value.find(f[1], f[0].size());
      std::size_t text_at = value.find(f[2], path_at + f[1].size());
      spec->docs[std::string(f[1])] = std::string(value.substr(text_at));
    } else if (key == "query") {
      auto f = fields(value);
      if (f.size() < 2) {
        return line_err(line, "query needs '<origin> <keywords>@<domain>'");
      }
      SimConfig::Action a;
      a.kind = SimConfig::Action::Kind::Query;
      if (!parse_u64(f[0], a.origin)) {
        return line_err(line, "query origin must be an integer");
      }
      std::size_t rest = value.find(f[1], f[0].size());
      a.arg = std::string(value.substr(rest));
      cfg.script.push_back(std::move(a));
    } else if (key == "kill") {
      SimConfig::Action a;
      a.kind = SimConfig::Action::Kind::Kill;
      if (!parse_u64(trim(value), a.origin)) {
        return line_err(line, "kill needs a node id");
      }
      cfg.script.push_back(std::move(a));
    } else if (key == "fetch" || key == "list") {
      auto f = fields(value);
      if (f.size() != 3) {
        return line_err(line, std::string(key) +
                                  " needs '<origin> <server> <path>'");
      }
      SimConfig::Action a;
      a.kind = key == "fetch" ? SimConfig::Action::Kind::Fetch
                              : SimConfig::Action::Kind::List;
      if (!parse_u64(f[0], a.origin) || !parse_u64(f[1], a.peer)) {
        return line_err(line, "origin and server must be integers");
      }
      a.arg = std::string(f[2]);
      cfg.script.push_back(std::move(a));
    } else {
      return line_err(line, "unknown key '" + std::string(key) + "'");
    }
    return {};
  });
  if (!r) return r.error();

  if (cfg.nodes.empty()) return std::string("at least one node is required");
  return cfg;
}

}  // namespace sp2p
