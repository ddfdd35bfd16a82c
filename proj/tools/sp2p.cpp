// sp2p: command line front end. Subcommands: start (run a daemon), query,
// ls, fetch (one-shot clients), reindex (local), sim (deterministic
// simulation of a scenario file).

#include <csignal>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "sp2p/config.hpp"
#include "sp2p/daemon.hpp"
#include "sp2p/digest.hpp"
#include "sp2p/simnet.hpp"

using nlohmann::json;
using namespace sp2p;

namespace {

// Exit codes, also documented in the README:
//   0 ok, 2 usage, 3 bad config/scenario, 4 network (bind/join/no route),
//   5 remote path not found or refused, 6 timed out, 7 data error.
constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kBadConfig = 3;
constexpr int kNetwork = 4;
constexpr int kNotFound = 5;
constexpr int kTimeout = 6;
constexpr int kDataError = 7;

int map_file_error(FileError e) {
  switch (e) {
    case FileError::NotFound:
    case FileError::OutsideSandbox:
    case FileError::Unsupported:
      return kNotFound;
    case FileError::Timeout:
    case FileError::TooManyRetries:
      return kTimeout;
    default:
      return kDataError;
  }
}

Daemon* g_daemon = nullptr;

void handle_signal(int) {
  if (g_daemon) g_daemon->stop();
}

Result<NodeConfig, std::string> load_node_config(const std::string& path) {
  auto text = read_text_file(path);
  if (!text) return text.error();
  auto cfg = parse_node_config(text.value());
  if (!cfg) return cfg.error();
  NodeConfig c = std::move(cfg).value();
  apply_env_overrides(c);
  return c;
}

// Client-side node for one-shot operations: ephemeral identity, loopback
// socket, no join.
Result<std::unique_ptr<Daemon>, std::string> make_client() {
  NodeConfig cfg;
  cfg.node_id = ephemeral_node_id();
  cfg.endpoint = "127.0.0.1:0";
  return Daemon::create(std::move(cfg));
}

std::string format_score(std::int64_t micros) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%lld.%06lld",
                static_cast<long long>(micros / 1000000),
                static_cast<long long>(micros % 1000000));
  return buf;
}

json hits_to_json(const std::vector<QueryHit>& hits) {
  json arr = json::array();
  for (const auto& h : hits) {
    arr.push_back({{"responder", h.responder.node},
                   {"endpoint", h.responder.endpoint},
                   {"path", h.rel_path},
                   {"score", h.score_micros / 1e6},
                   {"score_micros", h.score_micros},
                   {"size", h.size},
                   {"snippet", h.snippet}});
  }
  return arr;
}

int cmd_start(const std::string& config_path, bool verbose) {
  auto cfg = load_node_config(config_path);
  if (!cfg) {
    std::cerr << "config error: " << cfg.error() << "\n";
    return kBadConfig;
  }
  auto daemon = Daemon::create(std::move(cfg).value());
  if (!daemon) {
    std::cerr << "startup error: " << daemon.error() << "\n";
    return kNetwork;
  }
  Daemon& d = *daemon.value();
  d.verbose = verbose;
  g_daemon = &d;
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);

  const NodeConfig& nc = d.node().config();
  std::cout << "node " << nc.node_id << " domain " << nc.domain.str()
            << " listening on " << nc.endpoint << " ("
            << d.node().store().index->doc_count() << " documents)\n"
            << std::flush;
  if (!d.join()) {
    std::cerr << "join via " << nc.bootstrap << " failed\n";
    return kNetwork;
  }
  if (!nc.bootstrap.empty()) {
    std::cout << "joined overlay via " << nc.bootstrap << "\n" << std::flush;
  }
  d.run();
  std::cout << "shutting down\n";
  return kOk;
}

int cmd_query(const std::string& config_path, const std::string& to,
              const std::string& input, bool and_mode, std::uint64_t timeout_ms,
              int expect, int k, bool as_json) {
  std::string relay = to;
  if (relay.empty()) {
    if (config_path.empty()) {
      std::cerr << "need --to ENDPOINT or --config with a bootstrap/bind\n";
      return kUsage;
    }
    auto cfg = load_node_config(config_path);
    if (!cfg) {
      std::cerr << "config error: " << cfg.error() << "\n";
      return kBadConfig;
    }
    relay = cfg.value().bootstrap.empty() ? cfg.value().endpoint
                                          : cfg.value().bootstrap;
  }

  auto parsed = parse_query(input);
  if (!parsed) {
    std::cerr << "bad query: " << to_string(parsed.error()) << "\n";
    return kUsage;
  }
  Query q = std::move(parsed).value();
  q.mode = and_mode ? SearchMode::And : SearchMode::Or;
  if (k > 0) q.per_node_k = static_cast<std::uint16_t>(k);

  auto client = make_client();
  if (!client) {
    std::cerr << "socket error: " << client.error() << "\n";
    return kNetwork;
  }
  Daemon& d = *client.value();
  NodeConfig& cfg = const_cast<NodeConfig&>(d.node().config());
  cfg.query_deadline = timeout_ms;

  bool done = false;
  QueryOutcome outcome;
  d.node().run_query_via(
      NodeAddr{0, relay}, q,
      [&](QueryOutcome o) {
        outcome = std::move(o);
        done = true;
      },
      expect > 0 ? std::optional<std::size_t>(expect) : std::nullopt);
  d.run_until([&] { return done; }, timeout_ms + 1000);

  if (as_json) {
    json out = {{"query", input},
                {"mode", and_mode ? "and" : "or"},
                {"responders", outcome.responders},
                {"dead_end", outcome.dead_end},
                {"complete", outcome.complete},
                {"duration_ms", outcome.duration},
                {"hits", hits_to_json(outcome.hits)}};
    std::cout << out.dump(2) << "\n";
  } else {
    std::cout << outcome.responders << " responder(s), " << outcome.hits.size()
              << " hit(s)";
    if (outcome.dead_end) std::cout << " [some branch had no route]";
    std::cout << "\n";
    for (const auto& h : outcome.hits) {
      std::cout << "  " << format_score(h.score_micros) << "  node "
                << h.responder.node << "  " << h.rel_path << " (" << h.size
                << " bytes)\n";
      if (!h.snippet.empty()) std::cout << "      " << h.snippet << "\n";
    }
  }
  if (outcome.responders == 0 && outcome.dead_end) return kNetwork;
  return kOk;
}

int cmd_ls(const std::string& from, const std::string& rel_path,
           std::uint64_t timeout_ms, bool as_json) {
  auto client = make_client();
  if (!client) {
    std::cerr << "socket error: " << client.error() << "\n";
    return kNetwork;
  }
  Daemon& d = *client.value();

  bool done = false;
  Result<std::vector<WireDirEntry>, FileError> result(FileError::Timeout);
  d.node().start_list(NodeAddr{0, from}, rel_path,
                      [&](Result<std::vector<WireDirEntry>, FileError> r) {
                        result = std::move(r);
                        done = true;
                      });
  d.run_until([&] { return done; }, timeout_ms);
  if (!done) {
    std::cerr << "timed out waiting for " << from << "\n";
    return kTimeout;
  }
  if (!result) {
    std::cerr << "ls failed: " << to_string(result.error()) << "\n";
    return map_file_error(result.error());
  }
  if (as_json) {
    json arr = json::array();
    for (const auto& e : result.value()) {
      arr.push_back({{"name", e.name},
                     {"kind", e.kind == 1 ? "dir" : "file"},
                     {"size", e.size}});
    }
    std::cout << json{{"path", rel_path}, {"entries", arr}}.dump(2) << "\n";
  } else {
    for (const auto& e : result.value()) {
      if (e.kind == 1) {
        std::cout << e.name << "/\n";
      } else {
        std::cout << e.name << " (" << e.size << " bytes)\n";
      }
    }
  }
  return kOk;
}

int cmd_fetch(const std::string& from, const std::string& rel_path,
              const std::string& out_path, std::uint64_t timeout_ms,
              bool as_json) {
  auto client = make_client();
  if (!client) {
    std::cerr << "socket error: " << client.error() << "\n";
    return kNetwork;
  }
  Daemon& d = *client.value();

  bool done = false;
  Result<std::vector<std::uint8_t>, FileError> result(FileError::Timeout);
  d.node().start_fetch(NodeAddr{0, from}, rel_path,
                       [&](Result<std::vector<std::uint8_t>, FileError> r) {
                         result = std::move(r);
                         done = true;
                       });
  d.run_until([&] { return done; }, timeout_ms);
  if (!done) {
    std::cerr << "timed out fetching from " << from << "\n";
    return kTimeout;
  }
  if (!result) {
    std::cerr << "fetch failed: " << to_string(result.error()) << "\n";
    return map_file_error(result.error());
  }
  const auto& bytes = result.value();

  std::string digest = hex(sha256(bytes));
  if (!out_path.empty() && out_path != "-") {
    std::ofstream f(out_path, std::ios::binary | std::ios::trunc);
    if (!f) {
      std::cerr << "cannot write " << out_path << "\n";
      return kDataError;
    }
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f.good()) {
      std::cerr << "short write to " << out_path << "\n";
      return kDataError;
    }
  }
  if (as_json) {
    std::cout << json{{"path", rel_path},
                      {"bytes", bytes.size()},
                      {"sha256", digest},
                      {"saved_to", out_path}}
                     .dump(2)
              << "\n";
  } else if (out_path.empty() || out_path == "-") {
    std::cout.write(reinterpret_cast<const char*>(bytes.data()),
                    static_cast<std::streamsize>(bytes.size()));
  } else {
    std::cout << bytes.size() << " bytes -> " << out_path << " (sha256 "
              << digest << ")\n";
  }
  return kOk;
}

int cmd_reindex(const std::string& config_path, bool as_json) {
  auto cfg = load_node_config(config_path);
  if (!cfg) {
    std::cerr << "config error: " << cfg.error() << "\n";
    return kBadConfig;
  }
  const NodeConfig& c = cfg.value();
  if (c.sandbox.empty()) {
    std::cerr << "no sandbox configured\n";
    return kBadConfig;
  }
  auto root = SandboxRoot::open(c.sandbox);
  if (!root) {
    std::cerr << root.error() << "\n";
    return kBadConfig;
  }
  auto reg = ExtractorRegistry::builtin();
  std::vector<std::string> skipped;
  auto idx = build_index(root.value(), reg, &skipped);
  if (!idx) {
    std::cerr << "index error: " << idx.error() << "\n";
    return kDataError;
  }
  if (!c.index_cache.empty()) {
    if (auto saved = idx.value().save(c.index_cache); !saved) {
      std::cerr << "cannot save index: " << saved.error() << "\n";
      return kDataError;
    }
  }
  if (as_json) {
    std::cout << json{{"documents", idx.value().doc_count()},
                      {"terms", idx.value().term_count()},
                      {"skipped", skipped.size()},
                      {"cache", c.index_cache}}
                     .dump(2)
              << "\n";
  } else {
    std::cout << "indexed " << idx.value().doc_count() << " document(s), "
              << idx.value().term_count() << " term(s); skipped "
              << skipped.size() << "\n";
    if (!c.index_cache.empty()) {
      std::cout << "index image written to " << c.index_cache << "\n";
    }
  }
  return kOk;
}

int cmd_sim(const std::string& config_path, const std::string& trace_path,
            bool as_json) {
  auto text = read_text_file(config_path);
  if (!text) {
    std::cerr << text.error() << "\n";
    return kBadConfig;
  }
  auto cfg = parse_sim_config(text.value());
  if (!cfg) {
    std::cerr << "scenario error: " << cfg.error() << "\n";
    return kBadConfig;
  }

  SimNet net(std::move(cfg).value());
  if (auto built = net.build(); !built) {
    std::cerr << "build error: " << built.error() << "\n";
    return kDataError;
  }

  json results = json::array();
  auto run_one = [&](const SimConfig::Action& a) -> bool {
    switch (a.kind) {
      case SimConfig::Action::Kind::Query: {
        auto q = parse_query(a.arg);
        if (!q) {
          std::cerr << "bad scripted query '" << a.arg
                    << "': " << to_string(q.error()) << "\n";
          return false;
        }
        auto id = net.inject_query(a.origin, q.value());
        net.run_until_quiescent();
        const QueryOutcome* out = net.query_outcome(id);
        if (!out) return false;
        if (as_json) {
          results.push_back({{"action", "query"},
                             {"origin", a.origin},
                             {"input", a.arg},
                             {"responders", out->responders},
                             {"dead_end", out->dead_end},
                             {"hits", hits_to_json(out->hits)}});
        } else {
          std::cout << "query node " << a.origin << " \"" << a.arg << "\": "
                    << out->responders << " responder(s), " << out->hits.size()
                    << " hit(s)\n";
          for (const auto& h : out->hits) {
            std::cout << "  " << format_score(h.score_micros) << "  node "
                      << h.responder.node << "  " << h.rel_path << "\n";
          }
        }
        return true;
      }
      case SimConfig::Action::Kind::Kill:
        net.kill_node(a.origin);
        net.run_until_quiescent();
        if (as_json) {
          results.push_back({{"action", "kill"}, {"node", a.origin}});
        } else {
          std::cout << "kill node " << a.origin << "\n";
        }
        return true;
      case SimConfig::Action::Kind::Fetch: {
        auto id = net.inject_fetch(a.origin, a.peer, a.arg);
        net.run_until_quiescent();
        const auto* r = net.fetch_result(id);
        if (!r) return false;
        if (as_json) {
          json j = {{"action", "fetch"},
                    {"origin", a.origin},
                    {"server", a.peer},
                    {"path", a.arg},
                    {"ok", r->is_ok()}};
          if (r->is_ok()) {
            j["bytes"] = r->value().size();
            j["sha256"] = hex(sha256(r->value()));
          } else {
            j["error"] = to_string(r->error());
          }
          results.push_back(std::move(j));
        } else if (r->is_ok()) {
          std::cout << "fetch node " << a.origin << " <- node " << a.peer
                    << " " << a.arg << ": " << r->value().size()
                    << " bytes, sha256 " << hex(sha256(r->value())) << "\n";
        } else {
          std::cout << "fetch node " << a.origin << " <- node " << a.peer
                    << " " << a.arg << ": " << to_string(r->error()) << "\n";
        }
        return true;
      }
      case SimConfig::Action::Kind::List: {
        auto id = net.inject_list(a.origin, a.peer, a.arg);
        net.run_until_quiescent();
        const auto* r = net.list_result(id);
        if (!r) return false;
        if (as_json) {
          json j = {{"action", "list"},
                    {"origin", a.origin},
                    {"server", a.peer},
                    {"path", a.arg},
                    {"ok", r->is_ok()}};
          if (r->is_ok()) {
            json arr = json::array();
            for (const auto& e : r->value()) {
              arr.push_back({{"name", e.name},
                             {"kind", e.kind == 1 ? "dir" : "file"},
                             {"size", e.size}});
            }
            j["entries"] = std::move(arr);
          } else {
            j["error"] = to_string(r->error());
          }
          results.push_back(std::move(j));
        } else if (r->is_ok()) {
          std::cout << "list node " << a.origin << " <- node " << a.peer
                    << " " << a.arg << ": " << r->value().size()
                    << " entries\n";
        } else {
          std::cout << "list node " << a.origin << " <- node " << a.peer
                    << " " << a.arg << ": " << to_string(r->error()) << "\n";
        }
        return true;
      }
    }
    return false;
  };

  for (const auto& a : net.config().script) {
    if (!run_one(a)) return kDataError;
  }
  net.run_until_quiescent();

  if (!trace_path.empty()) {
    std::ofstream f(trace_path, std::ios::binary | std::ios::trunc);
    if (!f) {
      std::cerr << "cannot write trace to " << trace_path << "\n";
      return kDataError;
    }
    f << net.trace_text();
  }
  if (as_json) {
    std::cout << json{{"ticks", net.now()},
                      {"events", net.trace().size()},
                      {"results", results}}
                     .dump(2)
              << "\n";
  } else {
    std::cout << "simulation finished at tick " << net.now() << " with "
              << net.trace().size() << " trace events\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semantic peer-to-peer search over a domain tree"};
  app.require_subcommand(1);

  std::string config_path, to_endpoint, from_endpoint, out_path, trace_path;
  std::string input, rel_path;
  bool and_mode = false, as_json = false, verbose = false;
  std::uint64_t timeout_ms = 2000;
  int expect = 0, k = 0;

  auto* start = app.add_subcommand("start", "run a node daemon");
  start->add_option("--config", config_path, "node config file")->required();
  start->add_flag("--verbose", verbose, "log traffic to stderr");

  auto* join = app.add_subcommand("join", "alias of start");
  join->add_option("--config", config_path, "node config file")->required();
  join->add_flag("--verbose", verbose, "log traffic to stderr");

  auto* query = app.add_subcommand("query", "run a keywords@domain query");
  query->add_option("input", input, "\"<keywords>@<domain>\"")->required();
  query->add_option("--config", config_path, "node config file");
  query->add_option("--to", to_endpoint, "daemon endpoint to query through");
  query->add_flag("--and", and_mode, "require all keywords");
  query->add_option("--timeout-ms", timeout_ms, "collection window");
  query->add_option("--expect", expect, "close after N responders");
  query->add_option("--k", k, "results per responder");
  query->add_flag("--json", as_json, "JSON output");

  auto* ls = app.add_subcommand("ls", "list a served directory");
  ls->add_option("path", rel_path, "relative path (default: root)");
  ls->add_option("--from", from_endpoint, "serving daemon endpoint")
      ->required();
  ls->add_option("--timeout-ms", timeout_ms, "overall timeout");
  ls->add_flag("--json", as_json, "JSON output");

  auto* fetch = app.add_subcommand("fetch", "fetch a served file");
  fetch->add_option("path", rel_path, "relative path")->required();
  fetch->add_option("--from", from_endpoint, "serving daemon endpoint")
      ->required();
  fetch->add_option("--out", out_path, "output file ('-' for stdout)");
  fetch->add_option("--timeout-ms", timeout_ms, "overall timeout")
      ->default_val(30000);
  fetch->add_flag("--json", as_json, "JSON output");

  auto* reindex = app.add_subcommand("reindex", "rebuild the local index");
  reindex->add_option("--config", config_path, "node config file")->required();
  reindex->add_flag("--json", as_json, "JSON output");

  auto* sim = app.add_subcommand("sim", "run a deterministic simulation");
  sim->add_option("--config", config_path, "scenario file")->required();
  sim->add_option("--trace", trace_path, "write the event trace here");
  sim->add_flag("--json", as_json, "JSON output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return kUsage;
  }

  if (start->parsed() || join->parsed()) return cmd_start(config_path, verbose);
  if (query->parsed()) {
    return cmd_query(config_path, to_endpoint, input, and_mode, timeout_ms,
                     expect, k, as_json);
  }
  if (ls->parsed()) return cmd_ls(from_endpoint, rel_path, timeout_ms, as_json);
  if (fetch->parsed()) {
    return cmd_fetch(from_endpoint, rel_path, out_path, timeout_ms, as_json);
  }
  if (reindex->parsed()) return cmd_reindex(config_path, as_json);
  if (sim->parsed()) return cmd_sim(config_path, trace_path, as_json);
  return kUsage;
}
