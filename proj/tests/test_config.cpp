// Configuration parsing: node files, scenario files, environment overrides
// and the text reader. Error paths must name the offending line.

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "sp2p/config.hpp"

using namespace sp2p;
namespace fs = std::filesystem;

TEST_CASE("node config parses every key") {
  const char* text =
      "# demo node\n"
      "node_id = 42\n"
      "bind = 127.0.0.1:7042\n"
      "domain = all.Education.CS\n"
      "bootstrap = 127.0.0.1:7001\n"
      "sandbox = /srv/share\n"
      "index_cache = /var/cache/sp2p.idx\n"
      "n_tuple = 3\n"
      "cache_policy = mind\n"
      "cache_capacity = 64\n"
      "ttl = 24\n"
      "per_node_k = 5\n"
      "query_deadline_ms = 1500\n"
      "join_timeout_ms = 800\n"
      "join_attempts = 6\n"
      "probe_timeout_ms = 250\n"
      "probe_attempts = 2\n"
      "list_timeout_ms = 300\n"
      "chunk_timeout_ms = 400\n"
      "chunk_retries = 9\n"
      "fetch_window = 4\n";
  auto r = parse_node_config(text);
  REQUIRE_MESSAGE(r.is_ok(), (r.is_err() ? r.error() : std::string()));
  const NodeConfig& c = r.value();
  CHECK(c.node_id == 42);
  CHECK(c.endpoint == "127.0.0.1:7042");
  CHECK(c.domain.str() == "all.education.cs");  // labels fold to lower case
  CHECK(c.bootstrap == "127.0.0.1:7001");
  CHECK(c.sandbox == "/srv/share");
  CHECK(c.index_cache == "/var/cache/sp2p.idx");
  CHECK(c.n_tuple == 3);
  CHECK(c.cache_policy == CachePolicy::MinD);
  CHECK(c.cache_capacity == 64);
  CHECK(c.ttl == 24);
  CHECK(c.per_node_k == 5);
  CHECK(c.query_deadline == 1500);
  CHECK(c.join_timeout == 800);
  CHECK(c.join_attempts == 6);
  CHECK(c.probe_timeout == 250);
  CHECK(c.probe_attempts == 2);
  CHECK(c.list_timeout == 300);
  CHECK(c.chunk_timeout == 400);
  CHECK(c.chunk_retries == 9);
  CHECK(c.fetch_window == 4);
}

TEST_CASE("node config defaults kick in for omitted keys") {
  auto r = parse_node_config(
      "node_id = 1\nbind = 0.0.0.0:7000\ndomain = all\n");
  REQUIRE(r.is_ok());
  const NodeConfig& c = r.value();
  CHECK(c.bootstrap.empty());
  CHECK(c.sandbox.empty());
  CHECK(c.index_cache.empty());
  CHECK(c.n_tuple == 2);
  CHECK(c.cache_policy == CachePolicy::Lru);
  CHECK(c.cache_capacity == 32);
  CHECK(c.ttl == 16);
  CHECK(c.per_node_k == 10);
  CHECK(c.query_deadline == 2000);
  CHECK(c.join_timeout == 1000);
  CHECK(c.join_attempts == 4);
  CHECK(c.probe_timeout == 500);
  CHECK(c.probe_attempts == 3);
  CHECK(c.list_timeout == 500);
  CHECK(c.chunk_timeout == 500);
  CHECK(c.chunk_retries == 16);
  CHECK(c.fetch_window == 8);
}

TEST_CASE("node config whitespace, comments and '=' in values") {
  auto r = parse_node_config(
      "\n"
      "  # indented comment\r\n"
      "\tnode_id\t=\t7\r\n"
      "bind=[::1]:9000\n"
      "   domain   =   all.music   \n"
      "sandbox = /tmp/odd=name\n");
  REQUIRE_MESSAGE(r.is_ok(), (r.is_err() ? r.error() : std::string()));
  CHECK(r.value().node_id == 7);
  CHECK(r.value().endpoint == "[::1]:9000");
  CHECK(r.value().domain.str() == "all.music");
  // Only the first '=' splits; the rest belongs to the value.
  CHECK(r.value().sandbox == "/tmp/odd=name");
}

TEST_CASE("node config rejects missing required keys") {
  auto no_id = parse_node_config("bind = a:1\ndomain = all\n");
  REQUIRE(no_id.is_err());
  CHECK(no_id.error() == "node_id is required");

  auto no_bind = parse_node_config("node_id = 1\ndomain = all\n");
  REQUIRE(no_bind.is_err());
  CHECK(no_bind.error() == "bind is required");

  auto no_domain = parse_node_config("node_id = 1\nbind = a:1\n");
  REQUIRE(no_domain.is_err());
  CHECK(no_domain.error() == "domain is required");
}

TEST_CASE("node config errors carry the line number") {
  struct Case {
    const char* text;
    const char* needle;
  };
  const Case cases[] = {
      {"node_id = 1\nbind = a:1\ncolor = red\n", "line 3: unknown key"},
      {"node_id = zero\n", "line 1: node_id"},
      {"node_id = 0\n", "line 1: node_id"},
      {"node_id = 99999999999999999999999\n", "line 1: node_id"},
      {"# c\n\nnot a pair\n", "line 3: expected 'key = value'"},
      {"= 5\n", "line 1: empty key"},
      {"bind =\n", "line 1: bind"},
      {"domain = education.cs\n", "line 1: domain"},
      {"n_tuple = 0\n", "line 1: n_tuple"},
      {"n_tuple = 9\n", "line 1: n_tuple"},
      {"cache_policy = fifo\n", "line 1: cache_policy"},
      {"cache_capacity = 65537\n", "line 1: cache_capacity"},
      {"ttl = 65\n", "line 1: ttl"},
      {"per_node_k = 0\n", "line 1: per_node_k"},
      {"per_node_k = 129\n", "line 1: per_node_k"},
      {"query_deadline_ms = 0\n", "line 1: query_deadline_ms"},
      {"join_attempts = 101\n", "line 1: join_attempts"},
      {"fetch_window = 0\n", "line 1: fetch_window"},
      {"fetch_window = 65\n", "line 1: fetch_window"},
      {"chunk_retries = 1001\n", "line 1: chunk_retries"},
  };
  for (const auto& c : cases) {
    CAPTURE(c.text);
    auto r = parse_node_config(c.text);
    REQUIRE(r.is_err());
    CHECK_MESSAGE(r.error().find(c.needle) != std::string::npos,
                  "got: " << r.error());
  }
}

TEST_CASE("environment variables override bind and sandbox") {
  auto parse = [] {
    auto r = parse_node_config(
        "node_id = 1\nbind = 1.2.3.4:5\ndomain = all\nsandbox = /orig\n");
    REQUIRE(r.is_ok());
    return r.value();
  };

  ::unsetenv("SP2P_BIND");
  ::unsetenv("SP2P_SANDBOX");
  NodeConfig untouched = parse();
  apply_env_overrides(untouched);
  CHECK(untouched.endpoint == "1.2.3.4:5");
  CHECK(untouched.sandbox == "/orig");

  ::setenv("SP2P_BIND", "9.9.9.9:99", 1);
  ::setenv("SP2P_SANDBOX", "/elsewhere", 1);
  NodeConfig overridden = parse();
  apply_env_overrides(overridden);
  CHECK(overridden.endpoint == "9.9.9.9:99");
  CHECK(overridden.sandbox == "/elsewhere");

  // Empty strings do not count as overrides.
  ::setenv("SP2P_BIND", "", 1);
  ::setenv("SP2P_SANDBOX", "", 1);
  NodeConfig empty_env = parse();
  apply_env_overrides(empty_env);
  CHECK(empty_env.endpoint == "1.2.3.4:5");
  CHECK(empty_env.sandbox == "/orig");

  ::unsetenv("SP2P_BIND");
  ::unsetenv("SP2P_SANDBOX");
}

TEST_CASE("sim config parses a full scenario in file order") {
  const char* text =
      "seed = 77\n"
      "latency = 2..6\n"
      "loss = 0.125\n"
      "n_tuple = 1\n"
      "cache_policy = mind\n"
      "cache_capacity = 8\n"
      "ttl = 12\n"
      "query_deadline_ms = 900\n"
      "node = 1 all\n"
      "node = 2 all.education.cs /srv/corpus\n"
      "node = 3 all.commerce\n"
      "doc = 2 p2p.txt peer to peer file sharing\n"
      "doc = 3 shop.txt checkout flows\n"
      "doc = 2 os.txt operating systems\n"
      "query = 3 operating systems@all.education.cs\n"
      "kill = 2\n"
      "fetch = 3 1 docs/readme.txt\n"
      "list = 1 2 docs\n";
  auto r = parse_sim_config(text);
  REQUIRE_MESSAGE(r.is_ok(), (r.is_err() ? r.error() : std::string()));
  const SimConfig& c = r.value();
  CHECK(c.seed == 77);
  CHECK(c.latency_min == 2);
  CHECK(c.latency_max == 6);
  CHECK(c.loss == doctest::Approx(0.125));
  CHECK(c.n_tuple == 1);
  CHECK(c.cache_policy == CachePolicy::MinD);
  CHECK(c.cache_capacity == 8);
  CHECK(c.ttl == 12);
  CHECK(c.query_deadline == 900);

  REQUIRE(c.nodes.size() == 3);
  CHECK(c.nodes[0].id == 1);
  CHECK(c.nodes[0].domain.str() == "all");
  CHECK(c.nodes[0].sandbox.empty());
  CHECK(c.nodes[1].id == 2);
  CHECK(c.nodes[1].domain.str() == "all.education.cs");
  CHECK(c.nodes[1].sandbox == "/srv/corpus");
  CHECK(c.nodes[1].docs.size() == 2);
  CHECK(c.nodes[1].docs.at("p2p.txt") == "peer to peer file sharing");
  CHECK(c.nodes[1].docs.at("os.txt") == "operating systems");
  CHECK(c.nodes[2].docs.at("shop.txt") == "checkout flows");

  REQUIRE(c.script.size() == 4);
  CHECK(c.script[0].kind == SimConfig::Action::Kind::Query);
  CHECK(c.script[0].origin == 3);
  CHECK(c.script[0].arg == "operating systems@all.education.cs");
  CHECK(c.script[1].kind == SimConfig::Action::Kind::Kill);
  CHECK(c.script[1].origin == 2);
  CHECK(c.script[2].kind == SimConfig::Action::Kind::Fetch);
  CHECK(c.script[2].origin == 3);
  CHECK(c.script[2].peer == 1);
  CHECK(c.script[2].arg == "docs/readme.txt");
  CHECK(c.script[3].kind == SimConfig::Action::Kind::List);
  CHECK(c.script[3].origin == 1);
  CHECK(c.script[3].peer == 2);
  CHECK(c.script[3].arg == "docs");
}

TEST_CASE("sim config defaults") {
  auto r = parse_sim_config("node = 1 all\n");
  REQUIRE(r.is_ok());
  const SimConfig& c = r.value();
  CHECK(c.seed == 1);
  CHECK(c.latency_min == 1);
  CHECK(c.latency_max == 1);
  CHECK(c.loss == 0.0);
  CHECK(c.n_tuple == 2);
  CHECK(c.cache_policy == CachePolicy::Lru);
  CHECK(c.cache_capacity == 32);
  CHECK(c.ttl == 16);
  CHECK(c.query_deadline == 2000);
  CHECK(c.script.empty());
}

TEST_CASE("sim doc text survives a token that repeats the path") {
  auto r = parse_sim_config("node = 1 all\ndoc = 1 a.txt a.txt again\n");
  REQUIRE(r.is_ok());
  CHECK(r.value().nodes[0].docs.at("a.txt") == "a.txt again");

  auto single = parse_sim_config("node = 1 all\ndoc = 1 a.txt a.txt\n");
  REQUIRE(single.is_ok());
  CHECK(single.value().nodes[0].docs.at("a.txt") == "a.txt");
}

TEST_CASE("sim config rejects malformed lines with their number") {
  struct Case {
    const char* text;
    const char* needle;
  };
  const Case cases[] = {
      {"latency = 0\nnode = 1 all\n", "line 1: latency"},
      {"latency = 5..2\nnode = 1 all\n", "line 1: latency"},
      {"latency = a..b\nnode = 1 all\n", "line 1: latency"},
      {"loss = 1.0\nnode = 1 all\n", "line 1: loss"},
      {"loss = -0.5\nnode = 1 all\n", "line 1: loss"},
      {"loss = often\nnode = 1 all\n", "line 1: loss"},
      {"node = 1\n", "line 1: node needs"},
      {"node = 1 all extra words\n", "line 1: node needs"},
      {"node = 0 all\n", "line 1: node id"},
      {"node = 1 cs.all\n", "line 1: node domain"},
      {"node = 1 all\ndoc = 9 x.txt hello\n", "line 2: doc references"},
      {"node = 1 all\ndoc = 1 x.txt\n", "line 2: doc needs"},
      {"node = 1 all\nquery = 1\n", "line 2: query needs"},
      {"node = 1 all\nkill = soon\n", "line 2: kill"},
      {"node = 1 all\nfetch = 1 2\n", "line 2: fetch needs"},
      {"node = 1 all\nlist = 1 2 a b\n", "line 2: list needs"},
      {"node = 1 all\nspeed = 9\n", "line 2: unknown key"},
  };
  for (const auto& c : cases) {
    CAPTURE(c.text);
    auto r = parse_sim_config(c.text);
    REQUIRE(r.is_err());
    CHECK_MESSAGE(r.error().find(c.needle) != std::string::npos,
                  "got: " << r.error());
  }

  auto empty = parse_sim_config("seed = 3\n");
  REQUIRE(empty.is_err());
  CHECK(empty.error() == "at least one node is required");
}

TEST_CASE("read_text_file returns contents or a named failure") {
  fs::path p = fs::temp_directory_path() /
               ("sp2p_cfg_" + std::to_string(::getpid()) + ".txt");
  {
    std::ofstream f(p, std::ios::binary);
    f << "line one\nline two\n";
  }
  auto ok = read_text_file(p.string());
  REQUIRE(ok.is_ok());
  CHECK(ok.value() == "line one\nline two\n");
  fs::remove(p);

  auto missing = read_text_file((p / "nope").string());
  REQUIRE(missing.is_err());
  CHECK(missing.error().find("cannot open") != std::string::npos);
}
