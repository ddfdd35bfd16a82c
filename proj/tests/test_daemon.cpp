// Real-socket coverage: UDP transport basics, daemons joining over
// loopback, queries and file transfer between processes' worth of state in
// one test binary. Each daemon is single threaded, so the test pumps them
// round-robin.

#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include "doctest.h"
#include "sp2p/daemon.hpp"

using namespace sp2p;
namespace fs = std::filesystem;

namespace {

DomainPath dom(std::string_view s) {
  auto r = DomainPath::parse(s);
  REQUIRE(r.is_ok());
  return r.value();
}

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("sp2p_ud_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

void write_text(const fs::path& p, std::string_view text) {
  std::ofstream f(p, std::ios::binary);
  REQUIRE(f.good());
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  REQUIRE(f.good());
}

// Runs one pump step (at most ~50 ms of socket wait) on each daemon in turn
// until done() holds or the deadline passes.
bool pump_until(std::initializer_list<Daemon*> ds,
                const std::function<bool()>& done, int max_ms = 8000) {
  auto give_up =
      std::chrono::steady_clock::now() + std::chrono::milliseconds(max_ms);
  while (std::chrono::steady_clock::now() < give_up) {
    if (done()) return true;
    for (Daemon* d : ds) {
      bool pumped = false;
      d->run_until(
          [&pumped] {
            bool stop = pumped;
            pumped = true;
            return stop;
          },
          0);
    }
  }
  return done();
}

std::unique_ptr<Daemon> make_daemon(NodeId id, std::string_view domain,
                                    std::string bootstrap,
                                    std::string sandbox = {}) {
  NodeConfig cfg;
  cfg.node_id = id;
  cfg.endpoint = "127.0.0.1:0";
  cfg.domain = dom(domain);
  cfg.bootstrap = std::move(bootstrap);
  cfg.sandbox = std::move(sandbox);
  auto d = Daemon::create(std::move(cfg));
  REQUIRE_MESSAGE(d.is_ok(), (d.is_err() ? d.error() : std::string()));
  return std::move(d).value();
}

}  // namespace

TEST_CASE("udp transport binds, reports its endpoint and moves datagrams") {
  auto t1 = UdpTransport::bind("127.0.0.1:0");
  REQUIRE(t1.is_ok());
  auto t2 = UdpTransport::bind("127.0.0.1:0");
  REQUIRE(t2.is_ok());

  std::string ep1 = t1.value()->local_endpoint();
  std::string ep2 = t2.value()->local_endpoint();
  CHECK(ep1.rfind("127.0.0.1:", 0) == 0);
  CHECK(ep1 != "127.0.0.1:0");  // port 0 resolved to a real port
  CHECK(ep1 != ep2);

  std::vector<std::uint8_t> payload{1, 2, 3, 250, 0, 7};
  REQUIRE(t1.value()->send(ep2, payload));

  std::vector<std::uint8_t> got;
  std::string from;
  REQUIRE(t2.value()->recv(got, from, 2000));
  CHECK(got == payload);
  CHECK(from == ep1);

  // Nothing else is queued; the poll deadline is honoured.
  auto before = std::chrono::steady_clock::now();
  CHECK_FALSE(t2.value()->recv(got, from, 30));
  auto waited = std::chrono::steady_clock::now() - before;
  CHECK(waited < std::chrono::seconds(2));
}

TEST_CASE("udp transport rejects malformed endpoints") {
  const char* bad[] = {"noport", "1.2.3.4", ":5", "host:", "a:66000",
                       "1.2.3.4.5:9", "300.0.0.1:9"};
  for (const char* ep : bad) {
    CAPTURE(ep);
    auto r = UdpTransport::bind(ep);
    CHECK(r.is_err());
  }

  // The wildcard host binds but advertises loopback instead of 0.0.0.0.
  auto any = UdpTransport::bind("*:0");
  REQUIRE(any.is_ok());
  CHECK(any.value()->local_endpoint().rfind("127.0.0.1:", 0) == 0);
}

TEST_CASE("daemon create reports unusable configuration") {
  NodeConfig bad_ep;
  bad_ep.node_id = 1;
  bad_ep.endpoint = "nonsense";
  bad_ep.domain = dom("all");
  auto r1 = Daemon::create(bad_ep);
  REQUIRE(r1.is_err());
  CHECK(r1.error().find("nonsense") != std::string::npos);

  NodeConfig bad_box;
  bad_box.node_id = 1;
  bad_box.endpoint = "127.0.0.1:0";
  bad_box.domain = dom("all");
  bad_box.sandbox = "/no/such/directory/exists/here";
  auto r2 = Daemon::create(bad_box);
  REQUIRE(r2.is_err());
}

TEST_CASE("daemons join over loopback and serve queries, lists and fetches") {
  TempDir box_a;
  write_text(box_a.path / "hello.txt", "alpha beta routing notes");
  TempDir box_b;
  write_text(box_b.path / "notes.txt", "gamma routing overlay diary");

  auto a = make_daemon(1, "all", "", box_a.path.string());
  a->node().start();
  REQUIRE(a->node().joined());  // no bootstrap: it starts the overlay
  std::string a_ep = a->node().config().endpoint;

  auto b = make_daemon(2, "all.cs", a_ep, box_b.path.string());
  bool b_done = false, b_ok = false;
  b->node().start([&](bool ok) {
    b_done = true;
    b_ok = ok;
  });
  REQUIRE(pump_until({a.get(), b.get()}, [&] { return b_done; }));
  REQUIRE(b_ok);
  CHECK(b->node().joined());
  CHECK(a->node().table().knows(2));
  CHECK(b->node().table().knows(1));
  std::string b_ep = b->node().config().endpoint;

  // A node-to-node query: B asks for a term only A's corpus has.
  {
    Query q;
    q.keywords = {"alpha"};
    q.target = dom("all");
    std::optional<QueryOutcome> out;
    b->node().run_query(
        q, [&](QueryOutcome o) { out = std::move(o); }, 2);
    REQUIRE(pump_until({a.get(), b.get()}, [&] { return out.has_value(); }));
    CHECK(out->complete);
    CHECK(out->responders == 2);  // B serves too, with zero hits
    REQUIRE(out->hits.size() == 1);
    CHECK(out->hits[0].responder.node == 1);
    CHECK(out->hits[0].rel_path == "hello.txt");
    CHECK(out->hits[0].snippet.find("alpha") != std::string::npos);
  }

  // A transient client hands its query to A and is never learned as a
  // route by either daemon.
  NodeId client_id = ephemeral_node_id();
  CHECK((client_id & kTransientIdBit) != 0);
  NodeConfig ccfg;
  ccfg.node_id = client_id;
  ccfg.endpoint = "127.0.0.1:0";
  ccfg.domain = dom("all");
  auto client_r = Daemon::create(std::move(ccfg));
  REQUIRE(client_r.is_ok());
  std::unique_ptr<Daemon> c = std::move(client_r).value();
  c->node().start();

  {
    Query q;
    q.keywords = {"routing"};
    q.target = dom("all");
    std::optional<QueryOutcome> out;
    c->node().run_query_via(
        NodeAddr{0, a_ep}, q, [&](QueryOutcome o) { out = std::move(o); }, 2);
    REQUIRE(pump_until({a.get(), b.get(), c.get()},
                       [&] { return out.has_value(); }));
    CHECK(out->complete);
    CHECK(out->responders == 2);
    REQUIRE(out->hits.size() == 2);
    CHECK(out->hits[0].responder.node != out->hits[1].responder.node);
    for (const auto& h : out->hits) {
      CHECK((h.rel_path == "hello.txt" || h.rel_path == "notes.txt"));
    }
    CHECK_FALSE(a->node().table().knows(client_id));
    CHECK_FALSE(b->node().table().knows(client_id));
  }

  // Remote listing and a verified fetch from B.
  {
    std::optional<Result<std::vector<WireDirEntry>, FileError>> listed;
    c->node().start_list(NodeAddr{0, b_ep}, "", [&](auto r) {
      listed = std::move(r);
    });
    REQUIRE(pump_until({b.get(), c.get()}, [&] { return listed.has_value(); }));
    REQUIRE(listed->is_ok());
    REQUIRE(listed->value().size() == 1);
    CHECK(listed->value()[0].name == "notes.txt");
    CHECK(listed->value()[0].size ==
          std::string("gamma routing overlay diary").size());

    std::optional<Result<std::vector<std::uint8_t>, FileError>> fetched;
    c->node().start_fetch(NodeAddr{0, b_ep}, "notes.txt", [&](auto r) {
      fetched = std::move(r);
    });
    REQUIRE(
        pump_until({b.get(), c.get()}, [&] { return fetched.has_value(); }));
    REQUIRE_MESSAGE(fetched->is_ok(),
                    (fetched->is_err() ? to_string(fetched->error()) : ""));
    std::string text(fetched->value().begin(), fetched->value().end());
    CHECK(text == "gamma routing overlay diary");

    std::optional<Result<std::vector<std::uint8_t>, FileError>> missing;
    c->node().start_fetch(NodeAddr{0, b_ep}, "absent.txt", [&](auto r) {
      missing = std::move(r);
    });
    REQUIRE(
        pump_until({b.get(), c.get()}, [&] { return missing.has_value(); }));
    REQUIRE(missing->is_err());
    CHECK(missing->error() == FileError::NotFound);
  }
}

TEST_CASE("daemon persists its index cache and reloads it on start") {
  TempDir box;
  write_text(box.path / "first.txt", "original words inside");
  TempDir cache_dir;
  std::string cache = (cache_dir.path / "node.idx").string();

  NodeConfig cfg;
  cfg.node_id = 5;
  cfg.endpoint = "127.0.0.1:0";
  cfg.domain = dom("all");
  cfg.sandbox = box.path.string();
  cfg.index_cache = cache;

  {
    auto d = Daemon::create(cfg);
    REQUIRE(d.is_ok());
    CHECK(d.value()->node().store().index->doc_count() == 1);
    CHECK(fs::exists(cache));
  }

  // New file appears after the cache was written; a fresh daemon trusts
  // the cache and does not see it until reindexed.
  write_text(box.path / "second.txt", "newer words arrive");
  {
    auto d = Daemon::create(cfg);
    REQUIRE(d.is_ok());
    CHECK(d.value()->node().store().index->doc_count() == 1);

    auto n = d.value()->node().reindex();
    REQUIRE(n.is_ok());
    CHECK(n.value() == 2);
    CHECK(d.value()->node().store().index->doc_count() == 2);
  }

  // The refreshed cache carries both documents.
  {
    auto d = Daemon::create(cfg);
    REQUIRE(d.is_ok());
    CHECK(d.value()->node().store().index->doc_count() == 2);
  }
}

TEST_CASE("join gives up cleanly when the bootstrap never answers") {
  std::string dead_ep;
  {
    auto probe = UdpTransport::bind("127.0.0.1:0");
    REQUIRE(probe.is_ok());
    dead_ep = probe.value()->local_endpoint();
  }  // socket closed: nothing listens there now

  NodeConfig cfg;
  cfg.node_id = 9;
  cfg.endpoint = "127.0.0.1:0";
  cfg.domain = dom("all.cs");
  cfg.bootstrap = dead_ep;
  cfg.join_timeout = 100;
  cfg.join_attempts = 2;

  auto d = Daemon::create(std::move(cfg));
  REQUIRE(d.is_ok());
  auto started = std::chrono::steady_clock::now();
  CHECK_FALSE(d.value()->join());
  CHECK(d.value()->node().join_failed());
  CHECK_FALSE(d.value()->node().joined());
  auto took = std::chrono::steady_clock::now() - started;
  CHECK(took < std::chrono::seconds(6));
}
