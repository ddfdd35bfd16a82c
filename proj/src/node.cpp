#include "sp2p/node.hpp"

#include <algorithm>
#include <cassert>
#include <fstream>

#include "sp2p/digest.hpp"

namespace sp2p {

namespace fs = std::filesystem;

// --- dedup window -------------------------------------------------------------

DedupWindow::DedupWindow(std::size_t capacity)
    : capacity_(capacity == 0 ? 1 : capacity) {}

bool DedupWindow::seen_or_insert(NodeId node, std::uint64_t id,
                                 std::uint8_t phase) {
  auto key = std::make_pair(node, id);
  auto it = seen_.find(key);
  if (it != seen_.end()) {
    if (it->second >= phase) return true;
    it->second = phase;  // same message, higher phase: process once more
    return false;
  }
  seen_.emplace(key, phase);
  order_.push_back(key);
  if (order_.size() > capacity_) {
    seen_.erase(order_.front());
    order_.pop_front();
  }
  return false;
}

// --- node ---------------------------------------------------------------------

Node::Node(NodeConfig cfg, LocalStore store, NodeEnv& env)
    : cfg_(std::move(cfg)),
      store_(std::move(store)),
      env_(env),
      table_(PeerInfo{NodeAddr{cfg_.node_id, cfg_.endpoint}, cfg_.domain},
             cfg_.n_tuple, cfg_.cache_policy, cfg_.cache_capacity) {}

PeerInfo Node::self_peer() const {
  return PeerInfo{self_addr(), cfg_.domain};
}

void Node::learn_from(const Message& m) {
  table_.learn(PeerInfo{m.src, m.src_domain});
  // Traffic from a peer under probe proves it alive.
  probes_.erase(m.src.node);
}

void Node::send_msg(const NodeAddr& to, std::uint64_t msg_id, std::uint8_t ttl,
                    Payload payload) {
  Message m;
  m.msg_id = msg_id;
  m.ttl = ttl;
  m.src = self_addr();
  m.src_domain = cfg_.domain;
  m.payload = std::move(payload);
  env_.send(to, m);
}

void Node::arm_alarm() {
  if (auto d = next_deadline()) env_.set_alarm(*d);
}

std::optional<std::uint64_t> Node::next_deadline() const {
  std::optional<std::uint64_t> d;
  auto fold = [&d](std::uint64_t v) {
    if (!d || v < *d) d = v;
  };
  if (joining_) fold(joining_->deadline);
  for (const auto& [id, q] : queries_) fold(q.deadline);
  for (const auto& [id, p] : probes_) fold(p.deadline);
  for (const auto& [id, l] : lists_) fold(l.deadline);
  for (const auto& [id, f] : fetches_) {
    for (const auto& [off, pend] : f.outstanding) fold(pend.deadline);
  }
  return d;
}

// --- lifecycle ----------------------------------------------------------------

void Node::start(JoinCallback done) {
  join_done_ = std::move(done);
  if (cfg_.bootstrap.empty() || cfg_.bootstrap == cfg_.endpoint) {
    joined_ = true;
    if (join_done_) join_done_(true);
    return;
  }
  joining_ = JoinState{};
  send_join_req();
  arm_alarm();
}

void Node::send_join_req() {
  assert(joining_);
  std::uint64_t id = next_id();
  joining_->attempts += 1;
  joining_->deadline = env_.now() + cfg_.join_timeout;
  joining_->msg_ids.insert(id);
  // Our own flood copy may come back; mark it seen up front.
  dedup_.seen_or_insert(cfg_.node_id, id, 1);
  send_msg(NodeAddr{0, cfg_.bootstrap}, id, cfg_.ttl,
           JoinReq{self_peer(), false});
}

void Node::handle_datagram(std::span<const std::uint8_t> bytes,
                           std::string_view from_endpoint) {
  auto decoded = decode(bytes);
  if (!decoded) {
    ++metrics_.decode_errors;
    const auto& e = decoded.error();
    env_.log(std::string("drop undecodable datagram from ") +
             std::string(from_endpoint) + ": " + to_string(e.kind) +
             " at byte " + std::to_string(e.offset));
    return;
  }
  const Message& m = decoded.value();
  switch (m.tag()) {
    case MsgTag::JoinReq:
      handle_join_req(m);
      break;
    case MsgTag::JoinAck:
      handle_join_ack(m);
      break;
    case MsgTag::Query:
      handle_query(m);
      break;
    case MsgTag::Result:
      handle_result(m);
      break;
    case MsgTag::Ping:
      handle_ping(m);
      break;
    case MsgTag::Pong:
      handle_pong(m);
      break;
    case MsgTag::ListDirReq:
      handle_list_req(m);
      break;
    case MsgTag::ListDirResp:
      handle_list_resp(m);
      break;
    case MsgTag::FileReq:
      handle_file_req(m);
      break;
    case MsgTag::FileChunk:
      handle_file_chunk(m);
      break;
  }
  arm_alarm();
}

// --- join ---------------------------------------------------------------------

void Node::handle_join_req(const Message& m) {
  const auto& jr = std::get<JoinReq>(m.payload);
  if (jr.joiner.addr.node == cfg_.node_id) return;  // echo of our own join
  learn_from(m);
  table_.learn(jr.joiner);
  if (dedup_.seen_or_insert(m.src.node, m.msg_id, jr.flood ? 1 : 0)) {
    ++metrics_.dup_drops;
    return;
  }

  if (jr.flood) {
    // Network-wide announcement phase: leaf mates acknowledge, everyone
    // passes it along once.
    if (cfg_.domain == jr.joiner.domain) send_join_ack(m);
    if (m.ttl > 0) {
      Message fwd = m;
      fwd.ttl -= 1;
      for (const auto& p : table_.all_peers()) {
        if (p.addr.node == jr.joiner.addr.node) continue;
        env_.send(p.addr, fwd);
        ++metrics_.rebroadcasts;
      }
    }
    return;
  }

  // Greedy phase: push the request toward the joiner's domain.
  auto cands = table_.candidates_for(jr.joiner.domain, jr.joiner.addr.node);
  if (!cands.empty() && m.ttl > 0) {
    Message fwd = m;
    fwd.ttl -= 1;
    ++metrics_.forwards;
    env_.send(cands.front().peer.addr, fwd);
    return;
  }

  // No one is nearer: this node anchors the join. Acknowledge with
  // everything we know, then announce the newcomer to the whole overlay.
  send_join_ack(m);
  if (m.ttl > 0) {
    Message fwd = m;
    fwd.ttl -= 1;
    std::get<JoinReq>(fwd.payload).flood = true;
    for (const auto& p : table_.all_peers()) {
      if (p.addr.node == jr.joiner.addr.node) continue;
      env_.send(p.addr, fwd);
      ++metrics_.rebroadcasts;
    }
  }
}

void Node::send_join_ack(const Message& req) {
  const auto& jr = std::get<JoinReq>(req.payload);
  JoinAck ack;
  ack.members.push_back(self_peer());
  for (const auto& [id, e] : table_.leaf_members()) {
    ack.members.push_back(e.peer);
  }
  for (const auto& p : table_.all_peers()) {
    if (p.domain == cfg_.domain) continue;  // already in members
    ack.routes.push_back(p);
  }
  if (ack.members.size() > kMaxPeerList) ack.members.resize(kMaxPeerList);
  if (ack.routes.size() > kMaxPeerList) ack.routes.resize(kMaxPeerList);
  send_msg(jr.joiner.addr, req.msg_id, 0, std::move(ack));
}

void Node::handle_join_ack(const Message& m) {
  const auto& ack = std::get<JoinAck>(m.payload);
  learn_from(m);
  for (const auto& p : ack.members) table_.learn(p);
  for (const auto& p : ack.routes) table_.learn(p);

  if (!joining_ || !joining_->msg_ids.count(m.msg_id)) return;
  joining_ = std::nullopt;
  joined_ = true;
  // Introduce ourselves to everyone we just learned about, so they learn
  // us right back (and trigger slot/cache placement on their side).
  for (const auto& p : table_.all_peers()) {
    if (p.addr == m.src) continue;  // the acknowledger clearly knows us
    send_msg(p.addr, next_id(), 0, Ping{});
  }
  if (join_done_) join_done_(true);
}

// --- query path ---------------------------------------------------------------

std::uint64_t Node::run_query(const Query& q, QueryCallback done,
                              std::optional<std::size_t> expected) {
  Message m;
  std::uint64_t id = begin_query(q, std::move(done), expected, m);
  route_query(m);
  arm_alarm();
  return id;
}

std::uint64_t Node::run_query_via(const NodeAddr& relay, const Query& q,
                                  QueryCallback done,
                                  std::optional<std::size_t> expected) {
  Message m;
  std::uint64_t id = begin_query(q, std::move(done), expected, m);
  env_.send(relay, m);
  arm_alarm();
  return id;
}

std::uint64_t Node::begin_query(const Query& q, QueryCallback done,
                                std::optional<std::size_t> expected,
                                Message& m) {
  std::uint64_t id = next_id();
  QueryState st;
  st.q = q;
  st.started = env_.now();
  st.deadline = env_.now() + cfg_.query_deadline;
  st.expected = expected;
  st.done = std::move(done);
  queries_.emplace(id, std::move(st));
  dedup_.seen_or_insert(cfg_.node_id, id);

  m.msg_id = id;
  m.ttl = cfg_.ttl;
  m.src = self_addr();
  m.src_domain = cfg_.domain;
  m.payload = QueryMsg{q.target, q.keywords, q.mode, q.per_node_k};
  return id;
}

void Node::handle_query(const Message& m) {
  learn_from(m);
  if (dedup_.seen_or_insert(m.src.node, m.msg_id)) {
    ++metrics_.dup_drops;
    return;
  }
  route_query(m);
}

void Node::route_query(const Message& m) {
  const auto& q = std::get<QueryMsg>(m.payload);

  if (is_ancestor_or_self(q.target, cfg_.domain)) {
    // We are inside the queried subtree: answer, then spread the query to
    // every known node of that subtree.
    serve_query(m);
    if (m.ttl > 0) {
      Message fwd = m;
      fwd.ttl -= 1;
      for (const auto& p : table_.peers_in_subtree(q.target)) {
        if (p.addr.node == m.src.node) continue;
        env_.send(p.addr, fwd);
        ++metrics_.rebroadcasts;
      }
    }
    return;
  }

  auto cands = table_.candidates_for(q.target, m.src.node);
  if (cands.empty() || m.ttl == 0) {
    // Nowhere better to go: tell the origin this branch is dry.
    ++metrics_.dead_end_replies;
    send_msg(m.src, m.msg_id, 0, ResultMsg{self_addr(), {}, true});
    return;
  }
  Message fwd = m;
  fwd.ttl -= 1;
  ++metrics_.forwards;
  env_.send(cands.front().peer.addr, fwd);
}

void Node::serve_query(const Message& m) {
  const auto& q = std::get<QueryMsg>(m.payload);
  ++metrics_.serves;
  env_.on_serve(m.msg_id);

  std::size_t k = std::min<std::size_t>(q.per_node_k, kMaxHits);
  auto scored = store_.index->search(q.keywords, k, q.mode);

  ResultMsg r;
  r.responder = self_addr();
  for (const auto& s : scored) {
    const DocRecord& d = store_.index->doc(s.doc_id);
    WireHit h;
    h.rel_path = d.rel_path;
    h.score_micros = s.score_micros;
    h.size = d.size;
    // Snippets come from the document text: in-memory corpus first, then
    // the sandbox file.
    if (auto it = store_.inline_texts.find(d.rel_path);
        it != store_.inline_texts.end()) {
      h.snippet = make_snippet(it->second, q.keywords);
    } else if (store_.root) {
      if (auto p = store_.root->resolve(d.rel_path)) {
        if (auto text = store_.extractors.extract(p.value())) {
          h.snippet = make_snippet(text.value(), q.keywords);
        }
      }
    }
    r.hits.push_back(std::move(h));
  }
  send_msg(m.src, m.msg_id, 0, std::move(r));
}

void Node::handle_result(const Message& m) {
  learn_from(m);
  const auto& r = std::get<ResultMsg>(m.payload);
  auto it = queries_.find(m.msg_id);
  if (it == queries_.end()) {
    ++metrics_.late_results;
    return;
  }
  QueryState& st = it->second;
  if (r.dead_end) {
    st.dead_end = true;
  } else {
    st.responders.insert(r.responder.node);
    for (const auto& h : r.hits) {
      QueryHit qh{r.responder, h.rel_path, h.score_micros, h.size, h.snippet};
      st.hits.try_emplace(std::make_pair(r.responder.node, h.rel_path),
                          std::move(qh));
    }
  }
  if (st.expected && st.responders.size() >= *st.expected) {
    finish_query(m.msg_id, true);
  }
}

void Node::finish_query(std::uint64_t msg_id, bool complete) {
  auto it = queries_.find(msg_id);
  if (it == queries_.end()) return;
  QueryState st = std::move(it->second);
  queries_.erase(it);

  QueryOutcome out;
  out.responders = st.responders.size();
  out.dead_end = st.dead_end;
  out.complete = complete;
  out.duration = env_.now() - st.started;
  out.hits.reserve(st.hits.size());
  for (auto& [key, h] : st.hits) out.hits.push_back(std::move(h));
  sort_hits(out.hits);
  if (st.done) st.done(std::move(out));
}

// --- liveness -----------------------------------------------------------------

void Node::handle_ping(const Message& m) {
  learn_from(m);
  send_msg(m.src, m.msg_id, 0, Pong{});
}

void Node::handle_pong(const Message& m) {
  learn_from(m);  // also clears any probe on this peer
}

void Node::start_probe(NodeId peer) {
  if (peer == cfg_.node_id || probes_.count(peer)) return;
  auto info = table_.find(peer);
  if (!info) return;
  ProbeState st;
  st.addr = info->addr;
  st.attempts = 1;
  st.deadline = env_.now() + cfg_.probe_timeout;
  probes_.emplace(peer, st);
  send_msg(st.addr, next_id(), 0, Ping{});
  arm_alarm();
}

void Node::probe_all() {
  for (const auto& p : table_.all_peers()) start_probe(p.addr.node);
}

// --- directory listing ----------------------------------------------------------

std::uint64_t Node::start_list(const NodeAddr& peer, std::string rel_path,
                               ListCallback done) {
  std::uint64_t id = next_id();
  ListState st;
  st.peer = peer;
  st.rel_path = rel_path;
  st.attempts = 1;
  st.deadline = env_.now() + cfg_.list_timeout;
  st.done = std::move(done);
  lists_.emplace(id, std::move(st));
  send_msg(peer, id, 0, ListDirReq{std::move(rel_path)});
  arm_alarm();
  return id;
}

void Node::handle_list_req(const Message& m) {
  learn_from(m);
  const auto& req = std::get<ListDirReq>(m.payload);
  ListDirResp resp;

  if (!store_.root) {
    resp.status = ServeStatus::NotFound;
  } else {
    auto resolved = store_.root->resolve(req.rel_path);
    if (!resolved) {
      resp.status = resolved.error() == FileError::OutsideSandbox
                        ? ServeStatus::OutsideSandbox
                        : ServeStatus::NotFound;
    } else {
      std::error_code ec;
      if (!fs::is_directory(resolved.value(), ec) || ec) {
        resp.status = ServeStatus::NotFound;
      } else {
        std::vector<fs::directory_entry> entries;
        for (auto it = fs::directory_iterator(resolved.value(), ec);
             !ec && it != fs::directory_iterator(); it.increment(ec)) {
          entries.push_back(*it);
        }
        if (ec) {
          resp.status = ServeStatus::ReadError;
        } else {
          std::sort(entries.begin(), entries.end(),
                    [](const fs::directory_entry& a,
                       const fs::directory_entry& b) {
                      return a.path().filename() < b.path().filename();
                    });
          for (const auto& e : entries) {
            if (resp.entries.size() >= kMaxDirEntries) break;
            std::string name = e.path().filename().string();
            std::string rel = req.rel_path.empty()
                                  ? name
                                  : req.rel_path + "/" + name;
            auto target = store_.root->resolve(rel);
            if (!target) continue;  // e.g. symlink pointing outside
            WireDirEntry w;
            w.name = name;
            if (fs::is_directory(target.value(), ec) && !ec) {
              w.kind = 1;
            } else if (fs::is_regular_file(target.value(), ec) && !ec) {
              w.kind = 0;
              w.size = fs::file_size(target.value(), ec);
              if (ec) w.size = 0;
            } else {
              continue;  // sockets, fifos, ... are not served
            }
            resp.entries.push_back(std::move(w));
          }
        }
      }
    }
  }
  send_msg(m.src, m.msg_id, 0, std::move(resp));
}

void Node::handle_list_resp(const Message& m) {
  learn_from(m);
  auto it = lists_.find(m.msg_id);
  if (it == lists_.end()) return;
  ListState st = std::move(it->second);
  lists_.erase(it);

  const auto& resp = std::get<ListDirResp>(m.payload);
  if (!st.done) return;
  switch (resp.status) {
    case ServeStatus::Ok: {
      auto entries = resp.entries;
      std::sort(entries.begin(), entries.end(),
                [](const WireDirEntry& a, const WireDirEntry& b) {
                  return a.name < b.name;
                });
      st.done(std::move(entries));
      break;
    }
    case ServeStatus::NotFound:
      st.done(FileError::NotFound);
      break;
    case ServeStatus::OutsideSandbox:
      st.done(FileError::OutsideSandbox);
      break;
    default:
      st.done(FileError::ReadError);
      break;
  }
}

// --- file serving ---------------------------------------------------------------

FileChunk Node::build_chunk(const FileReq& req, std::uint64_t offset) {
  FileChunk c;
  c.session = req.session;
  c.offset = offset;

  if (!store_.root) {
    c.status = ServeStatus::NotFound;
    return c;
  }
  auto resolved = store_.root->resolve(req.rel_path);
  if (!resolved) {
    c.status = resolved.error() == FileError::OutsideSandbox
                   ? ServeStatus::OutsideSandbox
                   : ServeStatus::NotFound;
    return c;
  }
  std::error_code ec;
  if (!fs::is_regular_file(resolved.value(), ec) || ec) {
    c.status = ServeStatus::NotFound;
    return c;
  }
  std::uint64_t size = fs::file_size(resolved.value(), ec);
  if (ec) {
    c.status = ServeStatus::ReadError;
    return c;
  }
  c.file_size = size;
  if (offset % kFileChunkBytes != 0 || (offset >= size && offset != 0)) {
    c.status = ServeStatus::BadOffset;
    return c;
  }

  std::ifstream f(resolved.value(), std::ios::binary);
  if (!f) {
    c.status = ServeStatus::ReadError;
    return c;
  }
  std::size_t want = static_cast<std::size_t>(
      std::min<std::uint64_t>(kFileChunkBytes, size - offset));
  c.data.resize(want);
  if (want > 0) {
    f.seekg(static_cast<std::streamoff>(offset));
    f.read(reinterpret_cast<char*>(c.data.data()),
           static_cast<std::streamsize>(want));
    if (!f.good() && !f.eof()) {
      c.status = ServeStatus::ReadError;
      c.data.clear();
      return c;
    }
  }
  c.eof = offset + want == size;
  if (offset == 0) {
    // The first chunk carries the digest of the whole file so the fetcher
    // can verify the assembly.
    std::ifstream whole(resolved.value(), std::ios::binary);
    std::vector<std::uint8_t> all((std::istreambuf_iterator<char>(whole)),
                                  std::istreambuf_iterator<char>());
    c.digest = sha256(all);
    c.has_digest = true;
  }
  return c;
}

void Node::handle_file_req(const Message& m) {
  learn_from(m);
  const auto& req = std::get<FileReq>(m.payload);
  if (req.offsets.empty()) return;
  for (auto off : req.offsets) {
    FileChunk c = build_chunk(req, off);
    bool error = c.status != ServeStatus::Ok;
    send_msg(m.src, next_id(), 0, std::move(c));
    // One error reply describes the whole request.
    if (error) break;
  }
}

// --- file fetching ---------------------------------------------------------------

std::uint64_t Node::start_fetch(const NodeAddr& peer, std::string rel_path,
                                FetchCallback done) {
  std::uint64_t session = next_id();
  FetchState st;
  st.peer = peer;
  st.rel_path = std::move(rel_path);
  st.done = std::move(done);
  auto [it, ok] = fetches_.emplace(session, std::move(st));
  (void)ok;
  // The chunk at offset 0 tells us the file size and digest; the window
  // opens up once it arrives.
  fetch_send(session, it->second, {0});
  arm_alarm();
  return session;
}

void Node::fetch_send(std::uint64_t session, FetchState& st,
                      std::vector<std::uint64_t> offsets) {
  std::uint64_t deadline = env_.now() + cfg_.chunk_timeout;
  for (auto off : offsets) {
    auto& pend = st.outstanding[off];
    pend.attempts += 1;
    pend.deadline = deadline;
  }
  send_msg(st.peer, next_id(), 0,
           FileReq{session, st.rel_path, std::move(offsets)});
}

void Node::fetch_fill_window(std::uint64_t session, FetchState& st) {
  if (!st.size_known) return;
  std::vector<std::uint64_t> fresh;
  while (st.outstanding.size() + fresh.size() < cfg_.fetch_window &&
         st.next_offset < st.file_size) {
    fresh.push_back(st.next_offset);
    st.next_offset += kFileChunkBytes;
  }
  if (!fresh.empty()) fetch_send(session, st, std::move(fresh));
}

void Node::fetch_fail(std::uint64_t session, FileError err) {
  auto it = fetches_.find(session);
  if (it == fetches_.end()) return;
  FetchCallback done = std::move(it->second.done);
  fetches_.erase(it);
  if (done) done(err);
}

void Node::fetch_finish(std::uint64_t session) {
  auto it = fetches_.find(session);
  if (it == fetches_.end()) return;
  FetchState st = std::move(it->second);
  fetches_.erase(it);
  if (sha256(st.buf) != st.digest) {
    if (st.done) st.done(FileError::ChecksumMismatch);
    return;
  }
  if (st.done) st.done(std::move(st.buf));
}

void Node::handle_file_chunk(const Message& m) {
  learn_from(m);
  const auto& c = std::get<FileChunk>(m.payload);
  auto it = fetches_.find(c.session);
  if (it == fetches_.end()) return;  // stale session
  FetchState& st = it->second;

  if (c.status != ServeStatus::Ok) {
    FileError err;
    switch (c.status) {
      case ServeStatus::NotFound:
        err = FileError::NotFound;
        break;
      case ServeStatus::OutsideSandbox:
        err = FileError::OutsideSandbox;
        break;
      case ServeStatus::BadOffset:
        err = FileError::BadOffset;
        break;
      default:
        err = FileError::ReadError;
        break;
    }
    fetch_fail(c.session, err);
    return;
  }

  if (!st.size_known) {
    if (c.file_size > cfg_.max_fetch_bytes) {
      fetch_fail(c.session, FileError::TooLarge);
      return;
    }
    st.size_known = true;
    st.file_size = c.file_size;
    st.num_chunks =
        static_cast<std::size_t>((c.file_size + kFileChunkBytes - 1) /
                                 kFileChunkBytes);
    st.buf.resize(static_cast<std::size_t>(st.file_size));
    st.have.assign(st.num_chunks, false);
    st.next_offset = 0;
  }
  if (c.has_digest && !st.digest_known) {
    st.digest = c.digest;
    st.digest_known = true;
  }

  // Validate the chunk against what we know; a bad one is ignored and the
  // retry path re-requests it.
  if (c.file_size != st.file_size || c.offset % kFileChunkBytes != 0) return;
  if (c.offset > st.file_size) return;
  std::size_t want = static_cast<std::size_t>(std::min<std::uint64_t>(
      kFileChunkBytes, st.file_size - c.offset));
  if (c.data.size() != want) return;

  st.outstanding.erase(c.offset);
  if (st.file_size > 0) {
    std::size_t idx = static_cast<std::size_t>(c.offset / kFileChunkBytes);
    if (!st.have[idx]) {
      st.have[idx] = true;
      ++st.have_count;
      std::copy(c.data.begin(), c.data.end(),
                st.buf.begin() + static_cast<std::ptrdiff_t>(c.offset));
    }
  }

  if (st.have_count == st.num_chunks) {
    if (!st.digest_known) {
      // Every complete fetch saw the offset-0 chunk, which carries it.
      fetch_fail(c.session, FileError::ChecksumMismatch);
      return;
    }
    fetch_finish(c.session);
    return;
  }
  fetch_fill_window(c.session, st);
}

// --- timers -------------------------------------------------------------------

void Node::on_alarm() {
  std::uint64_t now = env_.now();

  // Join retry.
  if (joining_ && joining_->deadline <= now) {
    if (joining_->attempts >= cfg_.join_attempts) {
      joining_ = std::nullopt;
      join_failed_ = true;
      if (join_done_) join_done_(false);
    } else {
      send_join_req();
    }
  }

  // Query deadlines.
  {
    std::vector<std::uint64_t> due;
    for (const auto& [id, st] : queries_) {
      if (st.deadline <= now) due.push_back(id);
    }
    for (auto id : due) finish_query(id, false);
  }

  // Probe timeouts.
  {
    std::vector<NodeId> due;
    for (const auto& [id, st] : probes_) {
      if (st.deadline <= now) due.push_back(id);
    }
    for (auto id : due) {
      auto it = probes_.find(id);
      if (it == probes_.end()) continue;
      ProbeState& st = it->second;
      if (st.attempts >= cfg_.probe_attempts) {
        probes_.erase(it);
        table_.remove_peer(id);
        ++metrics_.peers_failed;
        env_.log("peer " + std::to_string(id) + " failed probe, dropped");
      } else {
        st.attempts += 1;
        st.deadline = now + cfg_.probe_timeout;
        send_msg(st.addr, next_id(), 0, Ping{});
      }
    }
  }

  // List retries.
  {
    std::vector<std::uint64_t> due;
    for (const auto& [id, st] : lists_) {
      if (st.deadline <= now) due.push_back(id);
    }
    for (auto id : due) {
      auto it = lists_.find(id);
      if (it == lists_.end()) continue;
      ListState& st = it->second;
      if (st.attempts >= cfg_.list_attempts) {
        ListCallback done = std::move(st.done);
        lists_.erase(it);
        if (done) done(FileError::Timeout);
      } else {
        st.attempts += 1;
        st.deadline = now + cfg_.list_timeout;
        send_msg(st.peer, id, 0, ListDirReq{st.rel_path});
      }
    }
  }

  // Chunk retries.
  {
    std::vector<std::uint64_t> sessions;
    for (const auto& [id, st] : fetches_) sessions.push_back(id);
    for (auto sid : sessions) {
      auto it = fetches_.find(sid);
      if (it == fetches_.end()) continue;
      FetchState& st = it->second;
      std::vector<std::uint64_t> late;
      bool dead = false;
      for (const auto& [off, pend] : st.outstanding) {
        if (pend.deadline > now) continue;
        if (pend.attempts > cfg_.chunk_retries) {
          dead = true;
          break;
        }
        late.push_back(off);
      }
      if (dead) {
        fetch_fail(sid, FileError::TooManyRetries);
        continue;
      }
      // Each overdue chunk is re-requested on its own so one loss does not
      // stall the rest of the window.
      for (auto off : late) fetch_send(sid, st, {off});
    }
  }

  arm_alarm();
}

// --- reindex ------------------------------------------------------------------

Result<std::size_t, std::string> Node::reindex() {
  if (!store_.root) {
    return std::string("no sandbox directory configured");
  }
  auto idx = build_index(*store_.root, store_.extractors);
  if (!idx) return idx.error();
  auto fresh = std::make_shared<InvertedIndex>(std::move(idx).value());
  store_.index = fresh;
  // Keep the on-disk image in step, or a restart would resurrect the old
  // view of the sandbox.
  if (!cfg_.index_cache.empty()) {
    if (auto saved = store_.index->save(cfg_.index_cache); !saved) {
      return saved.error();
    }
  }
  return store_.index->doc_count();
}

}  // namespace sp2p
