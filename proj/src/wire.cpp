#include "sp2p/wire.hpp"

#include <cstring>

namespace sp2p {

const char* to_string(MsgTag tag) {
  switch (tag) {
    case MsgTag::JoinReq:
      return "JOIN_REQ";
    case MsgTag::JoinAck:
      return "JOIN_ACK";
    case MsgTag::Query:
      return "QUERY";
    case MsgTag::Result:
      return "RESULT";
    case MsgTag::ListDirReq:
      return "LIST_DIR_REQ";
    case MsgTag::ListDirResp:
      return "LIST_DIR_RESP";
    case MsgTag::FileReq:
      return "FILE_REQ";
    case MsgTag::Ping:
      return "PING";
    case MsgTag::FileChunk:
      return "FILE_CHUNK";
    case MsgTag::Pong:
      return "PONG";
  }
  return "UNKNOWN";
}

const char* to_string(ServeStatus s) {
  switch (s) {
    case ServeStatus::Ok:
      return "ok";
    case ServeStatus::NotFound:
      return "not found";
    case ServeStatus::OutsideSandbox:
      return "outside sandbox";
    case ServeStatus::ReadError:
      return "read error";
    case ServeStatus::BadOffset:
      return "bad offset";
  }
  return "unknown status";
}

const char* to_string(DecodeErrorKind k) {
  switch (k) {
    case DecodeErrorKind::Truncated:
      return "truncated";
    case DecodeErrorKind::UnknownTag:
      return "unknown tag";
    case DecodeErrorKind::BadUtf8:
      return "bad utf-8";
    case DecodeErrorKind::LimitExceeded:
      return "limit exceeded";
  }
  return "unknown decode error";
}

MsgTag Message::tag() const {
  switch (payload.index()) {
    case 0:
      return MsgTag::JoinReq;
    case 1:
      return MsgTag::JoinAck;
    case 2:
      return MsgTag::Query;
    case 3:
      return MsgTag::Result;
    case 4:
      return MsgTag::ListDirReq;
    case 5:
      return MsgTag::ListDirResp;
    case 6:
      return MsgTag::FileReq;
    case 7:
      return MsgTag::FileChunk;
    case 8:
      return MsgTag::Ping;
    default:
      return MsgTag::Pong;
  }
}

bool is_valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    std::size_t len;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > s.size()) return false;
    for (std::size_t j = 1; j < len; ++j) {
      unsigned char cc = static_cast<unsigned char>(s[i + j]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // Overlong encodings, UTF-16 surrogates and values past U+10FFFF are
    // not legal on the wire.
    if (len == 2 && cp < 0x80) return false;
    if (len == 3 && cp < 0x800) return false;
    if (len == 4 && cp < 0x10000) return false;
    if (cp >= 0xD800 && cp <= 0xDFFF) return false;
    if (cp > 0x10FFFF) return false;
    i += len;
  }
  return true;
}

namespace {

// --- encoding ---------------------------------------------------------------

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }

  void u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
    out_.push_back(static_cast<std::uint8_t>(v));
  }

  void u32(std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) {
      out_.push_back(static_cast<std::uint8_t>(v >> s));
    }
  }

  void u64(std::uint64_t v) {
    for (int s = 56; s >= 0; s -= 8) {
      out_.push_back(static_cast<std::uint8_t>(v >> s));
    }
  }

  bool str(std::string_view s, std::size_t cap = kMaxStringBytes) {
    if (s.size() > cap) return false;
    u16(static_cast<std::uint16_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
    return true;
  }

  void bytes(std::span<const std::uint8_t> b) {
    u16(static_cast<std::uint16_t>(b.size()));
    out_.insert(out_.end(), b.begin(), b.end());
  }

  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

EncodeError invalid(std::string detail) {
  return EncodeError{EncodeErrorKind::InvalidField, std::move(detail)};
}

struct Encoder {
  Writer& w;
  // Set to the failure description when a field is rejected.
  std::string bad;

  bool str(std::string_view s, const char* what,
           std::size_t cap = kMaxStringBytes) {
    if (!w.str(s, cap)) {
      bad = std::string(what) + " too long";
      return false;
    }
    return true;
  }

  bool addr(const NodeAddr& a) {
    w.u64(a.node);
    return str(a.endpoint, "endpoint");
  }

  bool peer(const PeerInfo& p) {
    if (!addr(p.addr)) return false;
    return str(p.domain.str(), "domain");
  }

  bool peer_list(const std::vector<PeerInfo>& ps, const char* what) {
    if (ps.size() > kMaxPeerList) {
      bad = std::string(what) + " list too long";
      return false;
    }
    w.u16(static_cast<std::uint16_t>(ps.size()));
    for (const auto& p : ps) {
      if (!peer(p)) return false;
    }
    return true;
  }

  bool operator()(const JoinReq& p) {
    if (!peer(p.joiner)) return false;
    w.u8(p.flood ? 1 : 0);
    return true;
  }

  bool operator()(const JoinAck& p) {
    return peer_list(p.members, "members") && peer_list(p.routes, "routes");
  }

  bool operator()(const QueryMsg& p) {
    if (!str(p.target.str(), "target")) return false;
    if (p.keywords.size() > kMaxKeywords) {
      bad = "too many keywords";
      return false;
    }
    w.u16(static_cast<std::uint16_t>(p.keywords.size()));
    for (const auto& k : p.keywords) {
      if (!str(k, "keyword")) return false;
    }
    w.u8(static_cast<std::uint8_t>(p.mode));
    w.u16(p.per_node_k);
    return true;
  }

  bool operator()(const ResultMsg& p) {
    if (!addr(p.responder)) return false;
    if (p.hits.size() > kMaxHits) {
      bad = "too many hits";
      return false;
    }
    w.u16(static_cast<std::uint16_t>(p.hits.size()));
    for (const auto& h : p.hits) {
      if (!str(h.rel_path, "rel_path")) return false;
      w.u64(static_cast<std::uint64_t>(h.score_micros));
      w.u64(h.size);
      if (!str(h.snippet, "snippet", kSnippetBytes)) return false;
    }
    w.u8(p.dead_end ? 1 : 0);
    return true;
  }

  bool operator()(const ListDirReq& p) { return str(p.rel_path, "rel_path"); }

  bool operator()(const ListDirResp& p) {
    w.u8(static_cast<std::uint8_t>(p.status));
    if (p.entries.size() > kMaxDirEntries) {
      bad = "too many directory entries";
      return false;
    }
    w.u16(static_cast<std::uint16_t>(p.entries.size()));
    for (const auto& e : p.entries) {
      if (!str(e.name, "entry name")) return false;
      if (e.kind > 1) {
        bad = "bad entry kind";
        return false;
      }
      w.u8(e.kind);
      w.u64(e.size);
    }
    return true;
  }

  bool operator()(const FileReq& p) {
    w.u64(p.session);
    if (!str(p.rel_path, "rel_path")) return false;
    if (p.offsets.size() > kMaxFileOffsets) {
      bad = "too many offsets";
      return false;
    }
    w.u16(static_cast<std::uint16_t>(p.offsets.size()));
    for (auto off : p.offsets) w.u64(off);
    return true;
  }

  bool operator()(const FileChunk& p) {
    w.u64(p.session);
    w.u8(static_cast<std::uint8_t>(p.status));
    w.u64(p.offset);
    w.u64(p.file_size);
    w.u8(p.eof ? 1 : 0);
    w.u8(p.has_digest ? 1 : 0);
    if (p.has_digest) {
      for (auto b : p.digest) w.u8(b);
    }
    if (p.data.size() > kFileChunkBytes) {
      bad = "chunk data too long";
      return false;
    }
    w.bytes(p.data);
    return true;
  }

  bool operator()(const Ping&) { return true; }
  bool operator()(const Pong&) { return true; }
};

// --- decoding ---------------------------------------------------------------

struct Reader {
  std::span<const std::uint8_t> in;
  std::size_t pos = 0;
  DecodeError error{DecodeErrorKind::Truncated, 0};
  bool failed = false;

  bool fail(DecodeErrorKind kind, std::size_t offset) {
    if (!failed) {
      failed = true;
      error = DecodeError{kind, offset};
    }
    return false;
  }

  bool need(std::size_t n) {
    if (failed) return false;
    if (in.size() - pos < n) return fail(DecodeErrorKind::Truncated, pos);
    return true;
  }

  bool u8(std::uint8_t& v) {
    if (!need(1)) return false;
    v = in[pos++];
    return true;
  }

  bool u16(std::uint16_t& v) {
    if (!need(2)) return false;
    v = static_cast<std::uint16_t>((in[pos] << 8) | in[pos + 1]);
    pos += 2;
    return true;
  }

  bool u64(std::uint64_t& v) {
    if (!need(8)) return false;
    v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | in[pos + i];
    pos += 8;
    return true;
  }

  bool str(std::string& v, std::size_t cap = kMaxStringBytes) {
    std::uint16_t len = 0;
    std::size_t len_at = pos;
    if (!u16(len)) return false;
    if (len > cap) return fail(DecodeErrorKind::LimitExceeded, len_at);
    if (!need(len)) return false;
    std::size_t body = pos;
    v.assign(reinterpret_cast<const char*>(in.data() + pos), len);
    pos += len;
    if (!is_valid_utf8(v)) return fail(DecodeErrorKind::BadUtf8, body);
    return true;
  }

  bool count(std::uint16_t& v, std::size_t cap) {
    std::size_t at = pos;
    if (!u16(v)) return false;
    if (v > cap) return fail(DecodeErrorKind::LimitExceeded, at);
    return true;
  }

  bool boolean(bool& v) {
    std::size_t at = pos;
    std::uint8_t b = 0;
    if (!u8(b)) return false;
    if (b > 1) return fail(DecodeErrorKind::LimitExceeded, at);
    v = (b == 1);
    return true;
  }

  bool domain(DomainPath& v) {
    std::string text;
    std::size_t body = pos + 2;
    if (!str(text)) return false;
    auto parsed = DomainPath::parse(text);
    if (!parsed) return fail(DecodeErrorKind::LimitExceeded, body);
    v = std::move(parsed).value();
    return true;
  }

  bool addr(NodeAddr& a) { return u64(a.node) && str(a.endpoint); }

  bool peer(PeerInfo& p) { return addr(p.addr) && domain(p.domain); }

  bool peer_list(std::vector<PeerInfo>& ps) {
    std::uint16_t n = 0;
    if (!count(n, kMaxPeerList)) return false;
    ps.resize(n);
    for (auto& p : ps) {
      if (!peer(p)) return false;
    }
    return true;
  }
};

bool decode_payload(Reader& r, MsgTag tag, Payload& out) {
  switch (tag) {
    case MsgTag::JoinReq: {
      JoinReq p;
      if (!r.peer(p.joiner) || !r.boolean(p.flood)) return false;
      out = std::move(p);
      return true;
    }
    case MsgTag::JoinAck: {
      JoinAck p;
      if (!r.peer_list(p.members) || !r.peer_list(p.routes)) return false;
      out = std::move(p);
      return true;
    }
    case MsgTag::Query: {
      QueryMsg p;
      if (!r.domain(p.target)) return false;
      std::uint16_t n = 0;
      if (!r.count(n, kMaxKeywords)) return false;
      p.keywords.resize(n);
      for (auto& k : p.keywords) {
        if (!r.str(k)) return false;
      }
      std::size_t mode_at = r.pos;
      std::uint8_t mode = 0;
      if (!r.u8(mode)) return false;
      if (mode > 1) return r.fail(DecodeErrorKind::LimitExceeded, mode_at);
      p.mode = static_cast<SearchMode>(mode);
      if (!r.u16(p.per_node_k)) return false;
      out = std::move(p);
      return true;
    }
    case MsgTag::Result: {
      ResultMsg p;
      if (!r.addr(p.responder)) return false;
      std::uint16_t n = 0;
      if (!r.count(n, kMaxHits)) return false;
      p.hits.resize(n);
      for (auto& h : p.hits) {
        std::uint64_t score = 0;
        if (!r.str(h.rel_path) || !r.u64(score) || !r.u64(h.size) ||
            !r.str(h.snippet, kSnippetBytes)) {
          return false;
        }
        h.score_micros = static_cast<std::int64_t>(score);
      }
      if (!r.boolean(p.dead_end)) return false;
      out = std::move(p);
      return true;
    }
    case MsgTag::ListDirReq: {
      ListDirReq p;
      if (!r.str(p.rel_path)) return false;
      out = std::move(p);
      return true;
    }
    case MsgTag::ListDirResp: {
      ListDirResp p;
      std::size_t status_at = r.pos;
      std::uint8_t status = 0;
      if (!r.u8(status)) return false;
      if (status > 4) return r.fail(DecodeErrorKind::LimitExceeded, status_at);
      p.status = static_cast<ServeStatus>(status);
      std::uint16_t n = 0;
      if (!r.count(n, kMaxDirEntries)) return false;
      p.entries.resize(n);
      for (auto& e : p.entries) {
        if (!r.str(e.name)) return false;
        std::size_t kind_at = r.pos;
        if (!r.u8(e.kind)) return false;
        if (e.kind > 1) return r.fail(DecodeErrorKind::LimitExceeded, kind_at);
        if (!r.u64(e.size)) return false;
      }
      out = std::move(p);
      return true;
    }
    case MsgTag::FileReq: {
      FileReq p;
      if (!r.u64(p.session) || !r.str(p.rel_path)) return false;
      std::uint16_t n = 0;
      if (!r.count(n, kMaxFileOffsets)) return false;
      p.offsets.resize(n);
      for (auto& off : p.offsets) {
        if (!r.u64(off)) return false;
      }
      out = std::move(p);
      return true;
    }
    case MsgTag::FileChunk: {
      FileChunk p;
      if (!r.u64(p.session)) return false;
      std::size_t status_at = r.pos;
      std::uint8_t status = 0;
      if (!r.u8(status)) return false;
      if (status > 4) return r.fail(DecodeErrorKind::LimitExceeded, status_at);
      p.status = static_cast<ServeStatus>(status);
      if (!r.u64(p.offset) || !r.u64(p.file_size) || !r.boolean(p.eof) ||
          !r.boolean(p.has_digest)) {
        return false;
      }
      if (p.has_digest) {
        if (!r.need(32)) return false;
        std::memcpy(p.digest.data(), r.in.data() + r.pos, 32);
        r.pos += 32;
      }
      std::uint16_t len = 0;
      if (!r.count(len, kFileChunkBytes)) return false;
      if (!r.need(len)) return false;
      p.data.assign(r.in.begin() + r.pos, r.in.begin() + r.pos + len);
      r.pos += len;
      out = std::move(p);
      return true;
    }
    case MsgTag::Ping:
      out = Ping{};
      return true;
    case MsgTag::Pong:
      out = Pong{};
      return true;
  }
  return false;
}

}  // namespace

Result<std::vector<std::uint8_t>, EncodeError> encode(const Message& m) {
  if (m.ttl > kMaxTtl) {
    return invalid("ttl out of range");
  }
  Writer w;
  for (auto b : kMagic) w.u8(b);
  w.u8(kWireVersion);
  w.u8(static_cast<std::uint8_t>(m.tag()));
  w.u64(m.msg_id);
  w.u8(m.ttl);
  Encoder enc{w, {}};
  if (!enc.addr(m.src) || !enc.str(m.src_domain.str(), "src_domain") ||
      !std::visit(enc, m.payload)) {
    return invalid(std::move(enc.bad));
  }
  auto bytes = w.take();
  if (bytes.size() > kMaxMessageBytes) {
    return EncodeError{EncodeErrorKind::Oversize,
                       "encoded message exceeds 64 KiB"};
  }
  return bytes;
}

Result<Message, DecodeError> decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() > kMaxMessageBytes) {
    return DecodeError{DecodeErrorKind::LimitExceeded, kMaxMessageBytes};
  }
  Reader r{bytes};
  if (!r.need(6)) return r.error;
  for (std::size_t i = 0; i < 4; ++i) {
    if (bytes[i] != kMagic[i]) {
      return DecodeError{DecodeErrorKind::UnknownTag, 0};
    }
  }
  if (bytes[4] != kWireVersion) {
    return DecodeError{DecodeErrorKind::UnknownTag, 4};
  }
  std::uint8_t tag_byte = bytes[5];
  bool known = false;
  for (auto t : {MsgTag::JoinReq, MsgTag::JoinAck, MsgTag::Query,
                 MsgTag::Result, MsgTag::ListDirReq, MsgTag::ListDirResp,
                 MsgTag::FileReq, MsgTag::Ping, MsgTag::FileChunk,
                 MsgTag::Pong}) {
    if (tag_byte == static_cast<std::uint8_t>(t)) known = true;
  }
  if (!known) {
    return DecodeError{DecodeErrorKind::UnknownTag, 5};
  }
  r.pos = 6;

  Message m;
  if (!r.u64(m.msg_id)) return r.error;
  std::size_t ttl_at = r.pos;
  if (!r.u8(m.ttl)) return r.error;
  if (m.ttl > kMaxTtl) {
    return DecodeError{DecodeErrorKind::LimitExceeded, ttl_at};
  }
  if (!r.addr(m.src) || !r.domain(m.src_domain)) return r.error;
  if (!decode_payload(r, static_cast<MsgTag>(tag_byte), m.payload)) {
    return r.error;
  }
  if (r.pos != bytes.size()) {
    // Trailing bytes after a well-formed message are a framing violation.
    return DecodeError{DecodeErrorKind::LimitExceeded, r.pos};
  }
  return m;
}

}  // namespace sp2p
