#ifndef SP2P_WIRE_HPP
#define SP2P_WIRE_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sp2p/domain.hpp"
#include "sp2p/result.hpp"

namespace sp2p {

using NodeId = std::uint64_t;

// Ids with this bit set belong to transient clients (one-shot CLI tools).
// They send requests and receive replies like anyone else, but are never
// inserted into route tables: they will be gone in a moment, and routing
// through them would strand queries.
inline constexpr NodeId kTransientIdBit = 1ULL << 63;

// --- Frame layout -----------------------------------------------------------
//
// Every datagram is one message:
//
//   magic   "SP2P"            4 bytes
//   version 0x01              1 byte
//   tag     MsgTag            1 byte
//   msg_id  u64 big-endian    8 bytes
//   ttl     u8 (0..64)        1 byte
//   src     NodeAddr          id u64 + endpoint string
//   src_domain                string (canonical domain text)
//   payload                   tag-specific
//
// Strings are u16 big-endian length followed by that many bytes of UTF-8.
// Lists are u16 big-endian count followed by the elements. An encoded
// message never exceeds kMaxMessageBytes.

inline constexpr std::array<std::uint8_t, 4> kMagic = {'S', 'P', '2', 'P'};
inline constexpr std::uint8_t kWireVersion = 0x01;
inline constexpr std::size_t kMaxMessageBytes = 64 * 1024;
inline constexpr std::size_t kMaxStringBytes = 1024;
inline constexpr std::uint8_t kMaxTtl = 64;
inline constexpr std::size_t kFileChunkBytes = 8192;
inline constexpr std::size_t kMaxKeywords = 64;
inline constexpr std::size_t kMaxHits = 128;
inline constexpr std::size_t kMaxPeerList = 512;
inline constexpr std::size_t kMaxDirEntries = 512;
inline constexpr std::size_t kMaxFileOffsets = 64;
inline constexpr std::size_t kSnippetBytes = 160;

enum class MsgTag : std::uint8_t {
  JoinReq = 0x01,
  JoinAck = 0x02,
  Query = 0x03,
  Result = 0x04,
  ListDirReq = 0x05,
  ListDirResp = 0x06,
  FileReq = 0x07,
  Ping = 0x08,
  FileChunk = 0x09,
  Pong = 0x0A,
};

const char* to_string(MsgTag tag);

enum class SearchMode : std::uint8_t { Or = 0, And = 1 };

// Status byte carried by file/listing replies.
enum class ServeStatus : std::uint8_t {
  Ok = 0,
  NotFound = 1,
  OutsideSandbox = 2,
  ReadError = 3,
  BadOffset = 4,
};

const char* to_string(ServeStatus s);

struct NodeAddr {
  NodeId node = 0;
  std::string endpoint;  // transport address, e.g. "127.0.0.1:7001" or "sim:3"

  friend bool operator==(const NodeAddr&, const NodeAddr&) = default;
};

struct PeerInfo {
  NodeAddr addr;
  DomainPath domain;

  friend bool operator==(const PeerInfo&, const PeerInfo&) = default;
};

// --- Payloads ---------------------------------------------------------------

struct JoinReq {
  PeerInfo joiner;
  // A join is first routed greedily toward the joiner's domain; the node
  // where routing stops acknowledges and re-issues the request with the
  // flood flag set so the rest of the overlay learns the newcomer.
  bool flood = false;

  friend bool operator==(const JoinReq&, const JoinReq&) = default;
};

struct JoinAck {
  std::vector<PeerInfo> members;  // sender's own leaf group
  std::vector<PeerInfo> routes;   // everything else the sender knows

  friend bool operator==(const JoinAck&, const JoinAck&) = default;
};

struct QueryMsg {
  DomainPath target;
  std::vector<std::string> keywords;
  SearchMode mode = SearchMode::Or;
  std::uint16_t per_node_k = 10;

  friend bool operator==(const QueryMsg&, const QueryMsg&) = default;
};

struct WireHit {
  std::string rel_path;
  std::int64_t score_micros = 0;
  std::uint64_t size = 0;
  std::string snippet;

  friend bool operator==(const WireHit&, const WireHit&) = default;
};

struct ResultMsg {
  NodeAddr responder;
  std::vector<WireHit> hits;
  // Set when the sender could not serve or forward the query; such a reply
  // carries no hits and does not count as a serving responder.
  bool dead_end = false;

  friend bool operator==(const ResultMsg&, const ResultMsg&) = default;
};

struct ListDirReq {
  std::string rel_path;  // ""  means the sandbox root

  friend bool operator==(const ListDirReq&, const ListDirReq&) = default;
};

struct WireDirEntry {
  std::string name;
  std::uint8_t kind = 0;  // 0 = file, 1 = directory
  std::uint64_t size = 0;

  friend bool operator==(const WireDirEntry&, const WireDirEntry&) = default;
};

struct ListDirResp {
  ServeStatus status = ServeStatus::Ok;
  std::vector<WireDirEntry> entries;

  friend bool operator==(const ListDirResp&, const ListDirResp&) = default;
};

struct FileReq {
  std::uint64_t session = 0;
  std::string rel_path;
  std::vector<std::uint64_t> offsets;  // chunk-aligned byte offsets

  friend bool operator==(const FileReq&, const FileReq&) = default;
};

struct FileChunk {
  std::uint64_t session = 0;
  ServeStatus status = ServeStatus::Ok;
  std::uint64_t offset = 0;
  std::uint64_t file_size = 0;
  bool eof = false;
  // SHA-256 of the whole file, sent with the chunk at offset 0 so the
  // fetcher can verify the assembled bytes.
  bool has_digest = false;
  std::array<std::uint8_t, 32> digest{};
  std::vector<std::uint8_t> data;

  friend bool operator==(const FileChunk&, const FileChunk&) = default;
};

struct Ping {
  friend bool operator==(const Ping&, const Ping&) = default;
};

struct Pong {
  friend bool operator==(const Pong&, const Pong&) = default;
};

using Payload = std::variant<JoinReq, JoinAck, QueryMsg, ResultMsg, ListDirReq,
                             ListDirResp, FileReq, FileChunk, Ping, Pong>;

struct Message {
  std::uint64_t msg_id = 0;
  std::uint8_t ttl = 0;
  // Originator of the message. Forwarding never re-stamps src, so replies
  // can go straight back and (src.node, msg_id) identifies a message
  // network-wide for duplicate suppression.
  NodeAddr src;
  DomainPath src_domain;
  Payload payload;

  MsgTag tag() const;

  friend bool operator==(const Message&, const Message&) = default;
};

// --- Codec ------------------------------------------------------------------

enum class EncodeErrorKind { Oversize, InvalidField };

struct EncodeError {
  EncodeErrorKind kind;
  std::string detail;
};

enum class DecodeErrorKind { Truncated, UnknownTag, BadUtf8, LimitExceeded };

const char* to_string(DecodeErrorKind k);

struct DecodeError {
  DecodeErrorKind kind;
  std::size_t offset = 0;  // byte position where decoding failed

  friend bool operator==(const DecodeError&, const DecodeError&) = default;
};

Result<std::vector<std::uint8_t>, EncodeError> encode(const Message& m);
Result<Message, DecodeError> decode(std::span<const std::uint8_t> bytes);

// True for a structurally valid UTF-8 sequence (rejects overlong forms,
// surrogates and out-of-range code points).
bool is_valid_utf8(std::string_view s);

}  // namespace sp2p

#endif  // SP2P_WIRE_HPP
