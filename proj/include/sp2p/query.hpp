#ifndef SP2P_QUERY_HPP
#define SP2P_QUERY_HPP

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sp2p/domain.hpp"
#include "sp2p/result.hpp"
#include "sp2p/wire.hpp"

namespace sp2p {

struct Query {
  std::vector<std::string> keywords;
  DomainPath target;
  SearchMode mode = SearchMode::Or;
  std::uint16_t per_node_k = 10;
};

struct QueryParseError {
  enum class Kind { NoAtSign, EmptyKeywords, BadDomain };
  Kind kind;
  DomainError domain_error = DomainError::EmptyLabel;  // set for BadDomain
};

std::string to_string(const QueryParseError& e);

// Splits "<keywords>@<domain>" at the last '@' (keywords may contain '@'
// themselves), tokenizes the keyword half and parses the domain half.
Result<Query, QueryParseError> parse_query(std::string_view input);

// One entry of a merged query answer.
struct QueryHit {
  NodeAddr responder;
  std::string rel_path;
  std::int64_t score_micros = 0;
  std::uint64_t size = 0;
  std::string snippet;

  friend bool operator==(const QueryHit&, const QueryHit&) = default;
};

// Canonical presentation order: score descending, then responder id
// ascending, then path ascending.
void sort_hits(std::vector<QueryHit>& hits);

struct QueryOutcome {
  std::vector<QueryHit> hits;
  std::size_t responders = 0;  // nodes that served (dead ends excluded)
  bool dead_end = false;       // some branch reported no route
  bool complete = false;       // closed by expected-count rather than timer
  std::uint64_t duration = 0;  // ticks or ms, per environment
};

}  // namespace sp2p

#endif  // SP2P_QUERY_HPP
