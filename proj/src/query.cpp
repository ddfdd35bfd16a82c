#include "sp2p/query.hpp"

#include <algorithm>

#include "sp2p/search_index.hpp"

namespace sp2p {

std::string to_string(const QueryParseError& e) {
  switch (e.kind) {
    case QueryParseError::Kind::NoAtSign:
      return "expected \"<keywords>@<domain>\"";
    case QueryParseError::Kind::EmptyKeywords:
      return "no usable keywords before '@'";
    case QueryParseError::Kind::BadDomain:
      return std::string("bad domain: ") + to_string(e.domain_error);
  }
  return "bad query";
}

Result<Query, QueryParseError> parse_query(std::string_view input) {
  std::size_t at = input.rfind('@');
  if (at == std::string_view::npos) {
    return QueryParseError{QueryParseError::Kind::NoAtSign};
  }
  Query q;
  q.keywords = tokenize(input.substr(0, at));
  if (q.keywords.empty()) {
    return QueryParseError{QueryParseError::Kind::EmptyKeywords};
  }
  if (q.keywords.size() > kMaxKeywords) q.keywords.resize(kMaxKeywords);
  auto domain = DomainPath::parse(input.substr(at + 1));
  if (!domain) {
    return QueryParseError{QueryParseError::Kind::BadDomain, domain.error()};
  }
  q.target = std::move(domain).value();
  return q;
}

void sort_hits(std::vector<QueryHit>& hits) {
  std::sort(hits.begin(), hits.end(), [](const QueryHit& a, const QueryHit& b) {
    if (a.score_micros != b.score_micros) {
      return a.score_micros > b.score_micros;
    }
    if (a.responder.node != b.responder.node) {
      return a.responder.node < b.responder.node;
    }
    return a.rel_path < b.rel_path;
  });
}

}  // namespace sp2p
