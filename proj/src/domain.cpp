#include "sp2p/domain.hpp"

#include <algorithm>
#include <cctype>

namespace sp2p {

const char* to_string(DomainError e) {
  switch (e) {
    case DomainError::EmptyLabel:
      return "empty label";
    case DomainError::MissingRoot:
      return "first label must be 'all'";
    case DomainError::IllegalChar:
      return "label contains an illegal character";
    case DomainError::TooDeep:
      return "domain exceeds maximum depth";
    case DomainError::LabelTooLong:
      return "label exceeds maximum length";
  }
  return "unknown domain error";
}

namespace {

std::string normalize_label(std::string_view raw) {
  std::size_t b = 0;
  std::size_t e = raw.size();
  while (b < e && std::isspace(static_cast<unsigned char>(raw[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(raw[e - 1]))) --e;
  std::string out(raw.substr(b, e - b));
  for (char& c : out) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

}  // namespace

Result<DomainPath, DomainError> DomainPath::parse(std::string_view text) {
  std::vector<std::string> labels;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == '.') {
      std::string label = normalize_label(text.substr(start, i - start));
      if (label.empty()) return DomainError::EmptyLabel;
      if (label.size() > kMaxLabelLen) return DomainError::LabelTooLong;
      for (char c : label) {
        // '.' cannot appear (it is the separator); '@' is reserved by the
        // query syntax and control bytes are never legal.
        if (c == '@' || static_cast<unsigned char>(c) < 0x20) {
          return DomainError::IllegalChar;
        }
      }
      labels.push_back(std::move(label));
      start = i + 1;
    }
  }
  if (labels.front() != "all") return DomainError::MissingRoot;
  if (labels.size() - 1 > kMaxDepth) return DomainError::TooDeep;
  return DomainPath(std::move(labels));
}

std::string DomainPath::str() const {
  std::string out = labels_.front();
  for (std::size_t i = 1; i < labels_.size(); ++i) {
    out += '.';
    out += labels_[i];
  }
  return out;
}

DomainPath DomainPath::prefix(std::size_t n_labels) const {
  n_labels = std::max<std::size_t>(1, std::min(n_labels, labels_.size()));
  return DomainPath(
      std::vector<std::string>(labels_.begin(), labels_.begin() + n_labels));
}

std::size_t common_prefix_len(const DomainPath& a, const DomainPath& b) {
  const auto& la = a.labels();
  const auto& lb = b.labels();
  std::size_t n = std::min(la.size(), lb.size());
  std::size_t i = 0;
  while (i < n && la[i] == lb[i]) ++i;
  return i;
}

bool is_ancestor_or_self(const DomainPath& a, const DomainPath& b) {
  return a.labels().size() <= b.labels().size() &&
         common_prefix_len(a, b) == a.labels().size();
}

std::size_t domain_distance(const DomainPath& a, const DomainPath& b) {
  std::size_t cpl = common_prefix_len(a, b);
  return (a.labels().size() - cpl) + (b.labels().size() - cpl);
}

}  // namespace sp2p
