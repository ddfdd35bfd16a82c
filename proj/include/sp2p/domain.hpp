#ifndef SP2P_DOMAIN_HPP
#define SP2P_DOMAIN_HPP

#include <compare>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "sp2p/result.hpp"

namespace sp2p {

enum class DomainError {
  EmptyLabel,
  MissingRoot,
  IllegalChar,
  TooDeep,
  LabelTooLong,
};

const char* to_string(DomainError e);

// A path in the domain tree, e.g. "all.education.cs". The first label is
// always the root "all"; depth counts the labels below it. Labels are
// normalized on parse: surrounding whitespace trimmed, ASCII letters
// lowercased. Internal spaces are legal ("operating systems").
class DomainPath {
 public:
  static constexpr std::size_t kMaxDepth = 16;
  static constexpr std::size_t kMaxLabelLen = 64;

  // Default construction yields the root path "all".
  DomainPath() : labels_{"all"} {}

  static DomainPath root() { return DomainPath(); }
  static Result<DomainPath, DomainError> parse(std::string_view text);

  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t depth() const { return labels_.size() - 1; }

  // Canonical dotted form; parse(str()) round-trips exactly.
  std::string str() const;

  // Ancestor made of the first n_labels labels (clamped to [1, size]).
  DomainPath prefix(std::size_t n_labels) const;

  friend bool operator==(const DomainPath& a, const DomainPath& b) {
    return a.labels_ == b.labels_;
  }
  friend std::strong_ordering operator<=>(const DomainPath& a,
                                          const DomainPath& b) {
    return a.labels_ <=> b.labels_;
  }

 private:
  explicit DomainPath(std::vector<std::string> labels)
      : labels_(std::move(labels)) {}

  std::vector<std::string> labels_;
};

// Number of leading labels shared by both paths. Always >= 1 for two valid
// paths since both start at the root.
std::size_t common_prefix_len(const DomainPath& a, const DomainPath& b);

// True when `a` lies on the path from the root to `b`, inclusive.
bool is_ancestor_or_self(const DomainPath& a, const DomainPath& b);

// Hop count between the two vertices in the domain tree: up from `a` to the
// deepest common ancestor, then down to `b`.
std::size_t domain_distance(const DomainPath& a, const DomainPath& b);

}  // namespace sp2p

#endif  // SP2P_DOMAIN_HPP
