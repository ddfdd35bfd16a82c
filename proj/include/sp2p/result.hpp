#ifndef SP2P_RESULT_HPP
#define SP2P_RESULT_HPP

#include <cassert>
#include <type_traits>
#include <utility>
#include <variant>

namespace sp2p {

// Minimal ok-or-error holder used on parse/decode/IO paths where failure is
// expected and must carry a diagnostic. Exceptions stay reserved for
// programming errors.
template <typename T, typename E>
class Result {
 public:
  // Implicit conversions only make sense while the two sides are distinct
  // types; Result<string, string> must go through ok() / err().
  Result(T value)
    requires(!std::is_same_v<T, E>)
      : v_(std::in_place_index<0>, std::move(value)) {}
  template <int = 0>  // distinct declaration from Result(T) when T == E
  Result(E error)
    requires(!std::is_same_v<T, E>)
      : v_(std::in_place_index<1>, std::move(error)) {}

  static Result ok(T value) {
    return Result(std::in_place_index<0>, std::move(value));
  }
  static Result err(E error) {
    return Result(std::in_place_index<1>, std::move(error));
  }

  bool is_ok() const { return v_.index() == 0; }
  bool is_err() const { return v_.index() == 1; }
  explicit operator bool() const { return is_ok(); }

  T& value() & {
    assert(is_ok());
    return std::get<0>(v_);
  }
  const T& value() const& {
    assert(is_ok());
    return std::get<0>(v_);
  }
  T&& value() && {
    assert(is_ok());
    return std::get<0>(std::move(v_));
  }

  E& error() & {
    assert(is_err());
    return std::get<1>(v_);
  }
  const E& error() const& {
    assert(is_err());
    return std::get<1>(v_);
  }

  T value_or(T fallback) const& {
    return is_ok() ? std::get<0>(v_) : std::move(fallback);
  }

 private:
  template <std::size_t I, typename V>
  Result(std::in_place_index_t<I> tag, V&& v) : v_(tag, std::forward<V>(v)) {}

  std::variant<T, E> v_;
};

// Unit type for Result<Unit, E> where success carries no payload.
struct Unit {
  friend bool operator==(Unit, Unit) { return true; }
};

}  // namespace sp2p

#endif  // SP2P_RESULT_HPP
