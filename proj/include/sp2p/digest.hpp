#ifndef SP2P_DIGEST_HPP
#define SP2P_DIGEST_HPP

#include <array>
#include <cstdint>
#include <span>
#include <string>

namespace sp2p {

using Sha256 = std::array<std::uint8_t, 32>;

Sha256 sha256(std::span<const std::uint8_t> data);
Sha256 sha256(std::string_view data);

std::string hex(std::span<const std::uint8_t> data);

}  // namespace sp2p

#endif  // SP2P_DIGEST_HPP
