#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

namespace chordmob {

// Unique identifier of a mobile node: "name:device:id".
struct Uid {
  std::string name;
  std::string device;
  std::string id;

  std::string canonical() const { return name + ":" + device + ":" + id; }

  friend bool operator==(const Uid&, const Uid&) = default;
};

// Accepts whitespace around each part; throws Error{malformed_uid} when the
// text does not split into exactly three non-empty parts.
Uid parse_uid(std::string_view text);

// Temporary locator: an IPv4-style address issued by an access network.
struct Locator {
  std::uint32_t address = 0;
  int network_id = 0;

  std::string to_string() const;

  friend bool operator==(const Locator&, const Locator&) = default;
  friend auto operator<=>(const Locator&, const Locator&) = default;
};

Locator parse_locator(std::string_view dotted_quad, int network_id);
Locator make_locator(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d, int network_id);

// Position on the 2^bits identifier circle. All arithmetic wraps modulo 2^bits.
class NodeId {
 public:
  static constexpr unsigned kMaxBits = 64;

  constexpr NodeId() = default;
  NodeId(std::uint64_t value, unsigned bits);

  constexpr std::uint64_t value() const { return value_; }
  constexpr unsigned bits() const { return bits_; }

  std::uint64_t mask() const { return mask_for(bits_); }

  // this + delta (mod 2^bits)
  NodeId plus(std::uint64_t delta) const;
  // Clockwise distance from this to other.
  std::uint64_t distance_to(NodeId other) const;

  static std::uint64_t mask_for(unsigned bits) {
    return bits >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << bits) - 1;
  }

  friend bool operator==(NodeId a, NodeId b) { return a.value_ == b.value_; }
  friend auto operator<=>(NodeId a, NodeId b) { return a.value_ <=> b.value_; }

 private:
  std::uint64_t value_ = 0;
  unsigned bits_ = 1;
};

// SHA-1 of the canonical form, truncated to the low `bits` bits of the digest
// read as a big-endian integer.
NodeId hash_to_id(const Uid& uid, unsigned bits);
NodeId hash_to_id(std::string_view text, unsigned bits);

}  // namespace chordmob

template <>
struct std::hash<chordmob::NodeId> {
  std::size_t operator()(chordmob::NodeId id) const noexcept {
    return std::hash<std::uint64_t>{}(id.value());
  }
};
