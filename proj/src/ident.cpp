#include "chordmob/ident.hpp"

#include <openssl/sha.h>

#include <array>
#include <charconv>
#include <vector>

#include "chordmob/error.hpp"

namespace chordmob {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::malformed_uid: return "malformed-uid";
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::lookup_timeout: return "lookup-timeout";
    case Errc::join_failed: return "join-failed";
    case Errc::publish_failed: return "publish-failed";
    case Errc::not_found: return "not-found";
    case Errc::stale_phase: return "stale-phase";
    case Errc::init_timeout: return "init-timeout";
    case Errc::asconf_timeout: return "asconf-timeout";
    case Errc::not_established: return "not-established";
    case Errc::config_invalid: return "config-invalid";
    case Errc::io_error: return "io-error";
  }
  return "unknown";
}

namespace {

std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n";
  const auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(ws);
  return s.substr(first, last - first + 1);
}

}  // namespace

Uid parse_uid(std::string_view text) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto colon = text.find(':', start);
    parts.push_back(trim(text.substr(start, colon - start)));
    if (colon == std::string_view::npos) break;
    start = colon + 1;
  }
  if (parts.size() != 3) {
    throw Error(Errc::malformed_uid,
                "expected 3 parts, got " + std::to_string(parts.size()) + " in '" + std::string(text) + "'");
  }
  for (auto p : parts) {
    if (p.empty()) throw Error(Errc::malformed_uid, "empty part in '" + std::string(text) + "'");
  }
  return Uid{std::string(parts[0]), std::string(parts[1]), std::string(parts[2])};
}

std::string Locator::to_string() const {
  return std::to_string((address >> 24) & 0xff) + "." + std::to_string((address >> 16) & 0xff) + "." +
         std::to_string((address >> 8) & 0xff) + "." + std::to_string(address & 0xff);
}

Locator make_locator(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d, int network_id) {
  return Locator{(std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) | (std::uint32_t{c} << 8) | d, network_id};
}

Locator parse_locator(std::string_view dotted_quad, int network_id) {
  std::uint32_t address = 0;
  const char* p = dotted_quad.data();
  const char* end = p + dotted_quad.size();
  for (int octet = 0; octet < 4; ++octet) {
    unsigned v = 0;
    auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc{} || next == p || next - p > 3 || v > 255) {
      throw Error(Errc::invalid_argument, "bad address '" + std::string(dotted_quad) + "'");
    }
    address = (address << 8) | v;
    p = next;
    if (octet < 3) {
      if (p == end || *p != '.') throw Error(Errc::invalid_argument, "bad address '" + std::string(dotted_quad) + "'");
      ++p;
    }
  }
  if (p != end) throw Error(Errc::invalid_argument, "bad address '" + std::string(dotted_quad) + "'");
  return Locator{address, network_id};
}

NodeId::NodeId(std::uint64_t value, unsigned bits) : value_(value), bits_(bits) {
  if (bits == 0 || bits > kMaxBits) throw Error(Errc::invalid_argument, "identifier bits out of range");
  if ((value & ~mask_for(bits)) != 0) throw Error(Errc::invalid_argument, "identifier exceeds 2^m");
}

NodeId NodeId::plus(std::uint64_t delta) const {
  NodeId r;
  r.bits_ = bits_;
  r.value_ = (value_ + delta) & mask();
  return r;
}

std::uint64_t NodeId::distance_to(NodeId other) const { return (other.value_ - value_) & mask(); }

NodeId hash_to_id(std::string_view text, unsigned bits) {
  if (bits == 0 || bits > NodeId::kMaxBits) throw Error(Errc::invalid_argument, "m must be in [1, 64]");
  std::array<unsigned char, SHA_DIGEST_LENGTH> digest{};
  SHA1(reinterpret_cast<const unsigned char*>(text.data()), text.size(), digest.data());
  // Low 64 bits of the big-endian digest are its last eight bytes.
  std::uint64_t low = 0;
  for (std::size_t i = SHA_DIGEST_LENGTH - 8; i < SHA_DIGEST_LENGTH; ++i) low = (low << 8) | digest[i];
  return NodeId(low & NodeId::mask_for(bits), bits);
}

NodeId hash_to_id(const Uid& uid, unsigned bits) { return hash_to_id(uid.canonical(), bits); }

}  // namespace chordmob
