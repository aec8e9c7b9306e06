#include "chordmob/ident.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "chordmob/error.hpp"

using namespace chordmob;

TEST(ParseUid, ExampleWithSpaces) {
  const Uid u = parse_uid("xyz: laptop: 17301xxxx");
  EXPECT_EQ(u.name, "xyz");
  EXPECT_EQ(u.device, "laptop");
  EXPECT_EQ(u.id, "17301xxxx");
  EXPECT_EQ(u.canonical(), "xyz:laptop:17301xxxx");
}

TEST(ParseUid, CompactForm) {
  const Uid u = parse_uid("xyz:laptop:17301xxxx");
  EXPECT_EQ(u, (Uid{"xyz", "laptop", "17301xxxx"}));
}

TEST(ParseUid, RoundTrip) {
  const Uid u = parse_uid("a:b:c");
  EXPECT_EQ(u, (Uid{"a", "b", "c"}));
  EXPECT_EQ(u.canonical(), "a:b:c");
  EXPECT_EQ(parse_uid(u.canonical()), u);
}

TEST(ParseUid, Malformed) {
  for (const char* bad : {"xyz:laptop", "a:b:c:d", "", ":b:c", "a: :c", "a:b:", "abc"}) {
    try {
      parse_uid(bad);
      FAIL() << "accepted '" << bad << "'";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::malformed_uid) << bad;
    }
  }
}

TEST(ParseUid, CanonicalizationIsIdempotent) {
  std::mt19937 rng(7);
  const std::string alphabet = "abcXYZ019_-.";
  for (int i = 0; i < 200; ++i) {
    auto part = [&] {
      std::string s(1 + rng() % 6, 'a');
      for (char& c : s) c = alphabet[rng() % alphabet.size()];
      return s;
    };
    const std::string pad(rng() % 3, ' ');
    const std::string text = pad + part() + pad + ":" + part() + ":" + pad + part();
    const Uid once = parse_uid(text);
    EXPECT_EQ(parse_uid(once.canonical()), once);
    EXPECT_EQ(parse_uid(once.canonical()).canonical(), once.canonical());
  }
}

TEST(Locator, DottedQuad) {
  const Locator l = parse_locator("192.168.1.20", 1);
  EXPECT_EQ(l.to_string(), "192.168.1.20");
  EXPECT_EQ(l, make_locator(192, 168, 1, 20, 1));
  EXPECT_THROW(parse_locator("192.168.1", 1), Error);
  EXPECT_THROW(parse_locator("192.168.1.256", 1), Error);
  EXPECT_THROW(parse_locator("1.2.3.4.5", 1), Error);
}

TEST(NodeId, RangeAndWrap) {
  EXPECT_THROW(NodeId(32, 5), Error);
  EXPECT_THROW(NodeId(0, 0), Error);
  const NodeId a(30, 5);
  EXPECT_EQ(a.plus(4).value(), 2u);
  EXPECT_EQ(a.distance_to(NodeId(2, 5)), 4u);
  EXPECT_EQ(NodeId(2, 5).distance_to(a), 28u);
}

TEST(HashToId, DeterministicAndInRange) {
  const Uid u{"xyz", "laptop", "17301xxxx"};
  EXPECT_EQ(hash_to_id(u, 16), hash_to_id(u, 16));
  for (unsigned m = 1; m <= 8; ++m) EXPECT_LT(hash_to_id(u, m).value(), 1u << m);
  EXPECT_LE(hash_to_id(u, 5).value(), 31u);
}

TEST(HashToId, KnownDigest) {
  // SHA-1("abc") = a9993e36 4706816a ba3e2571 7850c26c 9cd0d89d
  EXPECT_EQ(hash_to_id(std::string_view("abc"), 32).value(), 0x9cd0d89dULL);
  EXPECT_EQ(hash_to_id(std::string_view("abc"), 64).value(), 0x7850c26c9cd0d89dULL);
}

TEST(HashToId, LowBitPrefixProperty) {
  std::mt19937 rng(11);
  for (int i = 0; i < 300; ++i) {
    const Uid u{"n" + std::to_string(rng()), "phone", std::to_string(rng())};
    const auto full = hash_to_id(u, 64).value();
    for (unsigned m = 1; m < 64; m += 7) {
      EXPECT_EQ(hash_to_id(u, m).value(), full & ((std::uint64_t{1} << m) - 1));
    }
  }
}

TEST(HashToId, RejectsWidthBeyondStorage) {
  EXPECT_THROW(hash_to_id(Uid{"a", "b", "c"}, 65), Error);
  EXPECT_THROW(hash_to_id(Uid{"a", "b", "c"}, 0), Error);
}

TEST(HashToId, CollisionsMatchBirthdayBound) {
  constexpr int kSample = 1000;
  constexpr unsigned kBits = 16;
  std::mt19937_64 rng(2024);
  std::vector<std::uint64_t> ids;
  for (int i = 0; i < kSample; ++i) {
    ids.push_back(hash_to_id(Uid{"user" + std::to_string(rng()), "laptop", std::to_string(i)}, kBits).value());
  }
  // Brute-force pairwise count.
  int collisions = 0;
  for (int i = 0; i < kSample; ++i) {
    for (int j = i + 1; j < kSample; ++j) collisions += ids[i] == ids[j];
  }
  // Each of the C(n,2) pairs collides with probability 2^-m independently
  // enough for a binomial bound.
  const double pairs = kSample * (kSample - 1) / 2.0;
  const double p = 1.0 / (1u << kBits);
  const double mean = pairs * p;
  const double sigma = std::sqrt(pairs * p * (1 - p));
  EXPECT_NEAR(collisions, mean, 3 * sigma) << "mean " << mean << " sigma " << sigma;
}
