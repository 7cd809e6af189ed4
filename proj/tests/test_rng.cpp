#include <doctest.h>

#include <cmath>
#include <vector>
#include <set>

#include "noisegeom/rng.hpp"

using namespace noisegeom;

TEST_CASE("philox known answers") {
  using A4 = std::array<std::uint32_t, 4>;
  using A2 = std::array<std::uint32_t, 2>;
  CHECK(philox4x32_10(A4{0, 0, 0, 0}, A2{0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32_10(A4{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, A2{0xffffffff, 0xffffffff}) ==
        A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32_10(A4{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, A2{0xa4093822, 0x299f31d0}) ==
        A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are reproducible and distinct") {
  RngStream a(7, 3);
  RngStream b(7, 3);
  RngStream c(7, 4);
  RngStream d(8, 3);
  bool differs_c = false;
  bool differs_d = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs_c |= x != c.next_u64();
    differs_d |= x != d.next_u64();
  }
  CHECK(differs_c);
  CHECK(differs_d);
}

TEST_CASE("substreams are fixed and independent of parent position") {
  RngStream parent(11, 1);
  RngStream first = parent.substream(5);
  parent.next_u64();
  parent.normal();
  RngStream second = parent.substream(5);
  for (int i = 0; i < 20; ++i) CHECK(first.next_u64() == second.next_u64());
  RngStream other = RngStream(11, 1).substream(6);
  CHECK(RngStream(11, 1).substream(5).next_u64() != other.next_u64());
}

TEST_CASE("uniform lies in the open unit interval with mean one half") {
  RngStream rng(1, 0);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / n - 0.5) < 5.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST_CASE("normal moments") {
  RngStream rng(2, 0);
  const int n = 200000;
  double s1 = 0.0;
  double s2 = 0.0;
  double s4 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s1 += z;
    s2 += z * z;
    s4 += z * z * z * z;
  }
  CHECK(std::abs(s1 / n) < 0.015);
  CHECK(std::abs(s2 / n - 1.0) < 0.02);
  CHECK(std::abs(s4 / n - 3.0) < 0.1);
}

TEST_CASE("index covers its range uniformly") {
  RngStream rng(3, 0);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) {
    const auto k = rng.index(7);
    REQUIRE(k < 7);
    ++counts[k];
  }
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}
