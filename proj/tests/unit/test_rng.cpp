#include <set>

#include "doctest.h"
#include "santa/rng.hpp"

using namespace santa;

TEST_SUITE("rng") {

TEST_CASE("philox4x32-10 known answers") {
  using A4 = std::array<std::uint32_t, 4>;
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are reproducible and path keyed") {
  RngStream a(42), b(42), c(43);
  for (int i = 0; i < 10; ++i) {
    const auto x = a();
    CHECK(x == b());
    CHECK(x != c());
  }
  const RngStream root(7);
  RngStream h0 = root.child(Domain::kHead, 0);
  RngStream h1 = root.child(Domain::kHead, 1);
  RngStream t0 = root.child(Domain::kTile, 0);
  const auto x0 = h0();
  CHECK(x0 != h1());
  CHECK(x0 != t0());
  // Children do not depend on how far the parent has advanced.
  RngStream advanced(7);
  for (int i = 0; i < 5; ++i) advanced();
  CHECK(advanced.child(Domain::kHead, 0)() == x0);
  CHECK(root.child(Domain::kHead, 0).child(Domain::kTile, 3).describe() != root.child(Domain::kHead, 0).describe());
}

TEST_CASE("uniform, below and normal behave") {
  RngStream s(5);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = s.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    const auto k = s.below(7);
    REQUIRE(k < 7);
    const double z = s.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);
  CHECK_THROWS(s.below(0));
}

TEST_CASE("draw n is independent of consumption pattern") {
  RngStream a(9), b(9);
  std::vector<std::uint64_t> xa;
  for (int i = 0; i < 6; ++i) xa.push_back(a());
  for (int i = 0; i < 6; ++i) CHECK(b() == xa[i]);
  CHECK(a.position() == 6);
}

}
