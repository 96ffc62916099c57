#include <doctest.h>

#include <cmath>

#include "vpfp/rng.hpp"

using namespace vpfp;

TEST_SUITE("rng") {
  TEST_CASE("philox4x32-10 known-answer vectors") {
    CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
  }

  TEST_CASE("a stream key always yields the same sequence") {
    CounterRng a({42, StreamLabel::noise, 7, 3});
    CounterRng b({42, StreamLabel::noise, 7, 3});
    for (int i = 0; i < 100; ++i) CHECK(a() == b());
  }

  TEST_CASE("distinct labels, indices and steps give distinct streams") {
    const auto first = [](StreamKey k) { return CounterRng(k)(); };
    const auto base = first({1, StreamLabel::noise, 0, 0});
    CHECK(base != first({1, StreamLabel::initial, 0, 0}));
    CHECK(base != first({1, StreamLabel::noise, 1, 0}));
    CHECK(base != first({1, StreamLabel::noise, 0, 1}));
    CHECK(base != first({2, StreamLabel::noise, 0, 0}));
  }

  TEST_CASE("uniform stays in the open unit interval and normals are standard") {
    CounterRng rng({9, StreamLabel::test, 0, 0});
    double sum = 0.0, sum2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double u = rng.uniform();
      REQUIRE(u > 0.0);
      REQUIRE(u < 1.0);
      const double z = rng.normal();
      sum += z;
      sum2 += z * z;
    }
    CHECK(std::abs(sum / n) < 4.0 / std::sqrt(n));
    CHECK(sum2 / n == doctest::Approx(1.0).epsilon(0.02));
    CHECK(to_open_unit(0) > 0.0);
    CHECK(to_open_unit(~0ULL) < 1.0);
  }
}
