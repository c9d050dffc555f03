#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "amlmc/rng.hpp"

using namespace amlmc;
using Catch::Matchers::WithinAbs;

TEST_CASE("philox4x32-10 matches the published known-answer vectors") {
  using detail::philox4x32_10;
  CHECK(philox4x32_10({0, 0, 0, 0}, 0) == detail::PhiloxBlock{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, 0xffffffffffffffffULL) ==
        detail::PhiloxBlock{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, 0x299f31d0a4093822ULL) ==
        detail::PhiloxBlock{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("open_unit stays strictly inside (0, 1)") {
  CHECK(detail::open_unit(0) > 0.0);
  CHECK(detail::open_unit(~std::uint64_t{0}) < 1.0);
}

TEST_CASE("a stream is a pure function of its key") {
  const StreamKey key{42, 3, 17, StreamPurpose::BridgeNoise};
  GaussianStream a(key), b(key);
  for (int i = 0; i < 100; ++i) REQUIRE(a.normal() == b.normal());
  CHECK(a.draws_consumed() == 100);
}

TEST_CASE("every key component selects a different stream") {
  const StreamKey base{42, 3, 17, StreamPurpose::InitialIncrements};
  const double x = GaussianStream(base).normal();
  auto first = [](StreamKey k) { return GaussianStream(k).normal(); };
  StreamKey k = base;
  k.seed = 43;
  CHECK(first(k) != x);
  k = base;
  k.level = 4;
  CHECK(first(k) != x);
  k = base;
  k.sample_index = 18;
  CHECK(first(k) != x);
  k = base;
  k.purpose = StreamPurpose::BridgeNoise;
  CHECK(first(k) != x);
  k.purpose = StreamPurpose::Auxiliary;
  CHECK(first(k) != x);
}

TEST_CASE("draw slot k does not depend on the kind of earlier draws") {
  const StreamKey key{7, 0, 5, StreamPurpose::Auxiliary};
  GaussianStream a(key), b(key);
  a.normal();
  b.uniform();
  CHECK(a.normal() == b.normal());
  a.uniform();
  b.normal();
  CHECK(a.uniform() == b.uniform());
}

TEST_CASE("normal and uniform draws have the right low moments") {
  GaussianStream s({1, 0, 0, StreamPurpose::InitialIncrements});
  const int n = 200000;
  double m1 = 0, m2 = 0, m4 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = s.normal();
    m1 += z, m2 += z * z, m4 += z * z * z * z;
  }
  CHECK_THAT(m1 / n, WithinAbs(0.0, 0.01));
  CHECK_THAT(m2 / n, WithinAbs(1.0, 0.015));
  CHECK_THAT(m4 / n, WithinAbs(3.0, 0.08));

  GaussianStream u({1, 0, 0, StreamPurpose::Auxiliary});
  double s1 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = u.uniform();
    REQUIRE((x > 0.0 && x < 1.0));
    s1 += x;
  }
  CHECK_THAT(s1 / n, WithinAbs(0.5, 0.005));
}

TEST_CASE("neighbouring sample indices give uncorrelated draws") {
  const int n = 50000;
  double sxy = 0;
  for (int i = 0; i < n; ++i) {
    const double x = GaussianStream({9, 2, static_cast<std::uint64_t>(2 * i), StreamPurpose::InitialIncrements}).normal();
    const double y =
        GaussianStream({9, 2, static_cast<std::uint64_t>(2 * i + 1), StreamPurpose::InitialIncrements}).normal();
    sxy += x * y;
  }
  CHECK_THAT(sxy / n, WithinAbs(0.0, 0.02));
}

TEST_CASE("SampleStreams wires the three purposes") {
  auto s = SampleStreams::make(5, 2, 11);
  CHECK(s.increments.normal() == GaussianStream({5, 2, 11, StreamPurpose::InitialIncrements}).normal());
  CHECK(s.bridge.normal() == GaussianStream({5, 2, 11, StreamPurpose::BridgeNoise}).normal());
  CHECK(s.auxiliary.uniform() == GaussianStream({5, 2, 11, StreamPurpose::Auxiliary}).uniform());
}
