#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <vector>

#include "amlmc/rng.hpp"
#include "amlmc/wiener_path.hpp"

using namespace amlmc;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

GaussianStream stream(std::uint64_t sample, StreamPurpose purpose = StreamPurpose::InitialIncrements) {
  return GaussianStream({123, 0, sample, purpose});
}

}  // namespace

TEST_CASE("mesh construction validates its points") {
  CHECK_THROWS_AS(Mesh({0.0}), UsageError);
  CHECK_THROWS_AS(Mesh({0.1, 1.0}), UsageError);
  CHECK_THROWS_AS(Mesh({0.0, 0.5, 0.5, 1.0}), UsageError);
  CHECK_THROWS_AS(Mesh({0.0, 0x1.0p-53, 1.0}), UsageError);
  CHECK_THROWS_AS(Mesh::uniform(0, 1.0), UsageError);

  const Mesh m = Mesh::uniform(4, 1.0);
  CHECK(m.intervals() == 4);
  CHECK(m.horizon() == 1.0);
  CHECK(m.step(2) == 0.25);
  CHECK(m.max_step() == 0.25);
  CHECK(m.min_step() == 0.25);
}

TEST_CASE("uniform dyadic meshes are nested bit for bit") {
  for (double T : {1.0, 0.3, 2.5}) {
    for (std::size_t n = 1; n <= 512; n *= 2) {
      INFO("T=" << T << " n=" << n);
      CHECK(Mesh::uniform(2 * n, T).contains(Mesh::uniform(n, T)));
    }
  }
  CHECK_FALSE(Mesh::uniform(3, 1.0).contains(Mesh::uniform(2, 1.0)));
}

TEST_CASE("initial path increments are sqrt(dt) times the stream's normals") {
  const Mesh mesh({0.0, 0.25, 0.75, 1.0});
  auto src = stream(1);
  const auto path = sample_initial_path<2>(mesh, src);
  auto ref = stream(1);
  CHECK(path.values[0] == Vec<2>{0.0, 0.0});
  for (std::size_t n = 0; n < 3; ++n) {
    const auto dw = path.increment(n);
    for (std::size_t k = 0; k < 2; ++k)
      CHECK_THAT(dw[k], WithinRel(std::sqrt(mesh.step(n)) * ref.normal(), 1e-14));
  }
}

TEST_CASE("bridge insertion followed by restriction is the identity") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto inc = stream(seed);
    auto bridge = stream(seed, StreamPurpose::BridgeNoise);
    const auto original = sample_initial_path<3>(Mesh::uniform(5, 1.0), inc);
    auto refined = original;
    for (int i = 0; i < 40; ++i) {
      const std::size_t interval = (static_cast<std::size_t>(i) * 7 + seed) % refined.mesh.intervals();
      REQUIRE(try_bridge_insert(refined, interval, bridge));
    }
    REQUIRE(refined.mesh.intervals() == 45);
    REQUIRE(refined.mesh.contains(original.mesh));
    CHECK(restrict_to(refined, original.mesh) == original);
    CHECK(refined.terminal() == original.terminal());
  }
}

TEST_CASE("bridge midpoint has mean (W_l + W_r)/2 and variance dt/4") {
  const double dt = 0.37;
  const Vec<1> left{0.4}, right{-1.1};
  auto src = stream(7, StreamPurpose::BridgeNoise);
  const int n = 100000;
  double s1 = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = bridge_midpoint<1>(left, right, dt, src)[0] - 0.5 * (left[0] + right[0]);
    s1 += x, s2 += x * x;
  }
  const double mean = s1 / n;
  const double var = s2 / n - mean * mean;
  CHECK_THAT(mean, WithinAbs(0.0, 4.0 * std::sqrt(dt / 4 / n)));
  CHECK_THAT(var, WithinRel(dt / 4, 0.03));
}

TEST_CASE("halving below the minimum step is refused") {
  CHECK(can_halve(0x1.0p-50));
  CHECK_FALSE(can_halve(0x1.0p-51));
  auto src = stream(0, StreamPurpose::BridgeNoise);
  WienerPath<1> path{Mesh({0.0, 0x1.0p-51, 1.0}), {{0.0}, {0.1}, {0.2}}};
  const auto before = path;
  CHECK_FALSE(try_bridge_insert(path, 0, src));
  CHECK(path == before);
  CHECK_THROWS_AS(bridge_insert(path, 0, src), UsageError);
  CHECK(try_bridge_insert(path, 1, src));
  CHECK_THROWS_AS(try_bridge_insert(path, 3, src), UsageError);
}

TEST_CASE("restriction to a mesh with foreign points throws") {
  auto src = stream(3);
  const auto path = sample_initial_path<1>(Mesh::uniform(4, 1.0), src);
  CHECK_THROWS_AS(restrict_to(path, Mesh({0.0, 0.3, 1.0})), UsageError);
  CHECK(restrict_to(path, Mesh::uniform(2, 1.0)).values[1] == path.values[2]);
}

TEST_CASE("debug dump has one column per Wiener component") {
  auto src = stream(4);
  const auto path = sample_initial_path<2>(Mesh::uniform(2, 1.0), src);
  std::ostringstream os;
  write_csv(os, path);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "t,W_1,W_2");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 3);
}
