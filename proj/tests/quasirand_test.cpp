#include <doctest.h>

#include <array>
#include <random>
#include <sstream>

#include "bode/error.hpp"
#include "bode/quasirand.hpp"

using namespace bode;

namespace {

// scipy.stats.qmc.Sobol(d=5, scramble=False) over the same Joe-Kuo table,
// first ten points, times 2^30.
constexpr std::array<std::array<std::uint32_t, 5>, 10> kReference = {{
    {0, 0, 0, 0, 0},
    {536870912, 536870912, 536870912, 536870912, 536870912},
    {805306368, 268435456, 268435456, 268435456, 805306368},
    {268435456, 805306368, 805306368, 805306368, 268435456},
    {402653184, 402653184, 671088640, 939524096, 402653184},
    {939524096, 939524096, 134217728, 402653184, 939524096},
    {671088640, 134217728, 939524096, 671088640, 671088640},
    {134217728, 671088640, 402653184, 134217728, 134217728},
    {201326592, 335544320, 1006632960, 469762048, 603979776},
    {738197504, 872415232, 469762048, 1006632960, 67108864},
}};

std::uint64_t gray(std::uint64_t n) { return n ^ (n >> 1); }

}  // namespace

TEST_SUITE("quasirand") {

TEST_CASE("first ten points match the reference in dimensions 1 to 5") {
  for (int d = 1; d <= 5; ++d) {
    SobolGenerator gen(d);
    for (int n = 0; n < 10; ++n) {
      const auto p = gen.next_point();
      REQUIRE(p.size() == static_cast<std::size_t>(d));
      for (int j = 0; j < d; ++j) CHECK(p[j] == std::ldexp(static_cast<double>(kReference[n][j]), -30));
    }
  }
}

TEST_CASE("skipping the origin gives 0.5, 0.75, 0.25") {
  SobolGenerator gen(1, 1);
  CHECK(gen.next_point()[0] == 0.5);
  CHECK(gen.next_point()[0] == 0.75);
  CHECK(gen.next_point()[0] == 0.25);
  SobolGenerator zero(1, 0);
  CHECK(zero.next_point()[0] == 0.0);
}

TEST_CASE("direct binary mode at n = 0 is the origin") {
  SobolGenerator gen(6, 0, SobolOrder::direct_binary);
  for (double v : gen.next_point()) CHECK(v == 0.0);
}

TEST_CASE("gray-code point n is the direct-binary point gray(n)") {
  SobolGenerator g(7);
  for (std::uint64_t n = 0; n < 300; ++n) {
    SobolGenerator b(7, gray(n), SobolOrder::direct_binary);
    CHECK(g.next_integers() == b.next_integers());
  }
}

TEST_CASE("direction numbers: dimension 1 is all ones scaled, every entry nonzero") {
  SobolGenerator gen(12);
  for (int j = 1; j <= SobolGenerator::kMaxBits; ++j)
    CHECK(gen.direction_numbers(1)[j - 1] == (1u << (SobolGenerator::kMaxBits - j)));
  for (int d = 1; d <= 12; ++d) {
    REQUIRE(gen.direction_numbers(d).size() == static_cast<std::size_t>(SobolGenerator::kMaxBits));
    for (auto v : gen.direction_numbers(d)) CHECK(v != 0u);
  }
}

TEST_CASE("one point per quadrant for the first four 2-D points") {
  SobolGenerator gen(2);
  std::array<int, 4> quad{};
  for (int i = 0; i < 4; ++i) {
    const auto p = gen.next_point();
    ++quad[(p[0] >= 0.5 ? 1 : 0) + (p[1] >= 0.5 ? 2 : 0)];
  }
  for (int c : quad) CHECK(c == 1);
}

TEST_CASE("coordinates of 8-D points stay in [0, 1)") {
  SobolGenerator gen(8);
  for (int i = 0; i < 100; ++i)
    for (double v : gen.next_point()) {
      CHECK(v >= 0.0);
      CHECK(v < 1.0);
    }
}

TEST_CASE("dyadic stratification in one dimension") {
  for (int k = 0; k <= 10; ++k) {
    const int n = 1 << k;
    SobolGenerator gen(1);
    std::vector<int> bins(n, 0);
    for (int i = 0; i < n; ++i) ++bins[static_cast<int>(gen.next_point()[0] * n)];
    for (int b : bins) REQUIRE(b == 1);
  }
  SobolGenerator gen(1);
  std::array<int, 4> quarters{};
  for (int i = 0; i < 1024; ++i) ++quarters[static_cast<int>(gen.next_point()[0] * 4)];
  for (int q : quarters) CHECK(q == 256);
}

TEST_CASE("16x16 bin deviation beats pseudo-random points") {
  auto deviation = [](auto&& draw) {
    std::array<int, 256> bins{};
    for (int i = 0; i < 4096; ++i) {
      const auto [x, y] = draw();
      ++bins[static_cast<int>(x * 16) * 16 + static_cast<int>(y * 16)];
    }
    int worst = 0;
    for (int b : bins) worst = std::max(worst, std::abs(b - 16));
    return worst;
  };
  SobolGenerator gen(2);
  const int sobol = deviation([&] {
    const auto p = gen.next_point();
    return std::pair{p[0], p[1]};
  });
  double random_mean = 0.0;
  for (int s = 0; s < 20; ++s) {
    std::mt19937_64 rng(1000 + s);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    random_mean += deviation([&] { return std::pair{u(rng), u(rng)}; }) / 20.0;
  }
  CHECK(sobol < random_mean);
}

TEST_CASE("determinism and skip") {
  SobolGenerator a(5, 3), b(5, 0);
  b.skip(3);
  for (int i = 0; i < 50; ++i) CHECK(a.next_point() == b.next_point());
  CHECK(a.counter() == 53);
}

TEST_CASE("unsupported dimensions are rejected") {
  CHECK_THROWS_AS(SobolGenerator(0), InvalidArgument);
  CHECK_THROWS_AS(SobolGenerator(DirectionTable::bundled().max_dimension() + 1), InvalidArgument);
  CHECK_NOTHROW(SobolGenerator(DirectionTable::bundled().max_dimension()));
}

TEST_CASE("parsing a table in Joe-Kuo format") {
  std::istringstream in("d s a m_i\n2 1 0 1\n3 2 1 1 3\n");
  const auto t = DirectionTable::parse(in);
  CHECK(t.max_dimension() == 3);
  CHECK(t.row(3).degree == 2);
  CHECK(t.row(3).coeffs == 1u);
  CHECK(t.row(3).initial == std::vector<std::uint32_t>{1, 3});
  SobolGenerator from_file(3, 0, SobolOrder::gray_code, t), bundled(3);
  for (int i = 0; i < 64; ++i) CHECK(from_file.next_integers() == bundled.next_integers());
}

}  // TEST_SUITE
