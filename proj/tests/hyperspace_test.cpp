#include <doctest.h>

#include <cmath>

#include "bode/error.hpp"
#include "bode/hyperspace.hpp"
#include "bode/quasirand.hpp"

using namespace bode;
namespace hs = bode::hyperspace;

TEST_SUITE("hyperspace") {

TEST_CASE("corners decode to the bounds of the search space") {
  hs::Point lo{};
  const auto a = hs::decode(lo);
  CHECK(a.learning_rate == doctest::Approx(1e-4));
  CHECK(a.weight_decay == doctest::Approx(1e-4));
  CHECK(a.drop_rate == 0.0);
  CHECK(a.batch_size == 8);
  CHECK(a.n_dense_blocks == 3);
  CHECK(a.layers_per_block == 3);
  CHECK(a.growth_rate == 8);
  CHECK(a.initial_features == 8);

  hs::Point hi;
  hi.fill(1.0);
  const auto b = hs::decode(hi);
  CHECK(b.learning_rate == doctest::Approx(1e-2));
  CHECK(b.weight_decay == doctest::Approx(1e-2));
  CHECK(b.drop_rate == 0.5);
  CHECK(b.batch_size == 128);
  CHECK(b.n_dense_blocks == 5);
  CHECK(b.layers_per_block == 9);
  CHECK(b.growth_rate == 48);
  CHECK(b.initial_features == 128);
}

TEST_CASE("log midpoint") {
  hs::Point mid;
  mid.fill(0.5);
  CHECK(hs::decode(mid).learning_rate == doctest::Approx(1e-3).epsilon(1e-12));
  HyperConfig c = hs::decode(mid);
  c.learning_rate = 1e-3;
  CHECK(hs::encode(c)[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("bins are equal width") {
  hs::Point u{};
  for (int k = 0; k < 8; ++k) {
    u[3] = (k + 0.5) / 8.0;
    CHECK(hs::decode(u).batch_size == hs::kBatchSizes[k]);
  }
  u[4] = 0.49;
  CHECK(hs::decode(u).n_dense_blocks == 3);
  u[4] = 0.51;
  CHECK(hs::decode(u).n_dense_blocks == 5);
}

TEST_CASE("round trips over Sobol points") {
  SobolGenerator gen(hs::kDimension, 1);
  for (int i = 0; i < 1000; ++i) {
    const auto u = gen.next_point();
    const auto cfg = hs::decode(u);
    REQUIRE(hs::is_valid(cfg));
    const auto e = hs::encode(cfg);
    const auto again = hs::decode(e);
    CHECK(again.batch_size == cfg.batch_size);
    CHECK(again.n_dense_blocks == cfg.n_dense_blocks);
    CHECK(again.layers_per_block == cfg.layers_per_block);
    CHECK(again.growth_rate == cfg.growth_rate);
    CHECK(again.initial_features == cfg.initial_features);
    CHECK(again.learning_rate == doctest::Approx(cfg.learning_rate).epsilon(1e-12));
    CHECK(again.weight_decay == doctest::Approx(cfg.weight_decay).epsilon(1e-12));
    CHECK(again.drop_rate == doctest::Approx(cfg.drop_rate).epsilon(1e-12));
    // encode of decode is idempotent
    const auto e2 = hs::encode(again);
    for (int d = 0; d < hs::kDimension; ++d) CHECK(e2[d] == doctest::Approx(e[d]).epsilon(1e-12));
  }
}

TEST_CASE("baseline rates and drop map inside the cube") {
  HyperConfig c;
  c.learning_rate = BaselineConfig::learning_rate;
  c.weight_decay = BaselineConfig::weight_decay;
  c.drop_rate = BaselineConfig::drop_rate;
  c.batch_size = BaselineConfig::batch_size;
  c.n_dense_blocks = BaselineConfig::n_dense_blocks;
  c.layers_per_block = 4;
  c.growth_rate = BaselineConfig::growth_rate;
  c.initial_features = BaselineConfig::initial_features;
  const auto u = hs::encode(c);
  for (double v : u) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  CHECK(u[2] == doctest::Approx(0.3));
  CHECK(u[1] == doctest::Approx((std::log10(0.002) + 4.0) / 2.0));
  const auto d = hs::decode(u);
  CHECK(d.learning_rate == doctest::Approx(c.learning_rate).epsilon(1e-12));
  CHECK(d.weight_decay == doctest::Approx(c.weight_decay).epsilon(1e-12));
  CHECK(d.drop_rate == doctest::Approx(c.drop_rate).epsilon(1e-12));
  CHECK(d.batch_size == c.batch_size);
  CHECK(d.n_dense_blocks == c.n_dense_blocks);
  CHECK(d.layers_per_block == c.layers_per_block);
  CHECK(d.growth_rate == c.growth_rate);
  CHECK(d.initial_features == c.initial_features);
}

TEST_CASE("validation") {
  hs::Point u{};
  u[2] = 1.5;
  CHECK_THROWS_AS(hs::decode(u), InvalidArgument);
  u[2] = -0.1;
  CHECK_THROWS_AS(hs::decode(u), InvalidArgument);
  CHECK_THROWS_AS(hs::decode(std::vector<double>(7, 0.5)), InvalidArgument);
  HyperConfig c = hs::decode(hs::Point{});
  c.batch_size = 10;
  CHECK_THROWS_AS(hs::encode(c), InvalidArgument);
  c = hs::decode(hs::Point{});
  c.learning_rate = 0.5;
  CHECK_FALSE(hs::is_valid(c));
  c = hs::decode(hs::Point{});
  c.drop_rate = 0.6;
  CHECK_THROWS_AS(hs::validate(c), InvalidArgument);
}

TEST_CASE("json uses the field names") {
  hs::Point mid;
  mid.fill(0.3);
  const auto c = hs::decode(mid);
  const nlohmann::json j = c;
  for (const char* k : {"learning_rate", "weight_decay", "drop_rate", "batch_size", "n_dense_blocks",
                        "layers_per_block", "growth_rate", "initial_features"})
    CHECK(j.contains(k));
  CHECK(j.size() == 8);
  CHECK(j.get<HyperConfig>() == c);
}

}  // TEST_SUITE
