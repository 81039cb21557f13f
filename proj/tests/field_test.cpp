#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "bode/error.hpp"
#include "bode/field.hpp"
#include "bode/random.hpp"
#include "bode/task.hpp"

using namespace bode;

namespace {

double sample_std(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x / v.size();
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / v.size());
}

const FieldDataset& small_dataset() {
  static const FieldDataset ds = generate_synthetic({16, 32, 200, 5, {}});
  return ds;
}

}  // namespace

TEST_SUITE("field") {

TEST_CASE("split ledger fractions and partition") {
  const auto ledger = assign_splits(600, 1);
  ledger.validate();
  CHECK(ledger.units(Split::train).size() == 420);
  CHECK(ledger.units(Split::val).size() == 177);
  CHECK(ledger.units(Split::test).size() == 3);
  const auto bt = ledger.units(BoSplit::bo_train), bv = ledger.units(BoSplit::bo_val);
  CHECK(bt.size() + bv.size() == 179);
  CHECK(static_cast<double>(bt.size()) / (bt.size() + bv.size()) == doctest::Approx(0.7).epsilon(0.01));
  std::set<int> seen;
  for (int u : bt) {
    CHECK(ledger.split[u] != Split::test);
    seen.insert(u);
  }
  for (int u : bv) {
    CHECK(ledger.split[u] != Split::test);
    CHECK(seen.count(u) == 0);
  }
  CHECK(assign_splits(600, 1).split == ledger.split);
  CHECK(assign_splits(600, 2).split != ledger.split);
}

TEST_CASE("ledger validation catches leaks") {
  auto ledger = assign_splits(100, 3);
  const int t = ledger.units(Split::test).front();
  ledger.bo[t] = BoSplit::bo_train;
  CHECK_THROWS_AS(ledger.validate(), InvalidArgument);
}

TEST_CASE("z-normalization") {
  Eigen::MatrixXd d(3, 2);
  d << 1, 5, 2, 5, 3, 5;
  const auto stats = compute_stats(d);
  const auto z = z_normalize(d, stats);
  CHECK(z(0, 0) == doctest::Approx(-1.224744871391589));
  CHECK(z(1, 0) == doctest::Approx(0.0));
  CHECK(z(2, 0) == doctest::Approx(1.224744871391589));
  for (int i = 0; i < 3; ++i) CHECK(z(i, 1) == 0.0);
  const auto back = z_denormalize(z, stats);
  CHECK((back.col(0) - d.col(0)).cwiseAbs().maxCoeff() < 1e-12);

  NormalSampler s(1);
  Eigen::MatrixXd r(500, 3);
  for (int i = 0; i < 500; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = 10.0 * j + (j + 1) * s();
  const auto zr = z_normalize(r, compute_stats(r));
  for (int j = 0; j < 3; ++j) {
    const double m = zr.col(j).mean();
    CHECK(std::abs(m) < 1e-10);
    CHECK(std::abs(std::sqrt((zr.col(j).array() - m).square().mean()) - 1.0) < 1e-10);
  }
}

TEST_CASE("knn regridding") {
  const Grid g{8, 8, 1.0, 1.0};
  NormalSampler s(2);
  Eigen::MatrixXd pts(200, 2);
  std::vector<double> vals(200);
  for (int i = 0; i < 200; ++i) {
    pts(i, 0) = s.uniform_open();
    pts(i, 1) = s.uniform_open();
    vals[i] = 2.0 * pts(i, 0) - 3.0 * pts(i, 1);
  }
  const auto nn = knn_regrid(pts, vals, 1, g);
  for (int c = 0; c < g.cells(); ++c) {
    int best = 0;
    double bd = 1e300;
    for (int i = 0; i < 200; ++i) {
      const double d = std::hypot(pts(i, 0) - g.cell_x(c), pts(i, 1) - g.cell_z(c));
      if (d < bd) bd = d, best = i;
    }
    CHECK(nn[c] == doctest::Approx(vals[best]).epsilon(1e-14));
  }

  const auto flat = knn_regrid(pts, std::vector<double>(200, 4.5), 5, g);
  for (double v : flat) CHECK(v == doctest::Approx(4.5).epsilon(1e-14));

  Eigen::MatrixXd on = pts;
  on(17, 0) = g.cell_x(9);
  on(17, 1) = g.cell_z(9);
  CHECK(knn_regrid(on, vals, 6, g)[9] == vals[17]);

  CHECK_THROWS_AS(knn_regrid(Eigen::MatrixXd(0, 2), std::vector<double>{}, 1, g), InvalidArgument);
  CHECK_THROWS_AS(knn_regrid(pts.topRows(3), std::span<const double>(vals.data(), 3), 4, g), InvalidArgument);
}

TEST_CASE("noise: zero sigma, nominal std, clamp, proportionality") {
  const Grid g{100, 100, 1.0, 1.0};
  const std::vector<double> ones(g.cells(), 1.0);
  CHECK(inject_noise(ones, g, {0.0, 2.0, 1}, 0, 0) == ones);

  const auto y = inject_noise(ones, g, {0.05, 2.0, 1}, 3, 4);
  std::vector<double> diff(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) diff[i] = y[i] - 1.0;
  CHECK(std::abs(sample_std(diff) - 0.05) < 0.002);

  const NoiseSpec wide{0.6, 2.0, 7};
  const auto eps = noise_factor(g, wide, 0, 0);
  const auto clamped = inject_noise(ones, g, wide, 0, 0);
  int zeros = 0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    CHECK(clamped[i] == std::max(0.0, 1.0 + eps[i]));
    if (eps[i] <= -1.0) {
      ++zeros;
      CHECK(clamped[i] == 0.0);
    }
  }
  CHECK(zeros > 0);

  std::vector<double> ramp(g.cells());
  for (int c = 0; c < g.cells(); ++c) ramp[c] = (c % 3) * 0.5;
  const auto yr = inject_noise(ramp, g, {0.05, 2.0, 1}, 3, 4);
  const auto e = noise_factor(g, {0.05, 2.0, 1}, 3, 4);
  for (int c = 0; c < g.cells(); ++c) {
    if (ramp[c] == 0.0) CHECK(yr[c] == 0.0);
    else CHECK(yr[c] - ramp[c] == doctest::Approx(e[c] * ramp[c]).epsilon(1e-12));
  }
}

TEST_CASE("noise: reproducible per draw, fresh per epoch, spatially smooth") {
  const Grid g{32, 32, 1.0, 1.0};
  const NoiseSpec spec{0.1, 2.0, 11};
  CHECK(noise_factor(g, spec, 5, 6) == noise_factor(g, spec, 5, 6));
  CHECK(noise_factor(g, spec, 5, 6) != noise_factor(g, spec, 6, 6));
  CHECK(noise_factor(g, spec, 5, 6) != noise_factor(g, spec, 5, 7));
  const auto e = noise_factor(g, spec, 0, 0);
  // lag-1 correlation of white noise filtered at width w is exp(-1 / (4 w^2))
  double num = 0.0, den = 0.0;
  for (int iz = 0; iz < g.nz; ++iz)
    for (int ix = 0; ix + 1 < g.nx; ++ix) num += e[iz * g.nx + ix] * e[iz * g.nx + ix + 1];
  for (double v : e) den += v * v;
  CHECK(num / den > 0.85);
  const NoiseSpec white{0.1, 0.0, 11};
  const auto w = noise_factor(g, white, 0, 0);
  CHECK(std::abs(sample_std(w) - 0.1) < 1e-12);
}

TEST_CASE("noise: corner and centre cells see the same spread") {
  const Grid g{16, 32, 1.0, 1.0};
  const NoiseSpec spec{0.1, 2.0, 3};
  const int draws = 3000, corner = 0, centre = 16 * g.nx + 8;
  double sc = 0.0, sm = 0.0;
  for (int r = 0; r < draws; ++r) {
    const auto e = noise_factor(g, spec, r, 0);
    sc += e[corner] * e[corner];
    sm += e[centre] * e[centre];
  }
  const double ratio = std::sqrt(sc / sm);
  // 3000 draws give about 2.6% relative error on the ratio
  CHECK(ratio > 0.92);
  CHECK(ratio < 1.08);
}

TEST_CASE("synthetic dataset") {
  const auto& ds = small_dataset();
  CHECK(ds.timesteps == 200);
  for (int t = 0; t < ds.timesteps; ++t) {
    const auto f = ds.target_frame(t);
    CHECK(*std::min_element(f.begin(), f.end()) >= 0.0f);
    CHECK(*std::max_element(f.begin(), f.end()) > 0.0f);
  }
  const auto again = generate_synthetic({16, 32, 200, 5, {}});
  CHECK(again.channels == ds.channels);
  CHECK(again.target == ds.target);
  CHECK(generate_synthetic({16, 32, 200, 6, {}}).ledger.split != ds.ledger.split);
  CHECK_THROWS_AS(generate_synthetic({4, 32, 200, 5, {}}), InvalidArgument);
  CHECK_THROWS_AS(generate_synthetic({16, 32, 50, 5, {}}), InvalidArgument);

  // statistics come from training frames only
  double sum = 0.0;
  std::size_t n = 0;
  for (int t : ds.ledger.units(Split::train))
    for (float v : ds.target_frame(t)) sum += v, ++n;
  CHECK(ds.target_mean == doctest::Approx(sum / n).epsilon(1e-12));
}

TEST_CASE("dataset directory round trip") {
  const auto& ds = small_dataset();
  const auto dir = std::filesystem::path(BODE_TEST_TMP) / "dataset_roundtrip";
  std::filesystem::remove_all(dir);
  save_dataset(ds, dir);
  const auto back = load_dataset(dir);
  CHECK(back.channels == ds.channels);
  CHECK(back.target == ds.target);
  CHECK(back.ledger.split == ds.ledger.split);
  CHECK(back.ledger.bo == ds.ledger.bo);
  CHECK(back.target_mean == ds.target_mean);
  CHECK(back.input_stats.stddev == ds.input_stats.stddev);
  CHECK_THROWS_AS(load_dataset(dir / "nothing"), IoError);
}

TEST_CASE("field task keeps optimization away from test frames") {
  const auto& ds = small_dataset();
  FieldTaskOptions opt;
  opt.noise = NoiseSpec{0.05, 2.0, 3};
  const auto task = make_field_task(ds, opt);
  task.assert_optimization_isolated();
  CHECK(task.input_dim == kFieldInputs);
  CHECK(task.test.size() == static_cast<Eigen::Index>(ds.ledger.units(Split::test).size()) * ds.grid.cells());
  // noisy training targets are redrawn per epoch but reproducible
  CHECK(task.train(3).y == task.train(3).y);
  CHECK(task.train(3).y != task.train(4).y);
  CHECK(task.test.noise_std.maxCoeff() > 0.0);
  for (Eigen::Index i = 0; i < task.test.size(); ++i)
    CHECK(task.test.noise_std(i) == doctest::Approx(0.05 * task.test.y_clean(i)).epsilon(1e-9));
}

}  // TEST_SUITE
