#include <doctest.h>

#include <Eigen/LU>
#include <cmath>

#include "bode/error.hpp"
#include "bode/gp.hpp"
#include "bode/random.hpp"

using namespace bode;

namespace {

Eigen::MatrixXd random_inputs(int n, int d, std::uint64_t seed) {
  NormalSampler s(seed);
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = s.uniform_open();
  return x;
}

Eigen::VectorXd smooth_targets(const Eigen::MatrixXd& x) {
  Eigen::VectorXd y(x.rows());
  for (int i = 0; i < x.rows(); ++i) y(i) = std::sin(3.0 * x(i, 0)) + x.row(i).squaredNorm();
  return y;
}

// Kernel written out from its definition, separate from the library.
double k_oracle(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b, const GpHyperparameters& hp) {
  double r = 0.0;
  for (int d = 0; d < a.size(); ++d) r += (a(d) - b(d)) * (a(d) - b(d)) / (hp.lengthscales(d) * hp.lengthscales(d));
  return hp.signal_variance * std::exp(-0.5 * r);
}

}  // namespace

TEST_SUITE("gp") {

TEST_CASE("rbf kernel values") {
  Eigen::VectorXd x(3), y(3), l = Eigen::VectorXd::Constant(3, 0.7);
  x << 0.1, 0.2, 0.3;
  CHECK(rbf_kernel(x, x, l, 1.0) == 1.0);
  y = x;
  y(1) += 0.7;
  CHECK(rbf_kernel(x, y, l, 1.0) == doctest::Approx(0.6065306597).epsilon(1e-9));
  double prev = 1.0;
  for (double r = 0.1; r < 10.0; r += 0.5) {
    y = x;
    y(0) += r;
    const double k = rbf_kernel(x, y, l, 1.0);
    CHECK(k < prev);
    prev = k;
  }
  CHECK_THROWS_AS(rbf_kernel(x, Eigen::VectorXd::Zero(2), l, 1.0), InvalidArgument);
}

TEST_CASE("posterior matches dense solves") {
  for (int rep = 0; rep < 5; ++rep) {
    const int n = 20, d = 8;
    const auto x = random_inputs(n, d, 100 + rep);
    const Eigen::VectorXd y = smooth_targets(x);
    GpHyperparameters hp;
    hp.lengthscales = Eigen::VectorXd::LinSpaced(d, 0.4, 1.5);
    hp.signal_variance = 1.3;
    hp.noise_variance = 1e-3;
    const auto model = GpModel::condition(x, y, hp);

    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = k_oracle(x.row(i), x.row(j), hp) + (i == j ? hp.noise_variance : 0.0);
    const double mu = y.mean();
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    const auto queries = random_inputs(10, d, 900 + rep);
    for (int q = 0; q < queries.rows(); ++q) {
      Eigen::VectorXd k(n);
      for (int i = 0; i < n; ++i) k(i) = k_oracle(queries.row(q), x.row(i), hp);
      const double raw_mean = mu + k.dot(lu.solve(y - Eigen::VectorXd::Constant(n, mu)));
      const double std_var = hp.signal_variance - k.dot(lu.solve(k));
      const auto b = model.posterior(queries.row(q).transpose());
      CHECK(std::abs(b.raw_mean() - raw_mean) < 1e-8 * std::max(1.0, std::abs(raw_mean)));
      CHECK(std::abs(b.variance - std_var) < 1e-8);
    }
  }
}

TEST_CASE("noiseless interpolation and prior recovery") {
  const auto x = random_inputs(12, 3, 7);
  const Eigen::VectorXd y = smooth_targets(x);
  GpHyperparameters hp;
  hp.lengthscales = Eigen::VectorXd::Constant(3, 0.3);
  hp.noise_variance = 1e-10;
  const auto model = GpModel::condition(x, y, hp);
  for (int i = 0; i < x.rows(); ++i) {
    const auto b = model.posterior(x.row(i).transpose());
    CHECK(std::abs(b.raw_mean() - y(i)) < 1e-6 * std::abs(y(i)));
  }
  const auto far = model.posterior(Eigen::VectorXd::Constant(3, 10.0));
  CHECK(far.variance == doctest::Approx(hp.signal_variance).epsilon(0.01));
}

TEST_CASE("variance bounded by prior and shrinks with more data") {
  NormalSampler s(11);
  const int d = 2;
  GpHyperparameters hp;
  hp.lengthscales = Eigen::VectorXd::Constant(d, 0.25);
  hp.signal_variance = 1.0;
  hp.noise_variance = 1e-6;
  const auto queries = random_inputs(20, d, 12);
  Eigen::MatrixXd x = random_inputs(2, d, 13);
  auto model = GpModel::condition(x, smooth_targets(x), hp);
  for (int add = 0; add < 100; ++add) {
    Eigen::MatrixXd bigger(x.rows() + 1, d);
    bigger << x, random_inputs(1, d, 5000 + add);
    const auto next = GpModel::condition(bigger, smooth_targets(bigger), hp);
    for (int q = 0; q < queries.rows(); ++q) {
      const double before = model.posterior(queries.row(q).transpose()).variance;
      const double after = next.posterior(queries.row(q).transpose()).variance;
      REQUIRE(after <= before + 1e-8);
      REQUIRE(after <= hp.signal_variance + 1e-8);
      REQUIRE(after >= 0.0);
    }
    x = bigger;
    model = next;
  }
}

TEST_CASE("fit: bounds, duplicates, determinism, multi-start dominance") {
  Eigen::MatrixXd two(2, 2);
  two << 0.1, 0.1, 0.9, 0.8;
  Eigen::VectorXd y2(2);
  y2 << 1.0, 2.0;
  GpFitOptions opt;
  const auto m2 = fit_gp(two, y2, opt);
  CHECK(m2.hyperparameters().noise_variance >= opt.min_noise);
  CHECK(m2.hyperparameters().noise_variance <= opt.max_noise);

  Eigen::MatrixXd dup(4, 1);
  dup << 0.3, 0.3, 0.7, 0.1;
  Eigen::VectorXd yd(4);
  yd << 1.0, 2.0, 0.5, 0.0;
  const auto md = fit_gp(dup, yd, opt);
  CHECK(md.hyperparameters().noise_variance > 0.0);

  const auto x = random_inputs(15, 4, 21);
  const Eigen::VectorXd y = smooth_targets(x);
  opt.seed = 5;
  GpFitTrace trace;
  const auto a = fit_gp(x, y, opt, &trace);
  const auto b = fit_gp(x, y, opt);
  CHECK(a.hyperparameters().lengthscales == b.hyperparameters().lengthscales);
  CHECK(a.hyperparameters().noise_variance == b.hyperparameters().noise_variance);
  CHECK(a.hyperparameters().signal_variance == b.hyperparameters().signal_variance);
  REQUIRE(trace.start_lml.size() == static_cast<std::size_t>(opt.restarts));
  for (double s : trace.start_lml) CHECK(trace.best_lml >= s);
  CHECK(a.log_marginal_likelihood() == doctest::Approx(trace.best_lml).epsilon(1e-12));
  for (int i = 0; i < a.hyperparameters().lengthscales.size(); ++i) {
    CHECK(a.hyperparameters().lengthscales(i) >= opt.min_lengthscale);
    CHECK(a.hyperparameters().lengthscales(i) <= opt.max_lengthscale);
  }
}

TEST_CASE("affine shift of targets shifts means only") {
  const auto x = random_inputs(10, 3, 31);
  const Eigen::VectorXd y = smooth_targets(x);
  GpHyperparameters hp;
  hp.lengthscales = Eigen::VectorXd::Constant(3, 0.5);
  hp.noise_variance = 1e-4;
  const auto a = GpModel::condition(x, y, hp);
  const auto b = GpModel::condition(x, (y.array() + 17.5).matrix(), hp);
  const auto q = random_inputs(5, 3, 32);
  for (int i = 0; i < q.rows(); ++i) {
    const auto pa = a.posterior(q.row(i).transpose()), pb = b.posterior(q.row(i).transpose());
    CHECK(std::abs(pb.raw_mean() - pa.raw_mean() - 17.5) < 1e-8);
    CHECK(std::abs(pb.raw_variance() - pa.raw_variance()) < 1e-8);
  }
}

TEST_CASE("joint posterior samples") {
  const auto x = random_inputs(8, 2, 41);
  GpHyperparameters hp;
  hp.lengthscales = Eigen::VectorXd::Constant(2, 0.4);
  hp.noise_variance = 1e-4;
  const auto model = GpModel::condition(x, smooth_targets(x), hp);

  Eigen::MatrixXd c(1, 2);
  c << 0.37, 0.61;
  const int n = 100000;
  const auto s = joint_posterior_samples(model, c, n, 3);
  REQUIRE(s.rows() == n);
  const auto b = model.posterior(c.row(0).transpose());
  const double mean = s.col(0).mean();
  const double var = (s.col(0).array() - mean).square().sum() / (n - 1);
  CHECK(std::abs(mean - b.mean) < 3.0 * std::sqrt(b.variance / n));
  // std error of the sample variance of a Gaussian is var * sqrt(2 / (n - 1))
  CHECK(std::abs(var - b.variance) < 3.0 * b.variance * std::sqrt(2.0 / (n - 1)));

  CHECK(joint_posterior_samples(model, c, 50, 9) == joint_posterior_samples(model, c, 50, 9));

  Eigen::MatrixXd twin(2, 2);
  twin << 0.2, 0.9, 0.2, 0.9;
  const auto t = joint_posterior_samples(model, twin, 2000, 4);
  const Eigen::VectorXd a = t.col(0).array() - t.col(0).mean();
  const Eigen::VectorXd bb = t.col(1).array() - t.col(1).mean();
  CHECK(a.dot(bb) / std::sqrt(a.squaredNorm() * bb.squaredNorm()) > 0.999);
}

}  // TEST_SUITE
