#include "bode/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "bode/error.hpp"
#include "bode/random.hpp"

namespace bode {

namespace {

constexpr double kMaxJitter = 1e-4;

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                              const GpHyperparameters& hp) {
  Eigen::MatrixXd k(a.rows(), b.rows());
  const Eigen::ArrayXd inv_l = hp.lengthscales.array().inverse();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      const double r2 = ((a.row(i) - b.row(j)).transpose().array() * inv_l).square().sum();
      k(i, j) = hp.signal_variance * std::exp(-0.5 * r2);
    }
  }
  return k;
}

void standardize(const Eigen::VectorXd& raw, Eigen::VectorXd& out, double& mean, double& stddev) {
  const auto n = static_cast<double>(raw.size());
  mean = raw.mean();
  stddev = std::sqrt((raw.array() - mean).square().sum() / n);
  if (!(stddev > 0.0)) stddev = 1.0;
  out = (raw.array() - mean) / stddev;
}

}  // namespace

double rbf_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& lengthscales, double signal_variance) {
  if (x.size() != y.size() || x.size() != lengthscales.size())
    throw InvalidArgument("rbf_kernel: dimension mismatch (" + std::to_string(x.size()) + ", " +
                          std::to_string(y.size()) + ", " + std::to_string(lengthscales.size()) + ")");
  const double r2 = ((x - y).array() / lengthscales.array()).square().sum();
  return signal_variance * std::exp(-0.5 * r2);
}

double cholesky_with_jitter(const Eigen::MatrixXd& a, double first_jitter,
                            Eigen::LLT<Eigen::MatrixXd>& out, const char* what) {
  double jitter = first_jitter;
  const Eigen::Index n = a.rows();
  while (true) {
    if (jitter > 0.0) {
      out.compute(a + jitter * Eigen::MatrixXd::Identity(n, n));
    } else {
      out.compute(a);
    }
    if (out.info() == Eigen::Success) return jitter;
    jitter = jitter <= 0.0 ? 1e-10 : jitter * 10.0;
    if (jitter > kMaxJitter * 1.0000001)
      throw NumericalError(std::string(what) + ": matrix not positive definite even with jitter 1e-4");
  }
}

GpModel GpModel::condition(Eigen::MatrixXd inputs, const Eigen::VectorXd& raw_targets,
                           GpHyperparameters hp, double jitter) {
  if (inputs.rows() != raw_targets.size() || inputs.rows() < 1)
    throw InvalidArgument("GpModel::condition: need matching, nonempty inputs and targets");
  if (hp.lengthscales.size() != inputs.cols())
    throw InvalidArgument("GpModel::condition: lengthscale count does not match input dimension");
  if ((hp.lengthscales.array() <= 0.0).any() || !(hp.signal_variance > 0.0) || !(hp.noise_variance > 0.0))
    throw InvalidArgument("GpModel::condition: hyperparameters must be positive");
  GpModel m;
  m.inputs_ = std::move(inputs);
  m.hp_ = std::move(hp);
  standardize(raw_targets, m.targets_, m.target_mean_, m.target_std_);
  Eigen::MatrixXd k = kernel_matrix(m.inputs_, m.inputs_, m.hp_);
  k.diagonal().array() += m.hp_.noise_variance;
  m.jitter_ = cholesky_with_jitter(k, jitter, m.llt_, "GP kernel matrix");
  m.alpha_ = m.llt_.solve(m.targets_);
  return m;
}

double GpModel::log_marginal_likelihood() const {
  const Eigen::MatrixXd l = llt_.matrixL();
  const double n = static_cast<double>(targets_.size());
  return -0.5 * targets_.dot(alpha_) - l.diagonal().array().log().sum() -
         0.5 * n * std::log(2.0 * std::numbers::pi);
}

Eigen::MatrixXd GpModel::prior_covariance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) const {
  return kernel_matrix(a, b, hp_);
}

Eigen::MatrixXd GpModel::cross_kernel(const Eigen::MatrixXd& points) const {
  return kernel_matrix(points, inputs_, hp_);
}

Eigen::MatrixXd GpModel::whitened_cross(const Eigen::MatrixXd& points) const {
  Eigen::MatrixXd kt = kernel_matrix(inputs_, points, hp_);
  llt_.matrixL().solveInPlace(kt);
  return kt;
}

PosteriorBelief GpModel::posterior(const Eigen::VectorXd& x) const {
  if (x.size() != dimension()) throw InvalidArgument("GpModel::posterior: dimension mismatch");
  Eigen::MatrixXd pt = x.transpose();
  const Eigen::VectorXd k = kernel_matrix(inputs_, pt, hp_).col(0);
  Eigen::VectorXd v = k;
  llt_.matrixL().solveInPlace(v);
  PosteriorBelief b;
  b.mean = k.dot(alpha_);
  b.variance = std::max(0.0, hp_.signal_variance - v.squaredNorm());
  b.target_mean = target_mean_;
  b.target_std = target_std_;
  return b;
}

JointPosterior GpModel::joint(const Eigen::MatrixXd& points) const {
  if (points.cols() != dimension()) throw InvalidArgument("GpModel::joint: dimension mismatch");
  const Eigen::MatrixXd kxp = kernel_matrix(inputs_, points, hp_);
  Eigen::MatrixXd v = kxp;
  llt_.matrixL().solveInPlace(v);
  JointPosterior out;
  out.mean = kxp.transpose() * alpha_;
  out.covariance = kernel_matrix(points, points, hp_) - v.transpose() * v;
  return out;
}

double log_marginal_likelihood(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& standardized_targets,
                               const GpHyperparameters& hp, double jitter) {
  Eigen::MatrixXd k = kernel_matrix(inputs, inputs, hp);
  k.diagonal().array() += hp.noise_variance + jitter;
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const Eigen::VectorXd alpha = llt.solve(standardized_targets);
  const Eigen::MatrixXd l = llt.matrixL();
  const double n = static_cast<double>(standardized_targets.size());
  return -0.5 * standardized_targets.dot(alpha) - l.diagonal().array().log().sum() -
         0.5 * n * std::log(2.0 * std::numbers::pi);
}

GpModel fit_gp(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& raw_targets,
               const GpFitOptions& opt, GpFitTrace* trace) {
  if (inputs.rows() < 2) throw InvalidArgument("fit_gp: need at least 2 trials");
  if (inputs.rows() != raw_targets.size()) throw InvalidArgument("fit_gp: input/target count mismatch");
  if ((inputs.array() < 0.0).any() || (inputs.array() > 1.0).any())
    throw InvalidArgument("fit_gp: inputs must lie in the unit cube");
  if (opt.restarts < 1) throw InvalidArgument("fit_gp: restarts must be positive");

  Eigen::VectorXd y;
  double mean = 0.0, stddev = 1.0;
  standardize(raw_targets, y, mean, stddev);

  const int d = static_cast<int>(inputs.cols());
  const int n_params = d + 2;
  Eigen::VectorXd lo(n_params), hi(n_params);
  lo.head(d).setConstant(std::log(opt.min_lengthscale));
  hi.head(d).setConstant(std::log(opt.max_lengthscale));
  lo(d) = std::log(opt.min_signal);
  hi(d) = std::log(opt.max_signal);
  lo(d + 1) = std::log(opt.min_noise);
  hi(d + 1) = std::log(opt.max_noise);

  auto unpack = [d](const Eigen::VectorXd& theta) {
    GpHyperparameters hp;
    hp.lengthscales = theta.head(d).array().exp();
    hp.signal_variance = std::exp(theta(d));
    hp.noise_variance = std::exp(theta(d + 1));
    return hp;
  };
  auto objective = [&](const Eigen::VectorXd& theta) {
    return log_marginal_likelihood(inputs, y, unpack(theta), opt.jitter);
  };

  Rng rng(derive_seed(opt.seed, {0x6770ULL}));
  auto uniform = [&rng] { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; };

  Eigen::VectorXd best_theta;
  double best = -std::numeric_limits<double>::infinity();
  GpFitTrace local;
  for (int r = 0; r < opt.restarts; ++r) {
    Eigen::VectorXd theta(n_params);
    if (r == 0) {
      theta.head(d).setConstant(std::log(0.5));
      theta(d) = 0.0;
      theta(d + 1) = std::log(1e-2);
      theta = theta.cwiseMax(lo).cwiseMin(hi);
    } else {
      for (int i = 0; i < n_params; ++i) theta(i) = lo(i) + (hi(i) - lo(i)) * uniform();
    }
    double value = objective(theta);
    local.starts.push_back(unpack(theta));
    local.start_lml.push_back(value);

    double step = opt.initial_step;
    for (int sweep = 0; sweep < opt.max_sweeps && step >= opt.min_step; ++sweep) {
      bool improved = false;
      for (int i = 0; i < n_params; ++i) {
        for (double dir : {+1.0, -1.0}) {
          Eigen::VectorXd trial = theta;
          trial(i) = std::clamp(theta(i) + dir * step, lo(i), hi(i));
          if (trial(i) == theta(i)) continue;
          const double v = objective(trial);
          if (v > value) {
            theta = std::move(trial);
            value = v;
            improved = true;
            break;
          }
        }
      }
      if (!improved) step *= 0.5;
    }
    local.final_lml.push_back(value);
    if (value > best) {
      best = value;
      best_theta = theta;
    }
  }
  if (!std::isfinite(best))
    throw NumericalError("fit_gp: kernel matrix could not be factorized at any restart");
  local.best_lml = best;
  if (trace) *trace = std::move(local);
  return GpModel::condition(inputs, raw_targets, unpack(best_theta), opt.jitter);
}

Eigen::MatrixXd joint_posterior_samples(const GpModel& model, const Eigen::MatrixXd& candidates,
                                        int n_samples, std::uint64_t seed) {
  if (candidates.rows() < 1) throw InvalidArgument("joint_posterior_samples: no candidates");
  if (n_samples < 1) throw InvalidArgument("joint_posterior_samples: n_samples must be positive");
  const JointPosterior jp = model.joint(candidates);
  Eigen::LLT<Eigen::MatrixXd> llt;
  cholesky_with_jitter(jp.covariance, 0.0, llt, "joint posterior covariance");
  const Eigen::MatrixXd l = llt.matrixL();
  NormalSampler normal(seed);
  const Eigen::Index m = candidates.rows();
  Eigen::MatrixXd z(m, n_samples);
  for (Eigen::Index s = 0; s < n_samples; ++s)
    for (Eigen::Index i = 0; i < m; ++i) z(i, s) = normal();
  Eigen::MatrixXd out = (l * z).transpose();
  out.rowwise() += jp.mean.transpose();
  return out;
}

}  // namespace bode
