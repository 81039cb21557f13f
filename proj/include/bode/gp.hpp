#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace bode {

/// ARD squared-exponential kernel: s * exp(-sum_d (x_d - y_d)^2 / (2 l_d^2)).
double rbf_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& lengthscales, double signal_variance);

struct GpHyperparameters {
  Eigen::VectorXd lengthscales;
  double signal_variance = 1.0;
  double noise_variance = 1e-6;
};

/// Posterior over the latent objective at one point. `mean` and `variance`
/// are in standardized units; raw_* undo the target standardization.
struct PosteriorBelief {
  double mean = 0.0;
  double variance = 0.0;
  double target_mean = 0.0;
  double target_std = 1.0;

  double raw_mean() const { return mean * target_std + target_mean; }
  double raw_variance() const { return variance * target_std * target_std; }
};

/// Joint Gaussian posterior over a set of points (standardized units).
struct JointPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

/// Factorizes a symmetric matrix, adding jitter * I from `first_jitter`
/// upward (x10 per retry, at least 1e-10) until it succeeds or exceeds 1e-4.
/// Returns the jitter that was used.
double cholesky_with_jitter(const Eigen::MatrixXd& a, double first_jitter,
                            Eigen::LLT<Eigen::MatrixXd>& out, const char* what);

/// A conditioned Gaussian process with zero prior mean on standardized
/// targets. Immutable once built.
class GpModel {
 public:
  /// Conditions on (inputs, raw targets) with fixed hyperparameters.
  static GpModel condition(Eigen::MatrixXd inputs, const Eigen::VectorXd& raw_targets,
                           GpHyperparameters hp, double jitter = 0.0);

  int dimension() const { return static_cast<int>(inputs_.cols()); }
  int size() const { return static_cast<int>(inputs_.rows()); }
  const Eigen::MatrixXd& inputs() const { return inputs_; }
  const Eigen::VectorXd& standardized_targets() const { return targets_; }
  const GpHyperparameters& hyperparameters() const { return hp_; }
  double target_mean() const { return target_mean_; }
  double target_std() const { return target_std_; }
  double jitter() const { return jitter_; }
  /// (K + noise I)^{-1} y for the standardized targets.
  const Eigen::VectorXd& alpha() const { return alpha_; }
  /// Lower Cholesky factor of K + (noise + jitter) I.
  Eigen::MatrixXd cholesky_factor() const { return llt_.matrixL(); }

  double log_marginal_likelihood() const;

  PosteriorBelief posterior(const Eigen::VectorXd& x) const;
  JointPosterior joint(const Eigen::MatrixXd& points) const;

  /// Prior cross-covariance k(points_i, train_j), rows = points.
  Eigen::MatrixXd cross_kernel(const Eigen::MatrixXd& points) const;
  /// L^{-1} k(train, points); columns = points.
  Eigen::MatrixXd whitened_cross(const Eigen::MatrixXd& points) const;
  Eigen::MatrixXd prior_covariance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) const;

 private:
  Eigen::MatrixXd inputs_;
  Eigen::VectorXd targets_;
  GpHyperparameters hp_;
  double target_mean_ = 0.0;
  double target_std_ = 1.0;
  double jitter_ = 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
};

struct GpFitOptions {
  int restarts = 8;
  std::uint64_t seed = 0;
  double jitter = 0.0;
  double min_lengthscale = 0.01, max_lengthscale = 10.0;
  double min_noise = 1e-6, max_noise = 1.0;
  double min_signal = 0.05, max_signal = 20.0;
  double initial_step = 1.0;  // in log-parameter space
  double min_step = 1e-3;
  int max_sweeps = 200;
};

/// Per-restart record, kept for diagnostics and tests.
struct GpFitTrace {
  std::vector<GpHyperparameters> starts;
  std::vector<double> start_lml;
  std::vector<double> final_lml;
  double best_lml = 0.0;
};

/// Log marginal likelihood of standardized targets under `hp`; -inf when the
/// kernel cannot be factorized.
double log_marginal_likelihood(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& standardized_targets,
                               const GpHyperparameters& hp, double jitter = 0.0);

/// Maximizes the log marginal likelihood by multi-start coordinate descent in
/// log space and conditions on the result.
GpModel fit_gp(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& raw_targets,
               const GpFitOptions& options = {}, GpFitTrace* trace = nullptr);

/// n_samples x candidates.rows() draws from the joint posterior of the latent
/// function (standardized units).
Eigen::MatrixXd joint_posterior_samples(const GpModel& model, const Eigen::MatrixXd& candidates,
                                        int n_samples, std::uint64_t seed);

}  // namespace bode
