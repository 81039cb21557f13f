#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "bode/gp.hpp"

namespace bode {

struct AcquisitionEval {
  Eigen::VectorXd candidate;
  double score = 0.0;
  int n_mc_samples = 0;
};

/// Monte-Carlo noisy expected improvement for minimization:
///   E[ max(min_j f(b_j) - f(c), 0) ]
/// over joint posterior draws of the latent objective at the baseline points
/// b_j and the candidate c. Base samples are drawn once per scorer, so every
/// candidate scored by the same scorer shares one random-number stream.
class QneiScorer {
 public:
  QneiScorer(const GpModel& model, const Eigen::MatrixXd& baseline_points, int n_mc_samples,
             std::uint64_t seed);

  double score(const Eigen::VectorXd& candidate) const;
  int n_mc_samples() const { return static_cast<int>(z_candidate_.size()); }

 private:
  const GpModel* model_;
  Eigen::MatrixXd baseline_;
  Eigen::MatrixXd baseline_whitened_;  // L^{-1} k(train, baseline)
  Eigen::MatrixXd baseline_chol_;      // Cholesky factor of the baseline posterior covariance
  Eigen::MatrixXd z_baseline_;         // n_baseline x n_mc
  Eigen::VectorXd z_candidate_;        // n_mc
  Eigen::VectorXd best_baseline_;      // per-sample min over baseline draws
  double jitter_ = 0.0;
};

AcquisitionEval qnei_score(const GpModel& model, const Eigen::VectorXd& candidate,
                           const Eigen::MatrixXd& baseline_points, int n_mc_samples,
                           std::uint64_t seed);

struct ProposalOptions {
  int n_raw = 512;
  int n_refine = 4;
  int refine_steps = 32;
  double initial_step = 0.05;
  int n_mc_samples = 256;
};

/// Scores of the first `n_raw` raw candidates for `seed` (Sobol points), in
/// candidate order. Exposed so the sweep can be inspected on its own.
std::vector<AcquisitionEval> score_raw_candidates(const QneiScorer& scorer, int dimension,
                                                  int n_raw, std::uint64_t seed);

/// Maximizes qNEI over the unit cube: a Sobol sweep of raw candidates, then
/// coordinate hill-climbing from the best `n_refine`. Ties go to the lowest
/// candidate index; a refined point replaces its start only on strict gain.
Eigen::VectorXd propose_next(const GpModel& model, const Eigen::MatrixXd& baseline_points,
                             const ProposalOptions& options, std::uint64_t seed);

}  // namespace bode
