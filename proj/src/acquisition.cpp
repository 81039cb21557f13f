#include "bode/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bode/error.hpp"
#include "bode/quasirand.hpp"
#include "bode/random.hpp"

namespace bode {

QneiScorer::QneiScorer(const GpModel& model, const Eigen::MatrixXd& baseline_points, int n_mc_samples,
                       std::uint64_t seed)
    : model_(&model), baseline_(baseline_points) {
  if (baseline_points.rows() < 1) throw InvalidArgument("qNEI: baseline set is empty");
  if (baseline_points.cols() != model.dimension()) throw InvalidArgument("qNEI: baseline dimension mismatch");
  if (n_mc_samples < 1) throw InvalidArgument("qNEI: n_mc_samples must be positive");

  const JointPosterior jp = model.joint(baseline_);
  Eigen::LLT<Eigen::MatrixXd> llt;
  jitter_ = cholesky_with_jitter(jp.covariance, 0.0, llt, "qNEI baseline covariance");
  baseline_chol_ = llt.matrixL();
  baseline_whitened_ = model.whitened_cross(baseline_);

  const Eigen::Index nb = baseline_.rows();
  NormalSampler normal(seed);
  z_baseline_.resize(nb, n_mc_samples);
  z_candidate_.resize(n_mc_samples);
  for (int s = 0; s < n_mc_samples; ++s) {
    for (Eigen::Index i = 0; i < nb; ++i) z_baseline_(i, s) = normal();
    z_candidate_(s) = normal();
  }
  const Eigen::MatrixXd draws = (baseline_chol_ * z_baseline_).colwise() + jp.mean;
  best_baseline_ = draws.colwise().minCoeff().transpose();
}

double QneiScorer::score(const Eigen::VectorXd& candidate) const {
  if (candidate.size() != model_->dimension()) throw InvalidArgument("qNEI: candidate dimension mismatch");
  const Eigen::MatrixXd c = candidate.transpose();
  const Eigen::VectorXd v = model_->whitened_cross(c).col(0);
  const double mean = model_->cross_kernel(c).row(0).dot(model_->alpha());
  const double var = model_->hyperparameters().signal_variance - v.squaredNorm();
  // cross covariance with the baseline, then the last row of the joint Cholesky factor
  Eigen::VectorXd cross = model_->prior_covariance(baseline_, c).col(0) - baseline_whitened_.transpose() * v;
  baseline_chol_.triangularView<Eigen::Lower>().solveInPlace(cross);
  const double resid = std::sqrt(std::max(0.0, var + jitter_ - cross.squaredNorm()));

  double total = 0.0;
  const Eigen::VectorXd f = (z_baseline_.transpose() * cross).array() + mean + resid * z_candidate_.array();
  for (Eigen::Index s = 0; s < f.size(); ++s) total += std::max(0.0, best_baseline_(s) - f(s));
  return total / static_cast<double>(f.size());
}

AcquisitionEval qnei_score(const GpModel& model, const Eigen::VectorXd& candidate,
                           const Eigen::MatrixXd& baseline_points, int n_mc_samples, std::uint64_t seed) {
  QneiScorer scorer(model, baseline_points, n_mc_samples, seed);
  return {candidate, scorer.score(candidate), n_mc_samples};
}

std::vector<AcquisitionEval> score_raw_candidates(const QneiScorer& scorer, int dimension, int n_raw,
                                                  std::uint64_t seed) {
  if (n_raw < 1) throw InvalidArgument("propose_next: n_raw must be positive");
  SobolGenerator sobol(dimension, 1 + (mix64(seed) & 0xFFFFFULL));
  std::vector<AcquisitionEval> out;
  out.reserve(n_raw);
  for (int i = 0; i < n_raw; ++i) {
    const auto p = sobol.next_point();
    Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(p.data(), dimension);
    const double s = scorer.score(x);
    out.push_back({std::move(x), s, scorer.n_mc_samples()});
  }
  return out;
}

Eigen::VectorXd propose_next(const GpModel& model, const Eigen::MatrixXd& baseline_points,
                             const ProposalOptions& opt, std::uint64_t seed) {
  if (opt.n_refine < 0 || opt.refine_steps < 0) throw InvalidArgument("propose_next: negative refinement budget");
  const QneiScorer scorer(model, baseline_points, opt.n_mc_samples, derive_seed(seed, {0x7165ULL}));
  const int d = model.dimension();
  const auto raw = score_raw_candidates(scorer, d, opt.n_raw, seed);

  std::vector<int> order(raw.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return raw[a].score > raw[b].score; });

  // best over raw candidates, lowest index on ties
  int best_index = order.front();
  Eigen::VectorXd best = raw[best_index].candidate;
  double best_score = raw[best_index].score;

  const int n_refine = std::min<int>(opt.n_refine, static_cast<int>(order.size()));
  for (int r = 0; r < n_refine; ++r) {
    Eigen::VectorXd x = raw[order[r]].candidate;
    double s = raw[order[r]].score;
    double step = opt.initial_step;
    for (int it = 0; it < opt.refine_steps; ++it) {
      bool moved = false;
      for (int k = 0; k < d && !moved; ++k) {
        for (double dir : {+1.0, -1.0}) {
          Eigen::VectorXd y = x;
          y(k) = std::clamp(x(k) + dir * step, 0.0, 1.0);
          if (y(k) == x(k)) continue;
          const double sy = scorer.score(y);
          if (sy > s) {
            x = std::move(y);
            s = sy;
            moved = true;
            break;
          }
        }
      }
      if (!moved) step *= 0.5;
    }
    if (s > best_score) {
      best_score = s;
      best = x;
    }
  }
  return best;
}

}  // namespace bode
