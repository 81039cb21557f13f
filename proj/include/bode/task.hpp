#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "bode/densenet.hpp"
#include "bode/field.hpp"

namespace bode {

/// Held-out evaluation points with everything needed for metrics and export.
struct EvalSet {
  Samples normalized;            // network inputs and normalized targets
  Eigen::VectorXd y_raw;         // targets as observed (noisy when noise is on)
  Eigen::VectorXd y_clean;       // noise-free targets
  Eigen::VectorXd noise_std;     // std of the injected noise per point (0 when clean)
  Eigen::MatrixXd coords;        // x, z, t per point (t in seconds); empty for non-field tasks
  Eigen::Index size() const { return y_raw.size(); }
};

/// Everything the optimizer and ensemble trainers see of a dataset. The
/// optimizer only ever touches bo_train / bo_val.
struct RegressionTask {
  int input_dim = 1;
  double target_mean = 0.0;  // raw = normalized * target_std + target_mean
  double target_std = 1.0;

  EpochSampler train;
  EvalSet validation;
  EpochSampler bo_train;
  EvalSet bo_validation;
  EvalSet test;

  SplitLedger ledger;
  /// Ledger units feeding each sampler or set.
  std::vector<int> train_units, val_units, bo_train_units, bo_val_units, test_units;

  /// Throws if the optimization data overlaps the test split.
  void assert_optimization_isolated() const;

  MemberPrediction to_raw(const MemberPrediction& normalized) const;
};

struct FieldTaskOptions {
  int cells_per_frame = 8;        // training cells drawn per frame per epoch
  int eval_cells_per_frame = 16;  // fixed cells per validation frame
  std::optional<NoiseSpec> noise;
  std::uint64_t seed = 0;
};

/// Epoch index used for the fixed noise draw of validation and test targets.
inline constexpr std::uint64_t kEvaluationEpoch = 0xFFFFFFFFULL;

RegressionTask make_field_task(const FieldDataset& ds, const FieldTaskOptions& options);

struct SineTaskOptions {
  int n_points = 500;
  double noise_std = 0.05;
  std::uint64_t seed = 0;
  SplitFractions fractions;
};

/// y = sin(x) + noise on x uniform in [-pi, pi]; one ledger unit per point.
RegressionTask make_sine_task(const SineTaskOptions& options);

}  // namespace bode
