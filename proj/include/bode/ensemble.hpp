#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bode/densenet.hpp"
#include "bode/hyperspace.hpp"
#include "bode/task.hpp"

namespace bode {

/// Aggregated ensemble prediction. The total variance is the mixture
/// variance (1/M) sum(var_i + mean_i^2) - mean^2; it splits into the mean
/// member variance (aleatoric) and the spread of member means (epistemic).
struct EnsemblePrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd total_var;
  Eigen::VectorXd aleatoric_var;
  Eigen::VectorXd epistemic_var;
  int members = 0;

  Eigen::Index size() const { return mean.size(); }
};

EnsemblePrediction aggregate(const std::vector<MemberPrediction>& members);

struct EnsembleMember {
  std::string label;
  std::optional<HyperConfig> config;  // unset for the baseline architecture
  TrainState state;
  std::vector<EpochRecord> trace;
};

struct EnsembleTrainOptions {
  int epochs = BaselineConfig::epochs;
  int jobs = 1;
};

/// Every member uses the baseline configuration; members differ only in seed.
std::vector<EnsembleMember> train_baseline_ensemble(const RegressionTask& task, const std::vector<std::uint64_t>& seeds,
                                                    const EnsembleTrainOptions& options);

/// Member i is trained on the full training split with configs[i] and seeds[i].
std::vector<EnsembleMember> train_bode_ensemble(const RegressionTask& task, const std::vector<HyperConfig>& configs,
                                                const std::vector<std::uint64_t>& seeds,
                                                const EnsembleTrainOptions& options);

/// Member predictions on `set`, de-normalized to raw target units.
std::vector<MemberPrediction> member_predictions(const std::vector<EnsembleMember>& members,
                                                 const RegressionTask& task, const EvalSet& set);

EnsemblePrediction predict_ensemble(const std::vector<EnsembleMember>& members, const RegressionTask& task,
                                    const EvalSet& set);

}  // namespace bode
