#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "bode/densenet.hpp"
#include "bode/ensemble.hpp"
#include "bode/orchestrator.hpp"
#include "bode/task.hpp"

namespace bode {

double rmse(const Eigen::VectorXd& y, const Eigen::VectorXd& mu);
/// 1 - SS_res / SS_tot; throws when the targets have zero variance.
double r_squared(const Eigen::VectorXd& y, const Eigen::VectorXd& mu);
/// Mean Gaussian negative log-likelihood including the log(2 pi)/2 constant.
double mean_nll(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, const Eigen::VectorXd& var);
/// Fraction of points with |y - mean| <= z * sqrt(total_var), z the central
/// Gaussian quantile for `nominal`.
double coverage(const Eigen::VectorXd& y, const EnsemblePrediction& pred, double nominal);
/// Two-sided standard normal quantile: P(|Z| <= z) = nominal.
double central_normal_quantile(double nominal);

struct UncertaintySummary {
  double mean_total_std = 0.0, max_total_std = 0.0;
  double mean_aleatoric_std = 0.0, max_aleatoric_std = 0.0;
  double mean_epistemic_std = 0.0, max_epistemic_std = 0.0;
};
UncertaintySummary summarize_uncertainty(const EnsemblePrediction& pred);

struct MetricReport {
  std::string split;
  double rmse = 0.0;
  double rmse_vs_clean = 0.0;
  double r2 = 0.0;
  double mean_nll = 0.0;
  double coverage_68 = 0.0;
  double coverage_95 = 0.0;
  double target_rms = 0.0;          // sqrt(mean(y_clean^2))
  double mean_injected_std = 0.0;   // 0 for clean data
  UncertaintySummary uncertainty;
  std::vector<double> member_rmse;
};

MetricReport evaluate_ensemble(const std::string& split, const EvalSet& set, const EnsemblePrediction& pred,
                               const std::vector<MemberPrediction>& members);

nlohmann::json to_json(const MetricReport& r);
MetricReport metric_report_from_json(const nlohmann::json& j);

inline constexpr const char* kPredictionsHeader = "x,z,t,y_true,y_pred";
inline constexpr const char* kUncertaintyHeader = "x,z,t,mean,total_var,aleatoric_var,epistemic_var";

/// Writes predictions.csv and uncertainty.csv for a field evaluation set.
void write_prediction_csvs(const std::filesystem::path& dir, const EvalSet& set, const EnsemblePrediction& pred);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);
void write_trials(const std::filesystem::path& path, const std::vector<TrialLog>& logs);

}  // namespace bode
