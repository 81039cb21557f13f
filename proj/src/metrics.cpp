#include "bode/metrics.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "bode/error.hpp"

namespace bode {

namespace {

void check_sizes(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, const char* what) {
  if (y.size() == 0) throw InvalidArgument(std::string(what) + ": empty input");
  if (y.size() != mu.size()) throw InvalidArgument(std::string(what) + ": length mismatch");
}

}  // namespace

double rmse(const Eigen::VectorXd& y, const Eigen::VectorXd& mu) {
  check_sizes(y, mu, "rmse");
  return std::sqrt((y - mu).squaredNorm() / static_cast<double>(y.size()));
}

double r_squared(const Eigen::VectorXd& y, const Eigen::VectorXd& mu) {
  check_sizes(y, mu, "r_squared");
  const double ss_tot = (y.array() - y.mean()).square().sum();
  if (!(ss_tot > 0.0)) throw InvalidArgument("r_squared: targets have zero variance");
  return 1.0 - (y - mu).squaredNorm() / ss_tot;
}

double mean_nll(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, const Eigen::VectorXd& var) {
  check_sizes(y, mu, "mean_nll");
  check_sizes(y, var, "mean_nll");
  const Eigen::ArrayXd r = y - mu;
  return (0.5 * (2.0 * std::numbers::pi * var.array()).log() + r.square() / (2.0 * var.array())).mean();
}

double central_normal_quantile(double nominal) {
  if (!(nominal > 0.0 && nominal < 1.0)) throw InvalidArgument("central_normal_quantile: nominal must be in (0,1)");
  // bisection on erf(z / sqrt 2) = nominal
  double lo = 0.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (std::erf(mid / std::numbers::sqrt2) < nominal ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double coverage(const Eigen::VectorXd& y, const EnsemblePrediction& pred, double nominal) {
  check_sizes(y, pred.mean, "coverage");
  const double z = central_normal_quantile(nominal);
  Eigen::Index hit = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (std::abs(y[i] - pred.mean[i]) <= z * std::sqrt(std::max(0.0, pred.total_var[i]))) ++hit;
  return static_cast<double>(hit) / static_cast<double>(y.size());
}

UncertaintySummary summarize_uncertainty(const EnsemblePrediction& p) {
  UncertaintySummary s;
  auto stats = [](const Eigen::VectorXd& var, double& mean, double& max) {
    const Eigen::ArrayXd sd = var.array().max(0.0).sqrt();
    mean = sd.mean();
    max = sd.maxCoeff();
  };
  stats(p.total_var, s.mean_total_std, s.max_total_std);
  stats(p.aleatoric_var, s.mean_aleatoric_std, s.max_aleatoric_std);
  stats(p.epistemic_var, s.mean_epistemic_std, s.max_epistemic_std);
  return s;
}

MetricReport evaluate_ensemble(const std::string& split, const EvalSet& set, const EnsemblePrediction& pred,
                               const std::vector<MemberPrediction>& members) {
  MetricReport r;
  r.split = split;
  r.rmse = rmse(set.y_raw, pred.mean);
  r.rmse_vs_clean = rmse(set.y_clean, pred.mean);
  r.r2 = r_squared(set.y_raw, pred.mean);
  r.mean_nll = mean_nll(set.y_raw, pred.mean, pred.total_var);
  r.coverage_68 = coverage(set.y_raw, pred, 0.68);
  r.coverage_95 = coverage(set.y_raw, pred, 0.95);
  r.target_rms = std::sqrt(set.y_clean.squaredNorm() / static_cast<double>(set.size()));
  r.mean_injected_std = set.noise_std.mean();
  r.uncertainty = summarize_uncertainty(pred);
  for (const auto& m : members) r.member_rmse.push_back(rmse(set.y_raw, m.mean));
  return r;
}

nlohmann::json to_json(const MetricReport& r) {
  const auto& u = r.uncertainty;
  return {{"split", r.split},
          {"rmse", r.rmse},
          {"rmse_vs_clean", r.rmse_vs_clean},
          {"r2", r.r2},
          {"mean_nll", r.mean_nll},
          {"coverage_68", r.coverage_68},
          {"coverage_95", r.coverage_95},
          {"target_rms", r.target_rms},
          {"mean_injected_std", r.mean_injected_std},
          {"member_rmse", r.member_rmse},
          {"uncertainty",
           {{"mean_total_std", u.mean_total_std},
            {"max_total_std", u.max_total_std},
            {"mean_aleatoric_std", u.mean_aleatoric_std},
            {"max_aleatoric_std", u.max_aleatoric_std},
            {"mean_epistemic_std", u.mean_epistemic_std},
            {"max_epistemic_std", u.max_epistemic_std}}}};
}

MetricReport metric_report_from_json(const nlohmann::json& j) {
  MetricReport r;
  r.split = j.at("split");
  r.rmse = j.at("rmse");
  r.rmse_vs_clean = j.at("rmse_vs_clean");
  r.r2 = j.at("r2");
  r.mean_nll = j.at("mean_nll");
  r.coverage_68 = j.at("coverage_68");
  r.coverage_95 = j.at("coverage_95");
  r.target_rms = j.at("target_rms");
  r.mean_injected_std = j.at("mean_injected_std");
  r.member_rmse = j.at("member_rmse").get<std::vector<double>>();
  const auto& u = j.at("uncertainty");
  r.uncertainty.mean_total_std = u.at("mean_total_std");
  r.uncertainty.max_total_std = u.at("max_total_std");
  r.uncertainty.mean_aleatoric_std = u.at("mean_aleatoric_std");
  r.uncertainty.max_aleatoric_std = u.at("max_aleatoric_std");
  r.uncertainty.mean_epistemic_std = u.at("mean_epistemic_std");
  r.uncertainty.max_epistemic_std = u.at("max_epistemic_std");
  return r;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out.precision(17);
  return out;
}

}  // namespace

void write_prediction_csvs(const std::filesystem::path& dir, const EvalSet& set, const EnsemblePrediction& pred) {
  if (set.coords.rows() != set.size()) throw InvalidArgument("write_prediction_csvs: evaluation set has no coordinates");
  {
    auto out = open_out(dir / "predictions.csv");
    out << kPredictionsHeader << '\n';
    for (Eigen::Index i = 0; i < set.size(); ++i)
      out << set.coords(i, 0) << ',' << set.coords(i, 1) << ',' << set.coords(i, 2) << ',' << set.y_raw[i] << ','
          << pred.mean[i] << '\n';
    if (!out) throw IoError((dir / "predictions.csv").string(), "write failed");
  }
  auto out = open_out(dir / "uncertainty.csv");
  out << kUncertaintyHeader << '\n';
  for (Eigen::Index i = 0; i < set.size(); ++i)
    out << set.coords(i, 0) << ',' << set.coords(i, 1) << ',' << set.coords(i, 2) << ',' << pred.mean[i] << ','
        << pred.total_var[i] << ',' << pred.aleatoric_var[i] << ',' << pred.epistemic_var[i] << '\n';
  if (!out) throw IoError((dir / "uncertainty.csv").string(), "write failed");
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError(path.string(), "write failed");
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string(), e.what());
  }
}

void write_trials(const std::filesystem::path& path, const std::vector<TrialLog>& logs) {
  auto out = open_out(path);
  for (const auto& log : logs) write_trials_jsonl(out, log);
  if (!out) throw IoError(path.string(), "write failed");
}

}  // namespace bode
