#include "bode/orchestrator.hpp"

#include <chrono>
#include <cmath>
#include <istream>
#include <json.hpp>
#include <ostream>

#include "bode/error.hpp"
#include "bode/gp.hpp"
#include "bode/parallel.hpp"
#include "bode/quasirand.hpp"

namespace bode {

const char* to_string(TrialPhase p) { return p == TrialPhase::sobol ? "sobol" : "bo"; }

int TrialLog::best_index() const {
  int best = -1;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    if (!std::isfinite(trials[i].rmse)) continue;
    if (best < 0 || trials[i].rmse < trials[best].rmse) best = static_cast<int>(i);
  }
  return best;
}

std::vector<double> TrialLog::running_min() const {
  std::vector<double> out;
  double m = std::numeric_limits<double>::infinity();
  for (const auto& t : trials) {
    m = std::min(m, t.rmse);
    out.push_back(m);
  }
  return out;
}

void write_trials_jsonl(std::ostream& out, const TrialLog& log) {
  for (const auto& t : log.trials) {
    nlohmann::json j = {{"member", log.member},
                        {"iter", t.iteration},
                        {"phase", to_string(t.phase)},
                        {"point", t.point},
                        {"config", t.config},
                        {"rmse", std::isfinite(t.rmse) ? nlohmann::json(t.rmse) : nlohmann::json(nullptr)},
                        {"wall_time_s", t.wall_time_s},
                        {"error", t.error}};
    out << j.dump() << '\n';
  }
}

std::vector<TrialLog> read_trials_jsonl(std::istream& in) {
  std::vector<TrialLog> logs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const int member = j.at("member");
    if (logs.empty() || logs.back().member != member) {
      logs.emplace_back();
      logs.back().member = member;
    }
    Trial t;
    t.iteration = j.at("iter");
    t.phase = j.at("phase") == "sobol" ? TrialPhase::sobol : TrialPhase::bo;
    t.point = j.at("point").get<hyperspace::Point>();
    t.config = j.at("config").get<HyperConfig>();
    t.rmse = j.at("rmse").is_null() ? std::numeric_limits<double>::infinity() : j.at("rmse").get<double>();
    t.wall_time_s = j.at("wall_time_s");
    t.error = j.value("error", "");
    auto& log = logs.back();
    (t.phase == TrialPhase::sobol ? log.n_sobol : log.n_bo)++;
    log.trials.push_back(std::move(t));
  }
  return logs;
}

std::uint64_t bode_member_seed(std::uint64_t master_seed, int member) {
  return derive_seed(master_seed, {0xb0deULL, static_cast<std::uint64_t>(member)});
}
std::uint64_t bode_final_seed(std::uint64_t member_seed) { return derive_seed(member_seed, {0xf17a1ULL}); }
std::uint64_t baseline_member_seed(std::uint64_t master_seed, int member) {
  return derive_seed(master_seed, {0xba5eULL, static_cast<std::uint64_t>(member)});
}

namespace {

double evaluate_trial(const RegressionTask& task, const HyperConfig& cfg, int epochs, std::uint64_t seed) {
  const auto spec = DenseNetSpec::from_config(task.input_dim, cfg);
  const TrainResult r = train(spec, task.bo_train, Samples{}, TrainOptions::from_config(cfg, epochs, seed));
  const MemberPrediction raw = task.to_raw(predict(r.state, task.bo_validation.normalized.x));
  const double mse = (task.bo_validation.y_raw - raw.mean).squaredNorm() / static_cast<double>(raw.mean.size());
  return std::sqrt(mse);
}

}  // namespace

MemberBoResult run_member_bo(const RegressionTask& task, const BoBudget& budget, int member, std::uint64_t member_seed) {
  if (budget.n_sobol < 2) throw InvalidArgument("run_member_bo: need at least 2 Sobol trials");
  if (budget.n_total < budget.n_sobol) throw InvalidArgument("run_member_bo: n_total smaller than n_sobol");
  if (budget.epochs_per_trial < 1) throw InvalidArgument("run_member_bo: epochs_per_trial must be positive");
  if (member < 0) throw InvalidArgument("run_member_bo: negative member index");
  task.assert_optimization_isolated();

  MemberBoResult result;
  TrialLog& log = result.log;
  log.member = member;
  log.n_sobol = budget.n_sobol;
  log.n_bo = budget.n_total - budget.n_sobol;

  SobolGenerator sobol(hyperspace::kDimension, 1 + static_cast<std::uint64_t>(member) * budget.n_sobol);

  auto run_trial = [&](int it, TrialPhase phase, const hyperspace::Point& u) {
    Trial t;
    t.iteration = it;
    t.phase = phase;
    t.point = u;
    t.config = hyperspace::decode(u);
    const auto start = std::chrono::steady_clock::now();
    try {
      t.rmse = evaluate_trial(task, t.config, budget.epochs_per_trial, derive_seed(member_seed, {0x7e1aULL, static_cast<std::uint64_t>(it)}));
      if (!std::isfinite(t.rmse)) t.error = "non-finite validation RMSE";
    } catch (const NonFiniteLoss& e) {
      t.error = e.what();
    } catch (const NumericalError& e) {
      t.error = e.what();
    }
    if (!t.error.empty()) t.rmse = std::numeric_limits<double>::infinity();
    t.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.trials.push_back(std::move(t));
  };

  auto next_sobol = [&sobol] {
    const auto p = sobol.next_point();
    hyperspace::Point u;
    std::copy(p.begin(), p.end(), u.begin());
    return u;
  };

  for (int it = 0; it < budget.n_sobol; ++it) run_trial(it, TrialPhase::sobol, next_sobol());

  for (int it = budget.n_sobol; it < budget.n_total; ++it) {
    // the surrogate is refit on the whole history every iteration; failed trials are left out
    std::vector<int> ok;
    for (std::size_t i = 0; i < log.trials.size(); ++i)
      if (std::isfinite(log.trials[i].rmse)) ok.push_back(static_cast<int>(i));
    if (budget.sobol_only || ok.size() < 2) {
      run_trial(it, TrialPhase::bo, next_sobol());
      continue;
    }
    Eigen::MatrixXd x(static_cast<Eigen::Index>(ok.size()), hyperspace::kDimension);
    Eigen::VectorXd y(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const auto& t = log.trials[ok[r]];
      for (int d = 0; d < hyperspace::kDimension; ++d) x(r, d) = t.point[d];
      y[r] = t.rmse;
    }
    GpFitOptions gp_opt;
    gp_opt.restarts = budget.gp_restarts;
    gp_opt.seed = derive_seed(member_seed, {0x6bULL, static_cast<std::uint64_t>(it)});
    const GpModel model = fit_gp(x, y, gp_opt);
    const Eigen::VectorXd next = propose_next(model, x, budget.proposal, derive_seed(member_seed, {0xac9ULL, static_cast<std::uint64_t>(it)}));
    hyperspace::Point u;
    for (int d = 0; d < hyperspace::kDimension; ++d) u[d] = std::clamp(next[d], 0.0, 1.0);
    run_trial(it, TrialPhase::bo, u);
  }

  const int best = log.best_index();
  if (best < 0) throw Error("run_member_bo: every trial of member " + std::to_string(member) + " failed");
  result.best = log.trials[best].config;
  return result;
}

std::vector<MemberBoResult> run_bode_search(const RegressionTask& task, const BodeOptions& o) {
  if (o.members < 1) throw InvalidArgument("run_bode: members must be positive");
  std::vector<MemberBoResult> out(o.members);
  parallel_for(o.members, o.jobs, [&](int m) { out[m] = run_member_bo(task, o.budget, m, bode_member_seed(o.master_seed, m)); });
  return out;
}

BodeResult run_bode(const RegressionTask& task, const BodeOptions& o) {
  if (o.final_epochs < 1) throw InvalidArgument("run_bode: final_epochs must be positive");
  auto search = run_bode_search(task, o);
  BodeResult r;
  std::vector<std::uint64_t> final_seeds;
  for (int m = 0; m < o.members; ++m) {
    r.member_seeds.push_back(bode_member_seed(o.master_seed, m));
    final_seeds.push_back(bode_final_seed(r.member_seeds.back()));
    r.winners.push_back(search[m].best);
    r.logs.push_back(std::move(search[m].log));
  }
  EnsembleTrainOptions eo;
  eo.epochs = o.final_epochs;
  eo.jobs = o.jobs;
  r.members = train_bode_ensemble(task, r.winners, final_seeds, eo);
  return r;
}

}  // namespace bode
