#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "bode/acquisition.hpp"
#include "bode/ensemble.hpp"
#include "bode/hyperspace.hpp"
#include "bode/task.hpp"

namespace bode {

enum class TrialPhase { sobol, bo };
const char* to_string(TrialPhase p);

struct Trial {
  int iteration = 0;
  TrialPhase phase = TrialPhase::sobol;
  hyperspace::Point point{};
  HyperConfig config;
  double rmse = std::numeric_limits<double>::infinity();  // +inf marks a failed trial
  double wall_time_s = 0.0;
  std::string error;  // failure diagnostic, empty on success
};

struct TrialLog {
  int member = 0;
  int n_sobol = 0;
  int n_bo = 0;
  std::vector<Trial> trials;

  int n_total() const { return n_sobol + n_bo; }
  /// Index of the lowest-RMSE trial (first one on ties); -1 if all failed.
  int best_index() const;
  /// min RMSE over trials [0, i] for every i.
  std::vector<double> running_min() const;
};

/// One JSON object per line: member, iter, phase, point, config, rmse
/// (null for failures), wall_time_s, error.
void write_trials_jsonl(std::ostream& out, const TrialLog& log);
std::vector<TrialLog> read_trials_jsonl(std::istream& in);

struct BoBudget {
  int n_sobol = 8;            // N_0
  int n_total = 30;           // N_T = N_0 + N_A
  int epochs_per_trial = 60;
  int gp_restarts = 8;
  ProposalOptions proposal;
  /// Replaces the BO phase by further Sobol points (random-search reference).
  bool sobol_only = false;
};

struct MemberBoResult {
  HyperConfig best;
  TrialLog log;
};

/// Sobol exploration followed by GP-guided proposals; every trial trains on
/// bo_train and is scored by RMSE (raw target units) on bo_validation.
MemberBoResult run_member_bo(const RegressionTask& task, const BoBudget& budget, int member,
                             std::uint64_t member_seed);

struct BodeOptions {
  int members = 5;
  BoBudget budget;
  int final_epochs = BaselineConfig::epochs;
  std::uint64_t master_seed = 0;
  int jobs = 1;
};

struct BodeResult {
  std::vector<TrialLog> logs;
  std::vector<HyperConfig> winners;
  std::vector<std::uint64_t> member_seeds;
  std::vector<EnsembleMember> members;
};

std::uint64_t bode_member_seed(std::uint64_t master_seed, int member);
std::uint64_t bode_final_seed(std::uint64_t member_seed);
std::uint64_t baseline_member_seed(std::uint64_t master_seed, int member);

/// Independent optimization per member, then the winners are retrained on
/// the full training split for `final_epochs`.
BodeResult run_bode(const RegressionTask& task, const BodeOptions& options);

/// Only the optimization half of run_bode.
std::vector<MemberBoResult> run_bode_search(const RegressionTask& task, const BodeOptions& options);

}  // namespace bode
