#include "bode/ensemble.hpp"

#include "bode/error.hpp"
#include "bode/parallel.hpp"

namespace bode {

EnsemblePrediction aggregate(const std::vector<MemberPrediction>& members) {
  if (members.size() < 2) throw InvalidArgument("aggregate: need at least 2 members for an epistemic spread");
  const Eigen::Index n = members.front().mean.size();
  for (const auto& m : members)
    if (m.mean.size() != n || m.variance.size() != n)
      throw InvalidArgument("aggregate: members were evaluated on different batches");
  const double inv_m = 1.0 / static_cast<double>(members.size());

  EnsemblePrediction out;
  out.members = static_cast<int>(members.size());
  out.aleatoric_var = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd second_moment = Eigen::VectorXd::Zero(n);
  // means are accumulated as offsets from the first member, so identical members give exactly zero spread
  const Eigen::VectorXd& ref = members.front().mean;
  Eigen::VectorXd shift = Eigen::VectorXd::Zero(n);
  for (const auto& m : members) {
    shift += m.mean - ref;
    out.aleatoric_var += m.variance;
    second_moment += (m.variance.array() + m.mean.array().square()).matrix();
  }
  shift *= inv_m;
  out.mean = ref + shift;
  out.aleatoric_var *= inv_m;
  out.total_var = (second_moment * inv_m).array() - out.mean.array().square();
  out.epistemic_var = Eigen::VectorXd::Zero(n);
  for (const auto& m : members) out.epistemic_var += (m.mean - ref - shift).array().square().matrix();
  out.epistemic_var *= inv_m;
  return out;
}

namespace {

EnsembleMember train_member(const RegressionTask& task, const DenseNetSpec& spec, const TrainOptions& opt,
                            std::string label, std::optional<HyperConfig> cfg) {
  TrainResult r = train(spec, task.train, task.validation.normalized, opt);
  return EnsembleMember{std::move(label), std::move(cfg), std::move(r.state), std::move(r.trace)};
}

}  // namespace

std::vector<EnsembleMember> train_baseline_ensemble(const RegressionTask& task, const std::vector<std::uint64_t>& seeds,
                                                    const EnsembleTrainOptions& options) {
  if (seeds.empty()) throw InvalidArgument("train_baseline_ensemble: no seeds");
  const DenseNetSpec spec = DenseNetSpec::baseline(task.input_dim);
  std::vector<EnsembleMember> members(seeds.size());
  parallel_for(static_cast<int>(seeds.size()), options.jobs, [&](int i) {
    TrainOptions opt;
    opt.epochs = options.epochs;
    opt.seed = seeds[i];
    members[i] = train_member(task, spec, opt, "baseline_" + std::to_string(i), std::nullopt);
  });
  return members;
}

std::vector<EnsembleMember> train_bode_ensemble(const RegressionTask& task, const std::vector<HyperConfig>& configs,
                                                const std::vector<std::uint64_t>& seeds,
                                                const EnsembleTrainOptions& options) {
  if (configs.size() != seeds.size())
    throw InvalidArgument("train_bode_ensemble: " + std::to_string(configs.size()) + " configs but " +
                          std::to_string(seeds.size()) + " seeds");
  if (configs.empty()) throw InvalidArgument("train_bode_ensemble: no members");
  std::vector<EnsembleMember> members(configs.size());
  parallel_for(static_cast<int>(configs.size()), options.jobs, [&](int i) {
    const auto spec = DenseNetSpec::from_config(task.input_dim, configs[i]);
    members[i] = train_member(task, spec, TrainOptions::from_config(configs[i], options.epochs, seeds[i]),
                              "bode_" + std::to_string(i), configs[i]);
  });
  return members;
}

std::vector<MemberPrediction> member_predictions(const std::vector<EnsembleMember>& members,
                                                 const RegressionTask& task, const EvalSet& set) {
  std::vector<MemberPrediction> out;
  out.reserve(members.size());
  for (const auto& m : members) out.push_back(task.to_raw(predict(m.state, set.normalized.x)));
  return out;
}

EnsemblePrediction predict_ensemble(const std::vector<EnsembleMember>& members, const RegressionTask& task,
                                    const EvalSet& set) {
  return aggregate(member_predictions(members, task, set));
}

}  // namespace bode
