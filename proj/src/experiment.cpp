#include "bode/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "bode/ensemble.hpp"
#include "bode/error.hpp"
#include "bode/field.hpp"
#include "bode/metrics.hpp"
#include "bode/orchestrator.hpp"

namespace bode {

namespace fs = std::filesystem;

const char* to_string(Command c) {
  switch (c) {
    case Command::generate: return "generate";
    case Command::baseline: return "baseline";
    case Command::bode: return "bode";
    case Command::evaluate: return "evaluate";
  }
  return "?";
}

Command command_from_string(const std::string& s) {
  for (Command c : {Command::generate, Command::baseline, Command::bode, Command::evaluate})
    if (s == to_string(c)) return c;
  throw InvalidArgument("unknown command '" + s + "'");
}

// ---------------------------------------------------------------------------
// config

#define BODE_CONFIG_FIELDS(X)                                                                          \
  X(out) X(dataset) X(seed) X(jobs) X(force) X(nx) X(nz) X(timesteps) X(preview_noise) X(members)      \
  X(epochs) X(noise) X(filter_width) X(cells_per_frame) X(eval_cells_per_frame) X(sobol) X(iters)      \
  X(trial_epochs) X(gp_restarts) X(n_raw) X(n_refine) X(mc_samples) X(runs)

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j = nlohmann::json::object();
#define X(name) j[#name] = c.name;
  BODE_CONFIG_FIELDS(X)
#undef X
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& in, RunConfig c) {
  const nlohmann::json& j = in.contains("config") && in.at("config").is_object() ? in.at("config") : in;
  if (!j.is_object()) throw InvalidArgument("config: expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    try {
#define X(name)                        \
  if (key == #name) {                  \
    it.value().get_to(c.name);         \
    continue;                          \
  }
      BODE_CONFIG_FIELDS(X)
#undef X
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument("config: bad value for '" + key + "': " + e.what());
    }
    throw InvalidArgument("config: unknown key '" + key + "'");
  }
  return c;
}

#undef BODE_CONFIG_FIELDS

void RunConfig::validate(Command cmd) const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw InvalidArgument("config: " + msg);
  };
  require(!out.empty(), "--out is required");
  require(jobs >= 1, "jobs must be at least 1");
  switch (cmd) {
    case Command::generate:
      require(nx >= 8, "nx must be at least 8 (got " + std::to_string(nx) + ")");
      require(nz >= 8, "nz must be at least 8 (got " + std::to_string(nz) + ")");
      require(timesteps >= 100, "timesteps must be at least 100 (got " + std::to_string(timesteps) + ")");
      require(preview_noise >= 0.0, "preview_noise must be nonnegative");
      break;
    case Command::bode:
      require(sobol >= 2, "sobol must be at least 2");
      require(iters >= sobol, "iters (total trials) must be at least sobol");
      require(trial_epochs >= 1, "trial_epochs must be positive");
      require(gp_restarts >= 1, "gp_restarts must be positive");
      require(n_raw >= 1 && n_refine >= 0 && mc_samples >= 1, "acquisition budget must be positive");
      [[fallthrough]];
    case Command::baseline:
      require(!dataset.empty(), "--dataset is required");
      require(members >= 2, "members must be at least 2 for an ensemble report");
      require(epochs >= 1, "epochs must be positive");
      require(noise >= 0.0, "noise must be nonnegative");
      require(filter_width >= 0.0, "filter_width must be nonnegative");
      require(cells_per_frame >= 1 && eval_cells_per_frame >= 1, "cells per frame must be positive");
      break;
    case Command::evaluate:
      require(runs.size() == 1 || runs.size() == 2, "evaluate takes one or two run directories");
      break;
  }
}

FieldTaskOptions task_options(const RunConfig& c) {
  FieldTaskOptions o;
  o.cells_per_frame = c.cells_per_frame;
  o.eval_cells_per_frame = c.eval_cells_per_frame;
  o.seed = c.seed;
  if (c.noise > 0.0) o.noise = NoiseSpec{c.noise, c.filter_width, derive_seed(c.seed, {0x4015eULL})};
  return o;
}

// ---------------------------------------------------------------------------
// helpers

namespace {

void prepare_out(const RunConfig& c) {
  const fs::path out(c.out);
  std::error_code ec;
  if (fs::exists(out, ec)) {
    if (!fs::is_directory(out)) throw InvalidArgument("output path " + c.out + " exists and is not a directory");
    if (!fs::is_empty(out) && !c.force)
      throw InvalidArgument("output directory " + c.out + " is not empty (use --force to overwrite)");
    // only artifacts this tool writes are removed
    for (const char* name : {"members", "frames", "preview"}) fs::remove_all(out / name, ec);
    for (const char* name : {"manifest.json", "report.json", "meta.json", "predictions.csv", "uncertainty.csv",
                             "trials.jsonl", "comparison.json"})
      fs::remove(out / name, ec);
  }
  fs::create_directories(out, ec);
  if (ec) throw IoError(c.out, "cannot create output directory: " + ec.message());
}

void write_manifest(const RunConfig& c, Command cmd, const nlohmann::json& seeds) {
  // where the run was written is not part of what it computes
  nlohmann::json config = to_json(c);
  config.erase("out");
  config.erase("force");
  nlohmann::json m = {{"tool", "bode"}, {"version", kToolVersion}, {"command", to_string(cmd)},
                      {"config", config}, {"seeds", seeds}};
  write_json(fs::path(c.out) / "manifest.json", m);
}

nlohmann::json dataset_summary(const RunConfig& c, const FieldDataset& ds) {
  return {{"path", c.dataset},
          {"seed", ds.seed},
          {"nx", ds.grid.nx},
          {"nz", ds.grid.nz},
          {"timesteps", ds.timesteps},
          {"test_frames", ds.ledger.units(Split::test)}};
}

nlohmann::json noise_recovery(const MetricReport& r) {
  if (!(r.mean_injected_std > 0.0)) return nullptr;
  return {{"total_to_injected", r.uncertainty.mean_total_std / r.mean_injected_std},
          {"aleatoric_to_injected", r.uncertainty.mean_aleatoric_std / r.mean_injected_std}};
}

std::string member_file(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "member_%02d.ckpt", i);
  return buf;
}

/// Writes checkpoints, CSVs and report.json for a trained ensemble.
nlohmann::json finish_run(const RunConfig& c, Command cmd, const FieldDataset& ds, const RegressionTask& task,
                          const std::vector<EnsembleMember>& members, nlohmann::json extra) {
  const fs::path out(c.out);
  fs::create_directories(out / "members");
  nlohmann::json member_info = nlohmann::json::array();
  for (std::size_t i = 0; i < members.size(); ++i) {
    const auto& m = members[i];
    nlohmann::json info = {{"label", m.label},
                           {"seed", m.state.seed},
                           {"spec", m.state.spec},
                           {"config", m.config ? nlohmann::json(*m.config) : nlohmann::json(nullptr)},
                           {"final_val_rmse_normalized", m.trace.empty() ? 0.0 : m.trace.back().val_rmse},
                           {"checkpoint", "members/" + member_file(static_cast<int>(i))}};
    save_checkpoint((out / "members" / member_file(static_cast<int>(i))).string(), m.state,
                    {{"label", m.label}, {"config", info["config"]}});
    member_info.push_back(std::move(info));
  }
  const auto preds = member_predictions(members, task, task.test);
  const auto ens = aggregate(preds);
  const MetricReport test = evaluate_ensemble("test", task.test, ens, preds);
  write_prediction_csvs(out, task.test, ens);

  nlohmann::json report = {{"command", to_string(cmd)},
                           {"tool_version", kToolVersion},
                           {"seed", c.seed},
                           {"dataset", dataset_summary(c, ds)},
                           {"noise", {{"sigma", c.noise}, {"filter_width", c.filter_width}}},
                           {"epochs", c.epochs},
                           {"members", member_info},
                           {"test", to_json(test)},
                           {"noise_recovery", noise_recovery(test)}};
  for (auto it = extra.begin(); it != extra.end(); ++it) report[it.key()] = it.value();
  write_json(out / "report.json", report);
  return report;
}

}  // namespace

// ---------------------------------------------------------------------------
// commands

nlohmann::json cmd_generate(const RunConfig& c) {
  c.validate(Command::generate);
  prepare_out(c);
  SyntheticOptions o;
  o.nx = c.nx;
  o.nz = c.nz;
  o.timesteps = c.timesteps;
  o.seed = c.seed;
  const FieldDataset ds = generate_synthetic(o);
  save_dataset(ds, c.out);
  if (c.preview_noise > 0.0) {
    const fs::path dir = fs::path(c.out) / "preview";
    fs::create_directories(dir);
    const NoiseSpec spec{c.preview_noise, c.filter_width, derive_seed(c.seed, {0x4015eULL})};
    for (int t : ds.ledger.units(Split::test)) {
      const auto f = ds.target_frame(t);
      const auto noisy = inject_noise(std::vector<double>(f.begin(), f.end()), ds.grid, spec, 0, static_cast<std::uint64_t>(t));
      char name[48];
      std::snprintf(name, sizeof name, "noisy_frame_%05d.bin", t);
      std::ofstream out(dir / name, std::ios::binary);
      for (double v : noisy) {
        const float fv = static_cast<float>(v);
        out.write(reinterpret_cast<const char*>(&fv), sizeof fv);
      }
      if (!out) throw IoError((dir / name).string(), "write failed");
    }
  }
  write_manifest(c, Command::generate, {{"dataset", c.seed}});
  return read_json(fs::path(c.out) / "meta.json");
}

nlohmann::json cmd_baseline(const RunConfig& c) {
  c.validate(Command::baseline);
  const FieldDataset ds = load_dataset(c.dataset);
  prepare_out(c);
  const RegressionTask task = make_field_task(ds, task_options(c));
  std::vector<std::uint64_t> seeds;
  for (int m = 0; m < c.members; ++m) seeds.push_back(baseline_member_seed(c.seed, m));
  write_manifest(c, Command::baseline, {{"master", c.seed}, {"members", seeds}});
  EnsembleTrainOptions eo;
  eo.epochs = c.epochs;
  eo.jobs = c.jobs;
  const auto members = train_baseline_ensemble(task, seeds, eo);
  return finish_run(c, Command::baseline, ds, task, members, nlohmann::json::object());
}

nlohmann::json cmd_bode(const RunConfig& c) {
  c.validate(Command::bode);
  const FieldDataset ds = load_dataset(c.dataset);
  prepare_out(c);
  const RegressionTask task = make_field_task(ds, task_options(c));
  BodeOptions o;
  o.members = c.members;
  o.final_epochs = c.epochs;
  o.master_seed = c.seed;
  o.jobs = c.jobs;
  o.budget.n_sobol = c.sobol;
  o.budget.n_total = c.iters;
  o.budget.epochs_per_trial = c.trial_epochs;
  o.budget.gp_restarts = c.gp_restarts;
  o.budget.proposal.n_raw = c.n_raw;
  o.budget.proposal.n_refine = c.n_refine;
  o.budget.proposal.n_mc_samples = c.mc_samples;
  std::vector<std::uint64_t> seeds;
  for (int m = 0; m < c.members; ++m) seeds.push_back(bode_member_seed(c.seed, m));
  write_manifest(c, Command::bode, {{"master", c.seed}, {"members", seeds}});

  const BodeResult r = run_bode(task, o);
  write_trials(fs::path(c.out) / "trials.jsonl", r.logs);
  nlohmann::json bo = nlohmann::json::array();
  for (const auto& log : r.logs) {
    const int best = log.best_index();
    if (best < 0) throw NumericalError("every trial of member " + std::to_string(log.member) + " failed");
    bo.push_back({{"member", log.member},
                  {"n_sobol", log.n_sobol},
                  {"n_bo", log.n_bo},
                  {"best_iter", best},
                  {"best_rmse", log.trials[best].rmse},
                  {"best_config", log.trials[best].config},
                  {"failed_trials", std::count_if(log.trials.begin(), log.trials.end(),
                                                  [](const Trial& t) { return !std::isfinite(t.rmse); })}});
  }
  return finish_run(c, Command::bode, ds, task, r.members,
                    {{"optimization", {{"sobol", c.sobol}, {"iters", c.iters}, {"trial_epochs", c.trial_epochs}, {"members", bo}}}});
}

nlohmann::json cmd_evaluate(const RunConfig& c) {
  c.validate(Command::evaluate);
  nlohmann::json runs = nlohmann::json::array();
  std::vector<MetricReport> reports;
  for (const auto& dir : c.runs) {
    const fs::path run(dir);
    if (!fs::exists(run / "manifest.json")) throw IoError((run / "manifest.json").string(), "missing run manifest");
    if (!fs::exists(run / "report.json")) throw IoError((run / "report.json").string(), "missing run report");
    const auto manifest = read_json(run / "manifest.json");
    const RunConfig rc = run_config_from_json(manifest);
    const std::string dataset = c.dataset.empty() ? rc.dataset : c.dataset;
    const FieldDataset ds = load_dataset(dataset);
    const RegressionTask task = make_field_task(ds, task_options(rc));
    std::vector<EnsembleMember> members;
    for (int i = 0; i < rc.members; ++i) {
      const fs::path ckpt = run / "members" / member_file(i);
      if (!fs::exists(ckpt)) throw IoError(ckpt.string(), "missing member checkpoint");
      EnsembleMember m;
      m.label = "member_" + std::to_string(i);
      m.state = load_checkpoint(ckpt.string());
      members.push_back(std::move(m));
    }
    const auto preds = member_predictions(members, task, task.test);
    const auto ens = aggregate(preds);
    const MetricReport rep = evaluate_ensemble("test", task.test, ens, preds);
    const auto stored = read_json(run / "report.json");
    runs.push_back({{"run", dir},
                    {"command", manifest.value("command", "")},
                    {"test", to_json(rep)},
                    {"noise_recovery", noise_recovery(rep)},
                    {"matches_stored_report", stored.contains("test") && stored.at("test") == to_json(rep)}});
    reports.push_back(rep);
  }
  nlohmann::json cmp = {{"command", "evaluate"}, {"tool_version", kToolVersion}, {"runs", runs}};
  if (reports.size() == 2) {
    const auto& a = reports[0];
    const auto& b = reports[1];
    cmp["difference"] = {
        {"rmse", b.rmse - a.rmse},
        {"r2", b.r2 - a.r2},
        {"mean_nll", b.mean_nll - a.mean_nll},
        {"mean_total_std", b.uncertainty.mean_total_std - a.uncertainty.mean_total_std},
        {"mean_aleatoric_std", b.uncertainty.mean_aleatoric_std - a.uncertainty.mean_aleatoric_std},
        {"mean_epistemic_std", b.uncertainty.mean_epistemic_std - a.uncertainty.mean_epistemic_std},
        {"max_total_std", b.uncertainty.max_total_std - a.uncertainty.max_total_std}};
    cmp["ratio_total_std"] = a.uncertainty.mean_total_std > 0.0
                                 ? nlohmann::json(b.uncertainty.mean_total_std / a.uncertainty.mean_total_std)
                                 : nlohmann::json(nullptr);
  }
  prepare_out(c);
  write_manifest(c, Command::evaluate, {{"master", c.seed}});
  write_json(fs::path(c.out) / "comparison.json", cmp);
  return cmp;
}

nlohmann::json run_command(Command cmd, const RunConfig& c) {
  switch (cmd) {
    case Command::generate: return cmd_generate(c);
    case Command::baseline: return cmd_baseline(c);
    case Command::bode: return cmd_bode(c);
    case Command::evaluate: return cmd_evaluate(c);
  }
  throw InvalidArgument("unknown command");
}

}  // namespace bode
