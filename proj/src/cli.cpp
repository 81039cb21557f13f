#include <CLI11.hpp>
#include <functional>
#include <iostream>

#include "bode/error.hpp"
#include "bode/experiment.hpp"
#include "bode/metrics.hpp"

namespace bode {

namespace {

// Flags are parsed into a scratch config; only the ones actually given are
// copied over the file/default layer afterwards.
struct Overrides {
  RunConfig flags;
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> setters;

  template <class T>
  void add(CLI::App* app, const std::string& name, T RunConfig::*field, const std::string& help) {
    CLI::Option* opt = app->add_option(name, flags.*field, help);
    setters.emplace_back(opt, [this, field](RunConfig& c) { c.*field = flags.*field; });
  }
  void add_flag(CLI::App* app, const std::string& name, bool RunConfig::*field, const std::string& help) {
    CLI::Option* opt = app->add_flag(name, flags.*field, help);
    setters.emplace_back(opt, [this, field](RunConfig& c) { c.*field = flags.*field; });
  }
  void apply(RunConfig& c) const {
    for (const auto& [opt, set] : setters)
      if (opt->count() > 0) set(c);
  }
};

void add_common(Overrides& o, CLI::App* app) {
  o.add(app, "--out", &RunConfig::out, "Output directory");
  o.add(app, "--seed", &RunConfig::seed, "Master seed");
  o.add(app, "--jobs", &RunConfig::jobs, "Parallel workers");
  o.add_flag(app, "--force", &RunConfig::force, "Overwrite a non-empty output directory");
}

void add_training(Overrides& o, CLI::App* app) {
  o.add(app, "--dataset", &RunConfig::dataset, "Dataset directory");
  o.add(app, "--members", &RunConfig::members, "Ensemble size");
  o.add(app, "--epochs", &RunConfig::epochs, "Training epochs per member");
  o.add(app, "--noise", &RunConfig::noise, "Relative noise std injected each epoch (0 = clean)");
  o.add(app, "--filter-width", &RunConfig::filter_width, "Noise correlation width in cells");
  o.add(app, "--cells-per-frame", &RunConfig::cells_per_frame, "Training cells drawn per frame and epoch");
  o.add(app, "--eval-cells-per-frame", &RunConfig::eval_cells_per_frame, "Validation cells per frame");
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Bayesian-optimized deep ensembles for field regression", "bode"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  std::string config_path;

  Overrides o;
  auto* gen = app.add_subcommand("generate", "Generate the synthetic field dataset");
  auto* base = app.add_subcommand("baseline", "Train the baseline ensemble");
  auto* bode = app.add_subcommand("bode", "Optimize and train a BODE ensemble");
  auto* eval = app.add_subcommand("evaluate", "Recompute metrics and compare runs");
  for (auto* sub : {gen, base, bode, eval}) {
    add_common(o, sub);
    sub->add_option("--config", config_path, "Flat JSON config file")->check(CLI::ExistingFile);
  }
  o.add(gen, "--nx", &RunConfig::nx, "Grid cells along x");
  o.add(gen, "--nz", &RunConfig::nz, "Grid cells along z");
  o.add(gen, "--timesteps", &RunConfig::timesteps, "Number of frames");
  o.add(gen, "--preview-noise", &RunConfig::preview_noise, "Write noisy test frames at this level");
  o.add(gen, "--filter-width", &RunConfig::filter_width, "Noise correlation width in cells");
  add_training(o, base);
  add_training(o, bode);
  o.add(bode, "--sobol", &RunConfig::sobol, "Initial Sobol trials per member");
  o.add(bode, "--iters", &RunConfig::iters, "Total trials per member");
  o.add(bode, "--trial-epochs", &RunConfig::trial_epochs, "Epochs per trial");
  o.add(bode, "--gp-restarts", &RunConfig::gp_restarts, "GP hyperparameter restarts");
  o.add(bode, "--n-raw", &RunConfig::n_raw, "Raw acquisition candidates");
  o.add(bode, "--n-refine", &RunConfig::n_refine, "Candidates refined by local search");
  o.add(bode, "--mc-samples", &RunConfig::mc_samples, "Monte Carlo samples for qNEI");
  o.add(eval, "--dataset", &RunConfig::dataset, "Dataset directory (defaults to the run's)");
  o.add(eval, "runs", &RunConfig::runs, "One or two run directories");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitValidation;
  }

  Command cmd = Command::generate;
  for (Command c : {Command::generate, Command::baseline, Command::bode, Command::evaluate})
    if (app.got_subcommand(to_string(c))) cmd = c;

  RunConfig cfg;
  try {
    if (!config_path.empty()) cfg = run_config_from_json(read_json(config_path));
    o.apply(cfg);
    cfg.validate(cmd);
  } catch (const Error& e) {
    std::cerr << "bode: " << e.what() << '\n';
    return kExitValidation;
  }

  try {
    const auto result = run_command(cmd, cfg);
    if (cmd != Command::generate) {
      const nlohmann::json& test = cmd == Command::evaluate ? result : result.at("test");
      std::cout << test.dump(2) << '\n';
    } else {
      std::cout << "wrote dataset to " << cfg.out << '\n';
    }
  } catch (const InvalidArgument& e) {
    std::cerr << "bode: " << e.what() << '\n';
    return kExitValidation;
  } catch (const IoError& e) {
    std::cerr << "bode: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "bode: " << e.what() << '\n';
    return kExitCompute;
  }
  return kExitOk;
}

}  // namespace bode
