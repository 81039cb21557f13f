#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "bode/experiment.hpp"
#include "bode/metrics.hpp"

using namespace bode;
namespace fs = std::filesystem;

namespace {

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "bode");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string tmp(const std::string& name) {
  const auto p = fs::path(BODE_TEST_TMP) / "cli" / name;
  fs::create_directories(p.parent_path());
  return p.string();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

bool same_tree(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb) return false;
  for (const auto& f : fa)
    if (slurp(a / f) != slurp(b / f)) return false;
  return true;
}

// small dataset shared by the run tests
const std::string& dataset() {
  static const std::string dir = [] {
    const auto d = tmp("ds");
    fs::remove_all(d);
    REQUIRE(cli({"generate", "--out", d, "--nx", "8", "--nz", "8", "--timesteps", "200", "--seed", "3"}) == 0);
    return d;
  }();
  return dir;
}

std::vector<std::string> tiny_training(const std::string& out) {
  return {"--dataset", dataset(), "--out", out, "--members", "2", "--epochs", "3", "--force"};
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("validation failures exit with 2") {
  CHECK(cli({"generate", "--out", tmp("bad"), "--nx", "4"}) == kExitValidation);
  CHECK(cli({"generate", "--out", tmp("bad"), "--timesteps", "20"}) == kExitValidation);
  CHECK(cli({"generate"}) == kExitValidation);
  CHECK(cli({"generate", "--out", tmp("bad"), "--bogus", "1"}) == kExitValidation);
  CHECK(cli({"frobnicate"}) == kExitValidation);
  CHECK(cli({"baseline", "--out", tmp("bad"), "--dataset", dataset(), "--members", "1"}) == kExitValidation);
  CHECK(cli({"baseline", "--out", tmp("bad"), "--dataset", tmp("no-such-dataset")}) == kExitValidation);
  CHECK(cli({"bode", "--out", tmp("bad"), "--dataset", dataset(), "--sobol", "9", "--iters", "4"}) == kExitValidation);
  CHECK(cli({"evaluate", "--out", tmp("bad"), tmp("no-such-run")}) == kExitValidation);
  const auto cfg = tmp("unknown.json");
  std::ofstream(cfg) << R"({"members": 2, "colour": "red"})";
  CHECK(cli({"baseline", "--config", cfg, "--out", tmp("bad"), "--dataset", dataset()}) == kExitValidation);
}

TEST_CASE("generate: reproducible, guarded, ledger fractions") {
  const auto a = tmp("gen_a"), b = tmp("gen_b");
  fs::remove_all(a);
  fs::remove_all(b);
  REQUIRE(cli({"generate", "--out", a, "--seed", "7"}) == 0);
  REQUIRE(cli({"generate", "--out", b, "--seed", "7"}) == 0);
  CHECK(same_tree(a, b));
  CHECK(cli({"generate", "--out", a, "--seed", "7"}) == kExitValidation);
  CHECK(cli({"generate", "--out", a, "--seed", "8", "--force"}) == 0);
  CHECK_FALSE(same_tree(a, b));

  const auto ds = load_dataset(b);
  CHECK(ds.grid.nx == 16);
  CHECK(ds.grid.nz == 32);
  CHECK(ds.timesteps == 600);
  CHECK(ds.ledger.units(Split::train).size() == 420);
  CHECK(ds.ledger.units(Split::val).size() == 177);
  CHECK(ds.ledger.units(Split::test).size() == 3);
  const auto manifest = read_json(fs::path(b) / "manifest.json");
  CHECK(manifest.at("version") == kToolVersion);
  CHECK(manifest.at("config").at("seed") == 7);

  const auto p = tmp("gen_preview");
  fs::remove_all(p);
  REQUIRE(cli({"generate", "--out", p, "--nx", "8", "--nz", "8", "--timesteps", "100", "--preview-noise", "0.05"}) == 0);
  CHECK(fs::exists(fs::path(p) / "preview"));
  CHECK(!fs::is_empty(fs::path(p) / "preview"));
}

TEST_CASE("config precedence: flag over file over default") {
  const auto cfg = tmp("prec.json");
  std::ofstream(cfg) << R"({"members": 3, "epochs": 4, "noise": 0.05})";
  const auto out = tmp("prec_run");
  auto args = std::vector<std::string>{"baseline", "--config", cfg, "--epochs", "2", "--dataset", dataset(), "--out", out, "--force"};
  REQUIRE(cli(args) == 0);
  const auto c = read_json(fs::path(out) / "manifest.json").at("config");
  CHECK(c.at("members") == 3);
  CHECK(c.at("epochs") == 2);
  CHECK(c.at("noise") == 0.05);
  CHECK(c.at("cells_per_frame") == 8);
}

TEST_CASE("baseline run artifacts, evaluation and manifest re-run") {
  const auto run = tmp("base_run");
  auto args = tiny_training(run);
  args.insert(args.begin(), "baseline");
  args.insert(args.end(), {"--noise", "0.05"});
  REQUIRE(cli(args) == 0);
  const fs::path r(run);
  for (const char* f : {"manifest.json", "report.json", "predictions.csv", "uncertainty.csv", "members/member_00.ckpt",
                        "members/member_01.ckpt"})
    CHECK(fs::exists(r / f));
  const auto report = read_json(r / "report.json");
  CHECK(report.at("test").at("member_rmse").size() == 2);
  CHECK(report.at("test").at("rmse").get<double>() > 0.0);
  CHECK(report.at("members").size() == 2);
  CHECK(report.at("epochs") == 3);

  CHECK(first_line(r / "predictions.csv") == first_line(fs::path(BODE_GOLDEN_DIR) / "predictions_header.csv"));
  CHECK(first_line(r / "uncertainty.csv") == first_line(fs::path(BODE_GOLDEN_DIR) / "uncertainty_header.csv"));
  const auto ds = load_dataset(dataset());
  std::ifstream csv(r / "predictions.csv");
  std::string line;
  std::size_t rows = 0;
  std::getline(csv, line);
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == ds.ledger.units(Split::test).size() * static_cast<std::size_t>(ds.grid.cells()));

  const auto stored = metric_report_from_json(report.at("test"));
  CHECK(to_json(stored) == report.at("test"));

  const auto ev = tmp("eval_same");
  REQUIRE(cli({"evaluate", "--out", ev, "--force", run, run}) == 0);
  const auto cmp = read_json(fs::path(ev) / "comparison.json");
  for (const auto& [k, v] : cmp.at("difference").items()) CHECK_MESSAGE(v.get<double>() == 0.0, k);
  for (const auto& entry : cmp.at("runs")) {
    CHECK(entry.at("matches_stored_report") == true);
    CHECK(entry.at("noise_recovery").at("aleatoric_to_injected").get<double>() > 0.0);
  }

  const auto again = tmp("base_rerun");
  REQUIRE(cli({"baseline", "--config", (r / "manifest.json").string(), "--out", again, "--force"}) == 0);
  CHECK(slurp(r / "report.json") == slurp(fs::path(again) / "report.json"));

  fs::remove(r / "members/member_01.ckpt");
  CHECK(cli({"evaluate", "--out", ev, "--force", run}) == kExitValidation);
}

TEST_CASE("bode run writes trial logs") {
  const auto run = tmp("bode_run");
  auto args = tiny_training(run);
  args.insert(args.begin(), "bode");
  args.insert(args.end(), {"--sobol", "2", "--iters", "3", "--trial-epochs", "2", "--gp-restarts", "1", "--n-raw", "16",
                           "--n-refine", "1", "--mc-samples", "16", "--jobs", "2"});
  REQUIRE(cli(args) == 0);
  std::ifstream trials(fs::path(run) / "trials.jsonl");
  std::string line;
  int n = 0;
  while (std::getline(trials, line)) ++n;
  CHECK(n == 2 * 3);
  const auto report = read_json(fs::path(run) / "report.json");
  CHECK(report.at("optimization").at("members").size() == 2);
  CHECK(report.at("members")[0].at("config").is_object());
  CHECK(report.at("noise_recovery").is_null());
}

}  // TEST_SUITE
