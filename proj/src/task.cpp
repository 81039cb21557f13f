#include "bode/task.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>

#include "bode/error.hpp"
#include "bode/random.hpp"

namespace bode {

void RegressionTask::assert_optimization_isolated() const {
  ledger.validate();
  for (const auto* units : {&bo_train_units, &bo_val_units})
    for (int u : *units) {
      if (ledger.split.at(u) == Split::test)
        throw InvalidArgument("optimization data includes test unit " + std::to_string(u));
    }
  std::vector<int> a = bo_train_units, b = bo_val_units;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<int> both;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
  if (!both.empty()) throw InvalidArgument("optimization train and validation subsets overlap");
}

MemberPrediction RegressionTask::to_raw(const MemberPrediction& p) const {
  MemberPrediction r;
  r.mean = (p.mean.array() * target_std + target_mean).matrix();
  r.variance = p.variance * (target_std * target_std);
  return r;
}

namespace {

std::vector<int> pick_cells(int cells, int count, std::uint64_t seed) {
  std::vector<int> all(cells);
  std::iota(all.begin(), all.end(), 0);
  if (count >= cells) return all;
  Rng rng(seed);
  // partial Fisher-Yates
  for (int i = 0; i < count; ++i) {
    const auto j = i + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(cells - i)));
    std::swap(all[i], all[j]);
  }
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

struct FieldContext {
  const FieldDataset* ds;
  FieldTaskOptions opt;

  std::vector<double> frame_targets(int t, std::uint64_t epoch) const {
    const auto f = ds->target_frame(t);
    std::vector<double> clean(f.begin(), f.end());
    if (!opt.noise || opt.noise->sigma == 0.0) return clean;
    return inject_noise(clean, ds->grid, *opt.noise, epoch, static_cast<std::uint64_t>(t));
  }

  double normalize_y(double y) const { return (y - ds->target_mean) / ds->target_std; }

  Samples sample_frames(const std::vector<int>& frames, int per_frame, std::uint64_t epoch,
                        std::uint64_t cell_seed) const {
    const int cells = ds->grid.cells();
    const int k = std::min(per_frame, cells);
    Eigen::MatrixXd raw(static_cast<Eigen::Index>(frames.size()) * k, kFieldInputs);
    Samples s;
    s.y.resize(raw.rows());
    Eigen::Index r = 0;
    for (int t : frames) {
      const auto chosen = pick_cells(cells, k, derive_seed(cell_seed, {epoch, static_cast<std::uint64_t>(t)}));
      const auto y = frame_targets(t, epoch);
      for (int c : chosen) {
        raw.row(r) = ds->raw_inputs(t, c);
        s.y[r] = normalize_y(y[c]);
        ++r;
      }
    }
    s.x = z_normalize(raw, ds->input_stats);
    return s;
  }

  EvalSet eval_frames(const std::vector<int>& frames, int per_frame, std::uint64_t cell_seed) const {
    const int cells = ds->grid.cells();
    const int k = std::min(per_frame, cells);
    const Eigen::Index n = static_cast<Eigen::Index>(frames.size()) * k;
    EvalSet e;
    Eigen::MatrixXd raw(n, kFieldInputs);
    e.normalized.y.resize(n);
    e.y_raw.resize(n);
    e.y_clean.resize(n);
    e.noise_std.resize(n);
    e.coords.resize(n, 3);
    const double sigma = opt.noise ? opt.noise->sigma : 0.0;
    Eigen::Index r = 0;
    for (int t : frames) {
      const auto chosen = pick_cells(cells, k, derive_seed(cell_seed, {kEvaluationEpoch, static_cast<std::uint64_t>(t)}));
      const auto y = frame_targets(t, kEvaluationEpoch);
      const auto clean = ds->target_frame(t);
      for (int c : chosen) {
        raw.row(r) = ds->raw_inputs(t, c);
        e.y_raw[r] = y[c];
        e.y_clean[r] = clean[c];
        e.noise_std[r] = sigma * clean[c];
        e.normalized.y[r] = normalize_y(y[c]);
        e.coords(r, 0) = ds->grid.cell_x(c);
        e.coords(r, 1) = ds->grid.cell_z(c);
        e.coords(r, 2) = t * ds->dt;
        ++r;
      }
    }
    e.normalized.x = z_normalize(raw, ds->input_stats);
    return e;
  }
};

}  // namespace

RegressionTask make_field_task(const FieldDataset& ds, const FieldTaskOptions& opt) {
  if (opt.cells_per_frame < 1 || opt.eval_cells_per_frame < 1)
    throw InvalidArgument("field task: cells per frame must be positive");
  if (opt.noise && !(opt.noise->sigma >= 0.0)) throw InvalidArgument("field task: noise sigma must be nonnegative");
  auto ctx = std::make_shared<FieldContext>(FieldContext{&ds, opt});
  RegressionTask task;
  task.input_dim = kFieldInputs;
  task.target_mean = ds.target_mean;
  task.target_std = ds.target_std;
  task.ledger = ds.ledger;
  task.train_units = ds.ledger.units(Split::train);
  task.val_units = ds.ledger.units(Split::val);
  task.test_units = ds.ledger.units(Split::test);
  task.bo_train_units = ds.ledger.units(BoSplit::bo_train);
  task.bo_val_units = ds.ledger.units(BoSplit::bo_val);

  const std::uint64_t train_seed = derive_seed(opt.seed, {0x7a1ULL});
  const std::uint64_t eval_seed = derive_seed(opt.seed, {0xe7a1ULL});
  task.train = [ctx, frames = task.train_units, per = opt.cells_per_frame, train_seed](int epoch) {
    return ctx->sample_frames(frames, per, static_cast<std::uint64_t>(epoch), train_seed);
  };
  task.bo_train = [ctx, frames = task.bo_train_units, per = opt.cells_per_frame, train_seed](int epoch) {
    return ctx->sample_frames(frames, per, static_cast<std::uint64_t>(epoch), train_seed);
  };
  task.validation = ctx->eval_frames(task.val_units, opt.eval_cells_per_frame, eval_seed);
  task.bo_validation = ctx->eval_frames(task.bo_val_units, opt.eval_cells_per_frame, eval_seed);
  task.test = ctx->eval_frames(task.test_units, ds.grid.cells(), eval_seed);
  return task;
}

RegressionTask make_sine_task(const SineTaskOptions& opt) {
  if (opt.n_points < 10) throw InvalidArgument("sine task: need at least 10 points");
  NormalSampler rng(derive_seed(opt.seed, {0x51eeULL}));
  Eigen::VectorXd x(opt.n_points), clean(opt.n_points), y(opt.n_points);
  for (int i = 0; i < opt.n_points; ++i) {
    x[i] = std::numbers::pi * (2.0 * rng.uniform_open() - 1.0);
    clean[i] = std::sin(x[i]);
    y[i] = clean[i] + opt.noise_std * rng();
  }
  RegressionTask task;
  task.input_dim = 1;
  task.ledger = assign_splits(opt.n_points, opt.seed, opt.fractions);
  task.train_units = task.ledger.units(Split::train);
  task.val_units = task.ledger.units(Split::val);
  task.test_units = task.ledger.units(Split::test);
  task.bo_train_units = task.ledger.units(BoSplit::bo_train);
  task.bo_val_units = task.ledger.units(BoSplit::bo_val);

  double sum = 0.0, sq = 0.0;
  for (int u : task.train_units) sum += y[u];
  task.target_mean = sum / static_cast<double>(task.train_units.size());
  for (int u : task.train_units) sq += (y[u] - task.target_mean) * (y[u] - task.target_mean);
  task.target_std = std::sqrt(sq / static_cast<double>(task.train_units.size()));
  // x is uniform on [-pi, pi]
  const double x_mean = 0.0, x_std = std::numbers::pi / std::sqrt(3.0);

  auto make_set = [&](const std::vector<int>& units) {
    EvalSet e;
    const auto n = static_cast<Eigen::Index>(units.size());
    e.normalized.x.resize(n, 1);
    e.normalized.y.resize(n);
    e.y_raw.resize(n);
    e.y_clean.resize(n);
    e.noise_std = Eigen::VectorXd::Constant(n, opt.noise_std);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int u = units[i];
      e.normalized.x(i, 0) = (x[u] - x_mean) / x_std;
      e.normalized.y[i] = (y[u] - task.target_mean) / task.target_std;
      e.y_raw[i] = y[u];
      e.y_clean[i] = clean[u];
    }
    return e;
  };
  auto train_set = std::make_shared<Samples>(make_set(task.train_units).normalized);
  auto bo_train_set = std::make_shared<Samples>(make_set(task.bo_train_units).normalized);
  task.train = [train_set](int) { return *train_set; };
  task.bo_train = [bo_train_set](int) { return *bo_train_set; };
  task.validation = make_set(task.val_units);
  task.bo_validation = make_set(task.bo_val_units);
  task.test = make_set(task.test_units);
  return task;
}

}  // namespace bode
