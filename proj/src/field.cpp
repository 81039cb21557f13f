#include "bode/field.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <numeric>

#include "bode/error.hpp"
#include "bode/random.hpp"

namespace bode {

namespace fs = std::filesystem;

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

const char* to_string(BoSplit s) {
  switch (s) {
    case BoSplit::none: return "none";
    case BoSplit::bo_train: return "bo_train";
    case BoSplit::bo_val: return "bo_val";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// splits

std::vector<int> SplitLedger::units(Split s) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == s) out.push_back(static_cast<int>(i));
  return out;
}

std::vector<int> SplitLedger::units(BoSplit s) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < bo.size(); ++i)
    if (bo[i] == s) out.push_back(static_cast<int>(i));
  return out;
}

void SplitLedger::validate() const {
  if (split.size() != bo.size()) throw InvalidArgument("split ledger: split and bo tables differ in length");
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (bo[i] != BoSplit::none && split[i] == Split::test)
      throw InvalidArgument("split ledger: unit " + std::to_string(i) + " is both test and optimization data");
  }
  if (units(Split::train).empty()) throw InvalidArgument("split ledger: empty training split");
}

SplitLedger assign_splits(int n, std::uint64_t seed, const SplitFractions& f) {
  if (n < 3) throw InvalidArgument("assign_splits: need at least 3 units");
  if (f.block < 1) throw InvalidArgument("assign_splits: block length must be positive");
  const int n_test = std::max(1, static_cast<int>(std::lround(f.test * n)));
  const int n_val = std::max(1, static_cast<int>(std::lround(f.val * n)));
  const int n_train = n - n_val - n_test;
  if (n_train < 1) throw InvalidArgument("assign_splits: fractions leave no training units");

  Rng rng(derive_seed(seed, {0x5b1157ULL}));
  const int n_blocks = (n + f.block - 1) / f.block;
  std::vector<int> blocks(n_blocks);
  std::iota(blocks.begin(), blocks.end(), 0);
  bode::shuffle(blocks.begin(), blocks.end(), rng);
  std::vector<int> order;
  order.reserve(n);
  for (int b : blocks)
    for (int i = b * f.block; i < std::min(n, (b + 1) * f.block); ++i) order.push_back(i);

  SplitLedger ledger;
  ledger.split.assign(n, Split::train);
  ledger.bo.assign(n, BoSplit::none);
  for (int i = n_train; i < n_train + n_val; ++i) ledger.split[order[i]] = Split::val;
  for (int i = n_train + n_val; i < n; ++i) ledger.split[order[i]] = Split::test;

  std::vector<int> pool;
  for (int i = 0; i < n; ++i)
    if (ledger.split[i] != Split::test) pool.push_back(i);
  bode::shuffle(pool.begin(), pool.end(), rng);
  const int n_bo = std::max(2, static_cast<int>(std::lround(f.bo_subset * static_cast<double>(pool.size()))));
  const int n_bo_train = std::clamp(static_cast<int>(std::lround(f.bo_train * n_bo)), 1, n_bo - 1);
  for (int i = 0; i < n_bo; ++i) ledger.bo[pool[i]] = i < n_bo_train ? BoSplit::bo_train : BoSplit::bo_val;
  ledger.validate();
  return ledger;
}

// ---------------------------------------------------------------------------
// normalization

ChannelStats compute_stats(const Eigen::MatrixXd& data) {
  ChannelStats s;
  const auto n = static_cast<double>(data.rows());
  for (Eigen::Index c = 0; c < data.cols(); ++c) {
    const double mean = data.col(c).sum() / n;
    const double var = (data.col(c).array() - mean).square().sum() / n;
    s.mean.push_back(mean);
    s.stddev.push_back(std::sqrt(var));
  }
  return s;
}

Eigen::MatrixXd z_normalize(const Eigen::MatrixXd& data, const ChannelStats& s) {
  if (static_cast<std::size_t>(data.cols()) != s.mean.size()) throw InvalidArgument("z_normalize: column count mismatch");
  Eigen::MatrixXd z(data.rows(), data.cols());
  for (Eigen::Index c = 0; c < data.cols(); ++c) {
    if (s.stddev[c] > 0.0) {
      z.col(c) = (data.col(c).array() - s.mean[c]) / s.stddev[c];
    } else {
      z.col(c).setZero();
    }
  }
  return z;
}

Eigen::MatrixXd z_denormalize(const Eigen::MatrixXd& z, const ChannelStats& s) {
  if (static_cast<std::size_t>(z.cols()) != s.mean.size()) throw InvalidArgument("z_denormalize: column count mismatch");
  Eigen::MatrixXd x(z.rows(), z.cols());
  for (Eigen::Index c = 0; c < z.cols(); ++c) x.col(c) = z.col(c).array() * s.stddev[c] + s.mean[c];
  return x;
}

// ---------------------------------------------------------------------------
// synthetic fields

Eigen::RowVectorXd FieldDataset::raw_inputs(int t, int cell) const {
  Eigen::RowVectorXd r(kFieldInputs);
  r[0] = grid.cell_x(cell);
  r[1] = grid.cell_z(cell);
  for (int c = 0; c < kFieldChannels; ++c) r[2 + c] = channel(t, c, cell);
  return r;
}

FieldDataset generate_synthetic(const SyntheticOptions& o) {
  if (o.nx < 8 || o.nz < 8) throw InvalidArgument("generate_synthetic: nx and nz must be at least 8");
  if (o.timesteps < 100) throw InvalidArgument("generate_synthetic: need at least 100 timesteps");
  FieldDataset ds;
  ds.grid.nx = o.nx;
  ds.grid.nz = o.nz;
  ds.timesteps = o.timesteps;
  ds.seed = o.seed;
  const Grid& g = ds.grid;
  const int cells = g.cells();
  ds.channels.resize(static_cast<std::size_t>(o.timesteps) * kFieldChannels * cells);
  ds.target.resize(static_cast<std::size_t>(o.timesteps) * cells);

  NormalSampler u(derive_seed(o.seed, {0xf1e1dULL}));
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double phase_a = two_pi * u.uniform_open();
  const double phase_z = two_pi * u.uniform_open();
  const double amp_scale = 0.9 + 0.2 * u.uniform_open();
  const double xc0 = g.lx * (0.25 + 0.1 * u.uniform_open());
  const double wx = 0.3 * g.lx;

  for (int t = 0; t < o.timesteps; ++t) {
    const double s = static_cast<double>(t) / (o.timesteps - 1);
    const double amp = 5.0 * amp_scale * (0.35 + 0.65 * std::exp(-2.5 * s)) * (1.0 + 0.08 * std::sin(3.0 * two_pi * s + phase_a));
    const double zc = g.lz * (0.78 - 0.5 * s + 0.03 * std::sin(2.0 * two_pi * s + phase_z));
    const double xc = xc0 + 0.1 * g.lx * s;
    const double wz = g.lz * (0.08 + 0.04 * s);
    const double a = amp / 5.0;
    for (int cell = 0; cell < cells; ++cell) {
      const double x = g.cell_x(cell);
      const double z = g.cell_z(cell);
      const double gx = std::exp(-(x - xc) * (x - xc) / (2.0 * wx * wx));
      const double gz = std::exp(-(z - zc) * (z - zc) / (2.0 * wz * wz));
      const double temperature = 600.0 + 40.0 * std::tanh((z - zc) / (0.2 * g.lz));
      const double pressure = 1.0e5 + 850.0 * 9.81 * (g.lz - z) + 60.0 * a * gx * gz;
      const double ux = 0.05 * a * std::sin(std::numbers::pi * z / g.lz) * std::cos(0.5 * std::numbers::pi * x / g.lx);
      const double uz = -0.1 * a * (0.6 + 0.4 * std::cos(std::numbers::pi * x / g.lx));
      const std::size_t base = static_cast<std::size_t>(t) * kFieldChannels * cells;
      ds.channels[base + 0 * cells + cell] = static_cast<float>(temperature);
      ds.channels[base + 1 * cells + cell] = static_cast<float>(pressure);
      ds.channels[base + 2 * cells + cell] = static_cast<float>(ux);
      ds.channels[base + 3 * cells + cell] = static_cast<float>(uz);
      ds.target[static_cast<std::size_t>(t) * cells + cell] = static_cast<float>(amp * gx * gz);
    }
  }
  ds.ledger = assign_splits(o.timesteps, o.seed, o.fractions);
  compute_dataset_stats(ds);
  return ds;
}

void compute_dataset_stats(FieldDataset& ds) {
  const auto frames = ds.ledger.units(Split::train);
  const int cells = ds.grid.cells();
  Eigen::MatrixXd inputs(static_cast<Eigen::Index>(frames.size()) * cells, kFieldInputs);
  Eigen::MatrixXd target(inputs.rows(), 1);
  Eigen::Index r = 0;
  for (int t : frames) {
    const auto frame = ds.target_frame(t);
    for (int cell = 0; cell < cells; ++cell, ++r) {
      inputs.row(r) = ds.raw_inputs(t, cell);
      target(r, 0) = frame[cell];
    }
  }
  ds.input_stats = compute_stats(inputs);
  const ChannelStats ts = compute_stats(target);
  ds.target_mean = ts.mean[0];
  ds.target_std = ts.stddev[0] > 0.0 ? ts.stddev[0] : 1.0;
}

// ---------------------------------------------------------------------------
// persistence

namespace {

std::string frame_name(int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05d.bin", t);
  return buf;
}

void write_floats(std::ofstream& out, const float* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(data[i]);
    const unsigned char b[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                                static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  }
}

void read_floats(std::ifstream& in, float* data, std::size_t n) {
  std::vector<unsigned char> buf(n * 4);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t bits = static_cast<std::uint32_t>(buf[4 * i]) | (static_cast<std::uint32_t>(buf[4 * i + 1]) << 8) |
                               (static_cast<std::uint32_t>(buf[4 * i + 2]) << 16) |
                               (static_cast<std::uint32_t>(buf[4 * i + 3]) << 24);
    data[i] = std::bit_cast<float>(bits);
  }
}

}  // namespace

void save_dataset(const FieldDataset& ds, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "frames", ec);
  if (ec) throw IoError(dir.string(), "cannot create dataset directory: " + ec.message());
  nlohmann::json meta;
  meta["format"] = "bode-field-dataset";
  meta["version"] = 1;
  meta["grid"] = {{"nx", ds.grid.nx}, {"nz", ds.grid.nz}, {"lx", ds.grid.lx}, {"lz", ds.grid.lz}};
  meta["timesteps"] = ds.timesteps;
  meta["dt"] = ds.dt;
  meta["seed"] = ds.seed;
  meta["layout"] = {{"frame_file", "frames/frame_%05d.bin"},
                    {"dtype", "float32"},
                    {"endianness", "little"},
                    {"order", "channel-major; within a channel cell = iz * nx + ix"},
                    {"channels", {"temperature", "pressure", "u_x", "u_z", "mu_t"}}};
  nlohmann::json splits = nlohmann::json::object();
  for (Split s : {Split::train, Split::val, Split::test}) splits[to_string(s)] = ds.ledger.units(s);
  for (BoSplit s : {BoSplit::bo_train, BoSplit::bo_val}) splits[to_string(s)] = ds.ledger.units(s);
  meta["splits"] = splits;
  meta["stats"] = {{"inputs", kInputNames},
                   {"input_mean", ds.input_stats.mean},
                   {"input_std", ds.input_stats.stddev},
                   {"target_mean", ds.target_mean},
                   {"target_std", ds.target_std}};
  {
    std::ofstream out(dir / "meta.json");
    if (!out) throw IoError((dir / "meta.json").string(), "cannot open for writing");
    out << meta.dump(2) << '\n';
  }
  const int cells = ds.grid.cells();
  for (int t = 0; t < ds.timesteps; ++t) {
    const fs::path p = dir / "frames" / frame_name(t);
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(p.string(), "cannot open for writing");
    write_floats(out, ds.channels.data() + static_cast<std::size_t>(t) * kFieldChannels * cells,
                 static_cast<std::size_t>(kFieldChannels) * cells);
    write_floats(out, ds.target.data() + static_cast<std::size_t>(t) * cells, cells);
    if (!out) throw IoError(p.string(), "write failed");
  }
}

FieldDataset load_dataset(const fs::path& dir) {
  const fs::path meta_path = dir / "meta.json";
  std::ifstream in(meta_path);
  if (!in) throw IoError(meta_path.string(), "cannot open dataset metadata");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(meta_path.string(), e.what());
  }
  FieldDataset ds;
  try {
    ds.grid.nx = meta.at("grid").at("nx");
    ds.grid.nz = meta.at("grid").at("nz");
    ds.grid.lx = meta.at("grid").at("lx");
    ds.grid.lz = meta.at("grid").at("lz");
    ds.timesteps = meta.at("timesteps");
    ds.dt = meta.at("dt");
    ds.seed = meta.at("seed");
    ds.ledger.split.assign(ds.timesteps, Split::train);
    ds.ledger.bo.assign(ds.timesteps, BoSplit::none);
    std::vector<bool> seen(ds.timesteps, false);
    for (Split s : {Split::train, Split::val, Split::test})
      for (int t : meta.at("splits").at(to_string(s)).get<std::vector<int>>()) {
        if (t < 0 || t >= ds.timesteps || seen[t]) throw IoError(meta_path.string(), "split ledger is not a partition");
        seen[t] = true;
        ds.ledger.split[t] = s;
      }
    if (std::find(seen.begin(), seen.end(), false) != seen.end())
      throw IoError(meta_path.string(), "split ledger does not cover every timestep");
    for (BoSplit s : {BoSplit::bo_train, BoSplit::bo_val})
      for (int t : meta.at("splits").at(to_string(s)).get<std::vector<int>>()) ds.ledger.bo.at(t) = s;
    const auto& st = meta.at("stats");
    ds.input_stats.mean = st.at("input_mean").get<std::vector<double>>();
    ds.input_stats.stddev = st.at("input_std").get<std::vector<double>>();
    ds.target_mean = st.at("target_mean");
    ds.target_std = st.at("target_std");
  } catch (const nlohmann::json::exception& e) {
    throw IoError(meta_path.string(), std::string("malformed metadata: ") + e.what());
  }
  ds.ledger.validate();
  const int cells = ds.grid.cells();
  ds.channels.resize(static_cast<std::size_t>(ds.timesteps) * kFieldChannels * cells);
  ds.target.resize(static_cast<std::size_t>(ds.timesteps) * cells);
  for (int t = 0; t < ds.timesteps; ++t) {
    const fs::path p = dir / "frames" / frame_name(t);
    std::ifstream f(p, std::ios::binary);
    if (!f) throw IoError(p.string(), "missing frame file");
    read_floats(f, ds.channels.data() + static_cast<std::size_t>(t) * kFieldChannels * cells,
                static_cast<std::size_t>(kFieldChannels) * cells);
    read_floats(f, ds.target.data() + static_cast<std::size_t>(t) * cells, cells);
    if (!f) throw IoError(p.string(), "truncated frame file");
  }
  return ds;
}

// ---------------------------------------------------------------------------
// regridding

std::vector<double> knn_regrid(const Eigen::MatrixXd& points, std::span<const double> values, int k,
                               const Grid& grid) {
  if (points.rows() == 0) throw InvalidArgument("knn_regrid: empty source set");
  if (k < 1) throw InvalidArgument("knn_regrid: k must be positive");
  if (points.cols() != 2 || static_cast<std::size_t>(points.rows()) != values.size())
    throw InvalidArgument("knn_regrid: expected n x 2 points and n values");
  if (points.rows() < k) throw InvalidArgument("knn_regrid: fewer source points than k");
  const auto n = static_cast<int>(points.rows());
  std::vector<double> out(grid.cells());
  std::vector<std::pair<double, int>> dist(n);
  for (int cell = 0; cell < grid.cells(); ++cell) {
    const double cx = grid.cell_x(cell), cz = grid.cell_z(cell);
    for (int i = 0; i < n; ++i) {
      const double dx = points(i, 0) - cx, dz = points(i, 1) - cz;
      dist[i] = {dx * dx + dz * dz, i};
    }
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    if (dist[0].first == 0.0) {
      out[cell] = values[dist[0].second];
      continue;
    }
    double wsum = 0.0, vsum = 0.0;
    for (int j = 0; j < k; ++j) {
      const double w = 1.0 / std::sqrt(dist[j].first);
      wsum += w;
      vsum += w * values[dist[j].second];
    }
    out[cell] = vsum / wsum;
  }
  return out;
}

// ---------------------------------------------------------------------------
// noise

namespace {

int reflect(int i, int n) {
  while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
  return i;
}

}  // namespace

std::vector<double> noise_factor(const Grid& grid, const NoiseSpec& spec, std::uint64_t epoch, std::uint64_t timestep) {
  const int nx = grid.nx, nz = grid.nz, cells = grid.cells();
  std::vector<double> eps(cells, 0.0);
  if (spec.sigma == 0.0) return eps;
  NormalSampler normal(derive_seed(spec.seed, {0x4015eULL, epoch, timestep}));
  for (double& e : eps) e = spec.sigma * normal();

  if (spec.filter_width > 0.0) {
    const int radius = static_cast<int>(std::ceil(4.0 * spec.filter_width));
    std::vector<double> w(2 * radius + 1);
    for (int i = -radius; i <= radius; ++i) w[i + radius] = std::exp(-0.5 * i * i / (spec.filter_width * spec.filter_width));
    const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& v : w) v /= wsum;
    std::vector<double> tmp(cells);
    for (int iz = 0; iz < nz; ++iz)
      for (int ix = 0; ix < nx; ++ix) {
        double acc = 0.0;
        for (int j = -radius; j <= radius; ++j) acc += w[j + radius] * eps[iz * nx + reflect(ix + j, nx)];
        tmp[iz * nx + ix] = acc;
      }
    // mirror padding folds weights onto repeated cells near the edges; undo the per-cell gain
    auto gain = [&](int n) {
      std::vector<double> g(n);
      std::vector<double> c(n);
      for (int i = 0; i < n; ++i) {
        std::fill(c.begin(), c.end(), 0.0);
        for (int j = -radius; j <= radius; ++j) c[reflect(i + j, n)] += w[j + radius];
        g[i] = std::sqrt(std::inner_product(c.begin(), c.end(), c.begin(), 0.0));
      }
      return g;
    };
    const auto gx = gain(nx), gz = gain(nz);
    for (int iz = 0; iz < nz; ++iz)
      for (int ix = 0; ix < nx; ++ix) {
        double acc = 0.0;
        for (int j = -radius; j <= radius; ++j) acc += w[j + radius] * tmp[reflect(iz + j, nz) * nx + ix];
        eps[iz * nx + ix] = acc / (gx[ix] * gz[iz]);
      }
  }
  const double mean = std::accumulate(eps.begin(), eps.end(), 0.0) / cells;
  double var = 0.0;
  for (double e : eps) var += (e - mean) * (e - mean);
  const double sd = std::sqrt(var / cells);
  const double scale = sd > 0.0 ? spec.sigma / sd : 0.0;
  for (double& e : eps) e *= scale;
  return eps;
}

std::vector<double> inject_noise(std::span<const double> frame, const Grid& grid, const NoiseSpec& spec,
                                 std::uint64_t epoch, std::uint64_t timestep) {
  if (!(spec.sigma >= 0.0)) throw InvalidArgument("inject_noise: sigma must be nonnegative");
  if (frame.size() != static_cast<std::size_t>(grid.cells())) throw InvalidArgument("inject_noise: frame size mismatch");
  std::vector<double> y(frame.begin(), frame.end());
  if (spec.sigma == 0.0) return y;
  const auto eps = noise_factor(grid, spec, epoch, timestep);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::max(0.0, frame[i] + eps[i] * frame[i]);
  return y;
}

}  // namespace bode
