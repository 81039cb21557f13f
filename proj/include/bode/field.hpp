#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace bode {

/// Uniform cell-centred grid on the (x, z) symmetry plane, in metres.
/// Cells are numbered row-major with z as the row: cell = iz * nx + ix.
struct Grid {
  int nx = 16;
  int nz = 32;
  double lx = 1.95;
  double lz = 7.74;

  int cells() const { return nx * nz; }
  double x(int ix) const { return (ix + 0.5) * lx / nx; }
  double z(int iz) const { return (iz + 0.5) * lz / nz; }
  double cell_x(int cell) const { return x(cell % nx); }
  double cell_z(int cell) const { return z(cell / nx); }
};

enum class Split : std::uint8_t { train, val, test };
enum class BoSplit : std::uint8_t { none, bo_train, bo_val };

const char* to_string(Split s);
const char* to_string(BoSplit s);

struct SplitFractions {
  double train = 0.70;
  double val = 0.295;
  double test = 0.005;
  double bo_subset = 0.30;   // of train + val
  double bo_train = 0.70;    // of the subset; the rest is bo_val
  int block = 5;             // timesteps are shuffled in contiguous blocks of this length
};

/// Per-unit (timestep or sample) assignment to train/val/test and to the
/// optimization subset.
struct SplitLedger {
  std::vector<Split> split;
  std::vector<BoSplit> bo;

  std::vector<int> units(Split s) const;
  std::vector<int> units(BoSplit s) const;
  /// Throws if the ledger is not a partition or the optimization subset
  /// leaks outside train + val.
  void validate() const;
};

SplitLedger assign_splits(int n_units, std::uint64_t seed, const SplitFractions& f = {});

/// Per-column mean and population standard deviation.
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

ChannelStats compute_stats(const Eigen::MatrixXd& data);
/// z = (x - mean) / std per column; columns with std == 0 map to 0.
Eigen::MatrixXd z_normalize(const Eigen::MatrixXd& data, const ChannelStats& stats);
Eigen::MatrixXd z_denormalize(const Eigen::MatrixXd& z, const ChannelStats& stats);

inline constexpr int kFieldChannels = 4;  // temperature, pressure, u_x, u_z
inline constexpr int kFieldInputs = 2 + kFieldChannels;  // x, z, then the channels
inline constexpr std::array<const char*, kFieldChannels> kChannelNames = {"temperature", "pressure", "u_x", "u_z"};
inline constexpr std::array<const char*, kFieldInputs> kInputNames = {"x", "z", "temperature", "pressure", "u_x", "u_z"};

/// Time-indexed 2-D fields: four input channels and a nonnegative target per
/// cell. Values are stored as float so that in-memory and on-disk copies agree.
struct FieldDataset {
  Grid grid;
  int timesteps = 0;
  double dt = 1.0;
  std::uint64_t seed = 0;
  std::vector<float> channels;  // [t][channel][cell]
  std::vector<float> target;    // [t][cell]
  SplitLedger ledger;
  ChannelStats input_stats;     // over kFieldInputs columns, training frames only
  double target_mean = 0.0;     // training frames only
  double target_std = 1.0;

  float channel(int t, int c, int cell) const {
    return channels[(static_cast<std::size_t>(t) * kFieldChannels + c) * grid.cells() + cell];
  }
  std::span<const float> target_frame(int t) const {
    return {target.data() + static_cast<std::size_t>(t) * grid.cells(), static_cast<std::size_t>(grid.cells())};
  }
  /// Raw input row (x, z, channels...) of one cell.
  Eigen::RowVectorXd raw_inputs(int t, int cell) const;
};

struct SyntheticOptions {
  int nx = 16;
  int nz = 32;
  int timesteps = 600;
  std::uint64_t seed = 0;
  SplitFractions fractions;
};

/// Transient stand-in for a stratified-pool simulation: a Gaussian region of
/// high target value sinks and decays over time; the input channels are
/// smooth functions of the same state.
FieldDataset generate_synthetic(const SyntheticOptions& options);

/// Computes normalization statistics from the training frames of the ledger.
void compute_dataset_stats(FieldDataset& ds);

/// Directory layout: meta.json plus frames/frame_NNNNN.bin, each holding
/// channels then target as little-endian float32, cell-major per channel.
void save_dataset(const FieldDataset& ds, const std::filesystem::path& dir);
FieldDataset load_dataset(const std::filesystem::path& dir);

/// Inverse-distance-weighted mean of the k nearest scattered samples at each
/// grid cell centre; a coincident sample is returned exactly.
std::vector<double> knn_regrid(const Eigen::MatrixXd& points, std::span<const double> values, int k,
                               const Grid& grid);

struct NoiseSpec {
  double sigma = 0.0;          // relative standard deviation of the noise factor
  double filter_width = 2.0;   // Gaussian filter standard deviation, in cells
  std::uint64_t seed = 0;
};

/// Smoothed multiplicative noise: eps ~ N(0, sigma^2) per cell, Gaussian
/// filtered (truncated at 4 widths, reflected at the borders), rescaled to
/// sample std sigma, then y = max(0, mu + eps * mu). The draw depends only
/// on (spec.seed, epoch, timestep).
std::vector<double> inject_noise(std::span<const double> frame, const Grid& grid, const NoiseSpec& spec,
                                 std::uint64_t epoch, std::uint64_t timestep);
/// The filtered, rescaled noise factor used by inject_noise.
std::vector<double> noise_factor(const Grid& grid, const NoiseSpec& spec, std::uint64_t epoch,
                                 std::uint64_t timestep);

}  // namespace bode
