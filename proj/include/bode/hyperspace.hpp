#pragma once

#include <array>
#include <json.hpp>
#include <vector>

namespace bode {

/// One point of the 8-dimensional network search space.
struct HyperConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-3;
  double drop_rate = 0.0;
  int batch_size = 16;
  int n_dense_blocks = 3;
  int layers_per_block = 3;
  int growth_rate = 16;
  int initial_features = 32;

  bool operator==(const HyperConfig&) const = default;
};

/// Hand-tuned reference configuration used by the baseline ensemble.
struct BaselineConfig {
  static constexpr int batch_size = 16;
  static constexpr double learning_rate = 0.0008;
  static constexpr double weight_decay = 0.002;
  static constexpr int n_dense_blocks = 3;
  static constexpr std::array<int, 3> layers_per_block = {3, 4, 5};
  static constexpr int growth_rate = 16;
  static constexpr double drop_rate = 0.15;
  static constexpr int initial_features = 32;
  static constexpr int epochs = 200;
};

namespace hyperspace {

inline constexpr int kDimension = 8;
inline constexpr double kMinRate = 1e-4;
inline constexpr double kMaxRate = 1e-2;
inline constexpr double kMaxDropRate = 0.5;
inline constexpr std::array<int, 8> kBatchSizes = {8, 12, 16, 24, 32, 48, 64, 128};
inline constexpr std::array<int, 2> kDenseBlocks = {3, 5};
inline constexpr std::array<int, 7> kLayers = {3, 4, 5, 6, 7, 8, 9};
inline constexpr std::array<int, 6> kGrowthRates = {8, 12, 16, 24, 32, 48};
inline constexpr std::array<int, 8> kInitialFeatures = {8, 12, 16, 24, 32, 48, 64, 128};

/// Coordinate order: learning_rate, weight_decay, drop_rate, batch_size,
/// n_dense_blocks, layers_per_block, growth_rate, initial_features.
using Point = std::array<double, kDimension>;

/// Rates are log-uniform, drop rate linear, discrete fields equal-width bins.
HyperConfig decode(const Point& u);
HyperConfig decode(const std::vector<double>& u);
/// Continuous fields invert exactly; discrete fields go to their bin centers.
Point encode(const HyperConfig& cfg);

/// Throws InvalidArgument naming the first offending field.
void validate(const HyperConfig& cfg);
bool is_valid(const HyperConfig& cfg);

}  // namespace hyperspace

void to_json(nlohmann::json& j, const HyperConfig& cfg);
void from_json(const nlohmann::json& j, HyperConfig& cfg);

}  // namespace bode
