#include "bode/hyperspace.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "bode/error.hpp"

namespace bode::hyperspace {

namespace {

const double kLogMin = std::log10(kMinRate);
const double kLogMax = std::log10(kMaxRate);

template <std::size_t N>
int bin(double u, const std::array<int, N>& values) {
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(u * N), N - 1);
  return values[i];
}

template <std::size_t N>
double bin_center(int v, const std::array<int, N>& values, const char* name) {
  const auto it = std::find(values.begin(), values.end(), v);
  if (it == values.end()) throw InvalidArgument(std::string("hyperconfig: ") + name + " " + std::to_string(v) + " is not an allowed value");
  return (static_cast<double>(it - values.begin()) + 0.5) / static_cast<double>(N);
}

double log_rate(double u) { return std::pow(10.0, kLogMin + (kLogMax - kLogMin) * u); }
double unlog_rate(double r) { return (std::log10(r) - kLogMin) / (kLogMax - kLogMin); }

HyperConfig decode_span(std::span<const double> u) {
  if (u.size() != kDimension) throw InvalidArgument("hyperspace::decode: expected 8 coordinates");
  for (std::size_t i = 0; i < u.size(); ++i)
    if (!(u[i] >= 0.0 && u[i] <= 1.0))
      throw InvalidArgument("hyperspace::decode: coordinate " + std::to_string(i) + " outside [0,1]");
  HyperConfig c;
  c.learning_rate = log_rate(u[0]);
  c.weight_decay = log_rate(u[1]);
  c.drop_rate = kMaxDropRate * u[2];
  c.batch_size = bin(u[3], kBatchSizes);
  c.n_dense_blocks = bin(u[4], kDenseBlocks);
  c.layers_per_block = bin(u[5], kLayers);
  c.growth_rate = bin(u[6], kGrowthRates);
  c.initial_features = bin(u[7], kInitialFeatures);
  return c;
}

}  // namespace

HyperConfig decode(const Point& u) { return decode_span(u); }
HyperConfig decode(const std::vector<double>& u) { return decode_span(u); }

void validate(const HyperConfig& c) {
  // small slack so values produced by decode() at the bounds are accepted
  constexpr double slack = 1e-12;
  auto rate_ok = [](double r) { return r >= kMinRate * (1 - slack) && r <= kMaxRate * (1 + slack); };
  if (!rate_ok(c.learning_rate)) throw InvalidArgument("hyperconfig: learning_rate outside [1e-4, 1e-2]");
  if (!rate_ok(c.weight_decay)) throw InvalidArgument("hyperconfig: weight_decay outside [1e-4, 1e-2]");
  if (!(c.drop_rate >= 0.0 && c.drop_rate <= kMaxDropRate)) throw InvalidArgument("hyperconfig: drop_rate outside [0, 0.5]");
  bin_center(c.batch_size, kBatchSizes, "batch_size");
  bin_center(c.n_dense_blocks, kDenseBlocks, "n_dense_blocks");
  bin_center(c.layers_per_block, kLayers, "layers_per_block");
  bin_center(c.growth_rate, kGrowthRates, "growth_rate");
  bin_center(c.initial_features, kInitialFeatures, "initial_features");
}

bool is_valid(const HyperConfig& cfg) {
  try {
    validate(cfg);
    return true;
  } catch (const InvalidArgument&) {
    return false;
  }
}

Point encode(const HyperConfig& c) {
  validate(c);
  Point u;
  u[0] = std::clamp(unlog_rate(c.learning_rate), 0.0, 1.0);
  u[1] = std::clamp(unlog_rate(c.weight_decay), 0.0, 1.0);
  u[2] = c.drop_rate / kMaxDropRate;
  u[3] = bin_center(c.batch_size, kBatchSizes, "batch_size");
  u[4] = bin_center(c.n_dense_blocks, kDenseBlocks, "n_dense_blocks");
  u[5] = bin_center(c.layers_per_block, kLayers, "layers_per_block");
  u[6] = bin_center(c.growth_rate, kGrowthRates, "growth_rate");
  u[7] = bin_center(c.initial_features, kInitialFeatures, "initial_features");
  return u;
}

}  // namespace bode::hyperspace

namespace bode {

void to_json(nlohmann::json& j, const HyperConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate},     {"weight_decay", c.weight_decay},
                     {"drop_rate", c.drop_rate},             {"batch_size", c.batch_size},
                     {"n_dense_blocks", c.n_dense_blocks},   {"layers_per_block", c.layers_per_block},
                     {"growth_rate", c.growth_rate},         {"initial_features", c.initial_features}};
}

void from_json(const nlohmann::json& j, HyperConfig& c) {
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("weight_decay").get_to(c.weight_decay);
  j.at("drop_rate").get_to(c.drop_rate);
  j.at("batch_size").get_to(c.batch_size);
  j.at("n_dense_blocks").get_to(c.n_dense_blocks);
  j.at("layers_per_block").get_to(c.layers_per_block);
  j.at("growth_rate").get_to(c.growth_rate);
  j.at("initial_features").get_to(c.initial_features);
}

}  // namespace bode
