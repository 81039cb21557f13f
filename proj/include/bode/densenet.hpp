#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <json.hpp>
#include <string>
#include <vector>

#include "bode/error.hpp"
#include "bode/hyperspace.hpp"
#include "bode/random.hpp"

namespace bode {

/// Fully connected dense-block network. A stem layer maps the input to
/// `initial_features`; inside a block every layer sees the concatenation of
/// the block input and all earlier layer outputs and adds `growth_rate`
/// features; a transition layer maps each non-final block back to
/// `initial_features`; the head emits (mean, raw variance) per sample.
struct DenseNetSpec {
  int input_dim = 1;
  int initial_features = 32;
  int growth_rate = 16;
  std::vector<int> layers_per_block = {3, 4, 5};
  double drop_rate = 0.0;
  double variance_floor = 1e-8;

  static DenseNetSpec from_config(int input_dim, const HyperConfig& cfg);
  /// Baseline ensemble architecture (per-block layer counts 3, 4, 5).
  static DenseNetSpec baseline(int input_dim);

  int n_blocks() const { return static_cast<int>(layers_per_block.size()); }
  /// Input width of layer `layer` (0-based) in any block.
  int layer_input_width(int layer) const { return initial_features + layer * growth_rate; }
  int block_output_width(int block) const {
    return initial_features + layers_per_block.at(block) * growth_rate;
  }
  std::size_t parameter_count() const;
  void validate() const;

  bool operator==(const DenseNetSpec&) const = default;
};

void to_json(nlohmann::json& j, const DenseNetSpec& s);
void from_json(const nlohmann::json& j, DenseNetSpec& s);

/// Per-sample Gaussian prediction of one network.
struct MemberPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

/// Inputs and targets in normalized units.
struct Samples {
  Eigen::MatrixXd x;  // rows = samples
  Eigen::VectorXd y;
  Eigen::Index size() const { return y.size(); }
};

/// Gaussian negative log-likelihood summed over samples, with its gradient
/// with respect to the predicted mean and variance.
struct NllResult {
  double value = 0.0;
  Eigen::VectorXd d_mean;
  Eigen::VectorXd d_variance;
};
NllResult nll_loss(const MemberPrediction& pred, const Eigen::VectorXd& y);

struct TrainResult;
struct TrainOptions;

class DenseNet {
 public:
  explicit DenseNet(DenseNetSpec spec);

  const DenseNetSpec& spec() const { return spec_; }
  std::size_t parameter_count() const { return n_params_; }

  /// N(0, 1/(3 fan_in)) weights, zero biases, variance-head bias so that the initial
  /// variance is about 1.
  Eigen::VectorXd initial_parameters(std::uint64_t seed) const;

  /// Inference-mode forward pass (dropout off).
  MemberPrediction predict(const Eigen::VectorXd& params, const Eigen::MatrixXd& x) const;

  /// Summed NLL over the batch and its gradient with respect to `params`.
  /// With `dropout` set, masks are drawn from it (training mode).
  double loss_and_gradient(const Eigen::VectorXd& params, const Eigen::MatrixXd& x,
                           const Eigen::VectorXd& y, Eigen::VectorXd& grad, Rng* dropout = nullptr,
                           MemberPrediction* pred_out = nullptr) const;

 private:
  template <typename T>
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  template <typename T>
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

  struct Layer {
    std::size_t weight = 0;  // offset of the (in x out) column-major weight block
    std::size_t bias = 0;
    int in = 0;
    int out = 0;
  };
  template <typename T>
  struct Cache;

  template <typename T>
  void forward(const T* params, const Mat<T>& x, Cache<T>& cache, Rng* dropout) const;
  template <typename T>
  void infer(const T* params, const Mat<T>& x, Vec<T>& mean, Vec<T>& variance) const;
  template <typename T>
  double batch_gradient(const T* params, const Mat<T>& x, const Vec<T>& y, T* grad, Rng* dropout,
                        Vec<T>* mean_out, Vec<T>* var_out) const;
  void check_inputs(const Eigen::VectorXd& params, const Eigen::MatrixXd& x) const;

  friend TrainResult train(const DenseNetSpec&, const std::function<Samples(int)>&, const Samples&,
                           const TrainOptions&);

  DenseNetSpec spec_;
  Layer stem_;
  std::vector<std::vector<Layer>> blocks_;
  std::vector<Layer> transitions_;
  Layer head_;
  std::size_t n_params_ = 0;
};

/// Trained network plus the seed and configuration that produced it.
struct TrainState {
  DenseNetSpec spec;
  Eigen::VectorXd params;
  int epoch = 0;
  std::uint64_t seed = 0;
  double learning_rate = 0.0;
  double weight_decay = 0.0;
  int batch_size = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_nll = 0.0;   // mean per sample
  double train_rmse = 0.0;  // normalized units, training-mode forward passes
  double val_rmse = 0.0;    // normalized units, inference mode
};

struct TrainResult {
  TrainState state;
  std::vector<EpochRecord> trace;
};

/// Produces the training samples for an epoch. Must be a pure function of
/// the epoch index so runs are reproducible.
using EpochSampler = std::function<Samples(int epoch)>;

struct TrainOptions {
  double learning_rate = BaselineConfig::learning_rate;
  double weight_decay = BaselineConfig::weight_decay;
  int batch_size = BaselineConfig::batch_size;
  int epochs = BaselineConfig::epochs;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static TrainOptions from_config(const HyperConfig& cfg, int epochs, std::uint64_t seed);
};

/// Raised when the loss stops being finite. Carries the parameters at the end
/// of the last epoch whose loss stayed finite.
class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(std::string what, TrainState last_finite)
      : Error(std::move(what)), last_finite_(std::move(last_finite)) {}
  const TrainState& last_finite() const { return last_finite_; }

 private:
  TrainState last_finite_;
};

/// Minibatch Adam with decoupled weight decay on the Gaussian NLL. Samples
/// are reshuffled every epoch; `validation` may be empty.
TrainResult train(const DenseNetSpec& spec, const EpochSampler& sampler, const Samples& validation,
                  const TrainOptions& options);

MemberPrediction predict(const TrainState& state, const Eigen::MatrixXd& x);

/// Binary checkpoint: "BODECKPT", u32 version, u64 header length, JSON
/// header, u64 parameter count, little-endian float64 parameters.
void save_checkpoint(const std::string& path, const TrainState& state, const nlohmann::json& extra = {});
TrainState load_checkpoint(const std::string& path, nlohmann::json* header = nullptr);

}  // namespace bode
