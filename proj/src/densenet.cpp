#include "bode/densenet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace bode {

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
// softplus(kVarianceBias) == 1
constexpr double kVarianceBias = 0.5413248546129181;

}  // namespace

// ---------------------------------------------------------------------------
// spec

DenseNetSpec DenseNetSpec::from_config(int input_dim, const HyperConfig& cfg) {
  hyperspace::validate(cfg);
  DenseNetSpec s;
  s.input_dim = input_dim;
  s.initial_features = cfg.initial_features;
  s.growth_rate = cfg.growth_rate;
  s.layers_per_block.assign(cfg.n_dense_blocks, cfg.layers_per_block);
  s.drop_rate = cfg.drop_rate;
  s.validate();
  return s;
}

DenseNetSpec DenseNetSpec::baseline(int input_dim) {
  DenseNetSpec s;
  s.input_dim = input_dim;
  s.initial_features = BaselineConfig::initial_features;
  s.growth_rate = BaselineConfig::growth_rate;
  s.layers_per_block.assign(BaselineConfig::layers_per_block.begin(), BaselineConfig::layers_per_block.end());
  s.drop_rate = BaselineConfig::drop_rate;
  s.validate();
  return s;
}

void DenseNetSpec::validate() const {
  if (input_dim < 1) throw InvalidArgument("DenseNetSpec: input_dim must be positive");
  if (initial_features < 1 || growth_rate < 1) throw InvalidArgument("DenseNetSpec: widths must be positive");
  if (layers_per_block.empty()) throw InvalidArgument("DenseNetSpec: need at least one dense block");
  for (int l : layers_per_block)
    if (l < 1) throw InvalidArgument("DenseNetSpec: every block needs at least one layer");
  if (!(drop_rate >= 0.0 && drop_rate < 1.0)) throw InvalidArgument("DenseNetSpec: drop_rate must be in [0, 1)");
  if (!(variance_floor > 0.0)) throw InvalidArgument("DenseNetSpec: variance_floor must be positive");
}

std::size_t DenseNetSpec::parameter_count() const {
  const auto F = static_cast<std::size_t>(initial_features);
  const auto g = static_cast<std::size_t>(growth_rate);
  std::size_t n = static_cast<std::size_t>(input_dim) * F + F;
  for (int b = 0; b < n_blocks(); ++b) {
    const auto L = static_cast<std::size_t>(layers_per_block[b]);
    // sum_k (F + k g) g + g for k = 0..L-1
    n += L * F * g + g * g * L * (L - 1) / 2 + L * g;
    const std::size_t width = F + L * g;
    n += b + 1 < n_blocks() ? width * F + F : width * 2 + 2;
  }
  return n;
}

void to_json(nlohmann::json& j, const DenseNetSpec& s) {
  j = nlohmann::json{{"input_dim", s.input_dim},
                     {"initial_features", s.initial_features},
                     {"growth_rate", s.growth_rate},
                     {"layers_per_block", s.layers_per_block},
                     {"drop_rate", s.drop_rate},
                     {"variance_floor", s.variance_floor}};
}

void from_json(const nlohmann::json& j, DenseNetSpec& s) {
  j.at("input_dim").get_to(s.input_dim);
  j.at("initial_features").get_to(s.initial_features);
  j.at("growth_rate").get_to(s.growth_rate);
  j.at("layers_per_block").get_to(s.layers_per_block);
  j.at("drop_rate").get_to(s.drop_rate);
  j.at("variance_floor").get_to(s.variance_floor);
  s.validate();
}

// ---------------------------------------------------------------------------
// loss

NllResult nll_loss(const MemberPrediction& pred, const Eigen::VectorXd& y) {
  if (pred.mean.size() != y.size() || pred.variance.size() != y.size())
    throw InvalidArgument("nll_loss: prediction/target size mismatch");
  NllResult r;
  const Eigen::ArrayXd resid = y.array() - pred.mean.array();
  const Eigen::ArrayXd var = pred.variance.array();
  r.value = (resid.square() / (2.0 * var) + 0.5 * var.log()).sum();
  r.d_mean = -resid / var;
  r.d_variance = 0.5 / var - resid.square() / (2.0 * var.square());
  return r;
}

// ---------------------------------------------------------------------------
// network

template <typename T>
struct DenseNet::Cache {
  std::vector<Mat<T>> block;              // n x (F + L g), left F columns = block input
  std::vector<std::vector<Mat<T>>> mask;  // dropout masks, training mode only
  Mat<T> head;                            // n x 2, pre-activation
};

DenseNet::DenseNet(DenseNetSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t off = 0;
  auto make = [&off](int in, int out) {
    Layer l{off, off + static_cast<std::size_t>(in) * out, in, out};
    off = l.bias + static_cast<std::size_t>(out);
    return l;
  };
  const int F = spec_.initial_features;
  stem_ = make(spec_.input_dim, F);
  for (int b = 0; b < spec_.n_blocks(); ++b) {
    std::vector<Layer> layers;
    for (int k = 0; k < spec_.layers_per_block[b]; ++k) layers.push_back(make(spec_.layer_input_width(k), spec_.growth_rate));
    blocks_.push_back(std::move(layers));
    if (b + 1 < spec_.n_blocks()) transitions_.push_back(make(spec_.block_output_width(b), F));
  }
  head_ = make(spec_.block_output_width(spec_.n_blocks() - 1), 2);
  n_params_ = off;
}

Eigen::VectorXd DenseNet::initial_parameters(std::uint64_t seed) const {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_params_));
  NormalSampler normal(seed);
  auto fill = [&](const Layer& l, double stddev) {
    for (std::size_t i = 0; i < static_cast<std::size_t>(l.in) * l.out; ++i) p[l.weight + i] = stddev * normal();
  };
  auto he = [](const Layer& l) { return std::sqrt(1.0 / (3.0 * l.in)); };
  fill(stem_, he(stem_));
  for (const auto& blk : blocks_)
    for (const auto& l : blk) fill(l, he(l));
  for (const auto& l : transitions_) fill(l, he(l));
  fill(head_, std::sqrt(1.0 / head_.in));
  p[head_.bias + 1] = kVarianceBias;
  return p;
}

template <typename T>
void DenseNet::forward(const T* params, const Mat<T>& x, Cache<T>& cache, Rng* dropout) const {
  using Map = Eigen::Map<const Mat<T>>;
  using VMap = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;
  auto W = [&](const Layer& l) { return Map(params + l.weight, l.in, l.out); };
  auto B = [&](const Layer& l) { return VMap(params + l.bias, l.out); };

  const Eigen::Index n = x.rows();
  const int F = spec_.initial_features;
  const int g = spec_.growth_rate;
  const bool drop = dropout != nullptr && spec_.drop_rate > 0.0;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - spec_.drop_rate));

  cache.block.resize(blocks_.size());
  cache.mask.resize(drop ? blocks_.size() : 0);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    auto& buf = cache.block[b];
    buf.resize(n, spec_.block_output_width(static_cast<int>(b)));
    auto in = buf.leftCols(F);
    if (b == 0) {
      in.noalias() = x * W(stem_);
      in.rowwise() += B(stem_);
    } else {
      in.noalias() = cache.block[b - 1] * W(transitions_[b - 1]);
      in.rowwise() += B(transitions_[b - 1]);
    }
    in = in.cwiseMax(T(0));
    if (drop) cache.mask[b].resize(blocks_[b].size());
    for (std::size_t k = 0; k < blocks_[b].size(); ++k) {
      const Layer& l = blocks_[b][k];
      const int w = F + static_cast<int>(k) * g;
      auto out = buf.middleCols(w, g);
      out.noalias() = buf.leftCols(w) * W(l);
      out.rowwise() += B(l);
      out = out.cwiseMax(T(0));
      if (drop) {
        auto& m = cache.mask[b][k];
        m.resize(n, g);
        for (Eigen::Index c = 0; c < g; ++c)
          for (Eigen::Index r = 0; r < n; ++r) {
            const double u = static_cast<double>((*dropout)() >> 11) * 0x1.0p-53;
            m(r, c) = u < spec_.drop_rate ? T(0) : keep_scale;
          }
        out.array() *= m.array();
      }
    }
  }
  cache.head.noalias() = cache.block.back() * W(head_);
  cache.head.rowwise() += B(head_);
}

template <typename T>
void DenseNet::infer(const T* params, const Mat<T>& x, Vec<T>& mean, Vec<T>& variance) const {
  mean.resize(x.rows());
  variance.resize(x.rows());
  constexpr Eigen::Index chunk = 4096;
  Cache<T> cache;
  for (Eigen::Index start = 0; start < x.rows(); start += chunk) {
    const Eigen::Index len = std::min(chunk, x.rows() - start);
    forward<T>(params, x.middleRows(start, len), cache, nullptr);
    mean.segment(start, len) = cache.head.col(0);
    for (Eigen::Index i = 0; i < len; ++i)
      variance[start + i] = static_cast<T>(softplus(cache.head(i, 1)) + spec_.variance_floor);
  }
}

void DenseNet::check_inputs(const Eigen::VectorXd& params, const Eigen::MatrixXd& x) const {
  if (x.cols() != spec_.input_dim)
    throw InvalidArgument("DenseNet: input has " + std::to_string(x.cols()) + " features, expected " +
                          std::to_string(spec_.input_dim));
  if (params.size() != static_cast<Eigen::Index>(n_params_)) throw InvalidArgument("DenseNet: parameter count mismatch");
}

MemberPrediction DenseNet::predict(const Eigen::VectorXd& params, const Eigen::MatrixXd& x) const {
  check_inputs(params, x);
  MemberPrediction pred;
  infer<double>(params.data(), x, pred.mean, pred.variance);
  return pred;
}

template <typename T>
double DenseNet::batch_gradient(const T* params, const Mat<T>& x, const Vec<T>& y, T* grad, Rng* dropout,
                                Vec<T>* mean_out, Vec<T>* var_out) const {
  Cache<T> cache;
  forward<T>(params, x, cache, dropout);
  const Eigen::Index n = x.rows();

  // Gaussian NLL and its derivatives with respect to the head outputs
  Mat<T> d_head(n, 2);
  if (var_out) var_out->resize(n);
  double value = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double raw = cache.head(i, 1);
    const double var = softplus(raw) + spec_.variance_floor;
    if (var_out) (*var_out)[i] = static_cast<T>(var);
    const double resid = static_cast<double>(y[i]) - static_cast<double>(cache.head(i, 0));
    value += resid * resid / (2.0 * var) + 0.5 * std::log(var);
    d_head(i, 0) = static_cast<T>(-resid / var);
    d_head(i, 1) = static_cast<T>((0.5 / var - resid * resid / (2.0 * var * var)) * sigmoid(raw));
  }

  using Map = Eigen::Map<const Mat<T>>;
  using GMap = Eigen::Map<Mat<T>>;
  using GVMap = Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>;
  auto W = [&](const Layer& l) { return Map(params + l.weight, l.in, l.out); };
  auto gW = [&](const Layer& l) { return GMap(grad + l.weight, l.in, l.out); };
  auto gB = [&](const Layer& l) { return GVMap(grad + l.bias, l.out); };

  const int F = spec_.initial_features;
  const int g = spec_.growth_rate;
  const bool drop = !cache.mask.empty();

  // every weight and bias block is assigned exactly once below
  gW(head_).noalias() = cache.block.back().transpose() * d_head;
  gB(head_) = d_head.colwise().sum();
  Mat<T> d_block = d_head * W(head_).transpose();

  Mat<T> dz;
  for (std::size_t bi = blocks_.size(); bi-- > 0;) {
    const auto& buf = cache.block[bi];
    for (std::size_t k = blocks_[bi].size(); k-- > 0;) {
      const Layer& l = blocks_[bi][k];
      const int w = F + static_cast<int>(k) * g;
      const auto out = buf.middleCols(w, g);
      if (drop) {
        dz = (out.array() > T(0)).select(d_block.middleCols(w, g).array() * cache.mask[bi][k].array(), T(0));
      } else {
        dz = (out.array() > T(0)).select(d_block.middleCols(w, g), T(0));
      }
      gW(l).noalias() = buf.leftCols(w).transpose() * dz;
      gB(l) = dz.colwise().sum();
      d_block.leftCols(w).noalias() += dz * W(l).transpose();
    }
    dz = (buf.leftCols(F).array() > T(0)).select(d_block.leftCols(F), T(0));
    if (bi > 0) {
      const Layer& t = transitions_[bi - 1];
      gW(t).noalias() = cache.block[bi - 1].transpose() * dz;
      gB(t) = dz.colwise().sum();
      d_block = dz * W(t).transpose();
    } else {
      gW(stem_).noalias() = x.transpose() * dz;
      gB(stem_) = dz.colwise().sum();
    }
  }
  if (mean_out) *mean_out = cache.head.col(0);
  return value;
}

double DenseNet::loss_and_gradient(const Eigen::VectorXd& params, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                   Eigen::VectorXd& grad, Rng* dropout, MemberPrediction* pred_out) const {
  check_inputs(params, x);
  if (x.rows() != y.size()) throw InvalidArgument("DenseNet: batch input/target size mismatch");
  grad.resize(static_cast<Eigen::Index>(n_params_));
  return batch_gradient<double>(params.data(), x, y, grad.data(), dropout, pred_out ? &pred_out->mean : nullptr,
                                pred_out ? &pred_out->variance : nullptr);
}

// ---------------------------------------------------------------------------
// training

TrainOptions TrainOptions::from_config(const HyperConfig& cfg, int epochs, std::uint64_t seed) {
  TrainOptions o;
  o.learning_rate = cfg.learning_rate;
  o.weight_decay = cfg.weight_decay;
  o.batch_size = cfg.batch_size;
  o.epochs = epochs;
  o.seed = seed;
  return o;
}

namespace {

double rmse_of(const Eigen::VectorXd& y, const Eigen::VectorXd& mu) {
  return std::sqrt((y - mu).squaredNorm() / static_cast<double>(y.size()));
}

}  // namespace

// Training runs in single precision, as common deep-learning frameworks do by
// default; the stored state and all inference stay in double.
TrainResult train(const DenseNetSpec& spec, const EpochSampler& sampler, const Samples& validation,
                  const TrainOptions& opt) {
  if (opt.epochs < 1) throw InvalidArgument("train: epochs must be positive");
  if (opt.batch_size < 1) throw InvalidArgument("train: batch_size must be positive");
  if (!(opt.learning_rate > 0.0) || opt.weight_decay < 0.0) throw InvalidArgument("train: invalid optimizer settings");
  if (validation.size() > 0 && validation.x.cols() != spec.input_dim)
    throw InvalidArgument("train: validation dimension mismatch");
  const DenseNet net(spec);
  using VecF = Eigen::VectorXf;
  using MatF = Eigen::MatrixXf;

  TrainResult result;
  TrainState& st = result.state;
  st.spec = spec;
  st.seed = opt.seed;
  st.learning_rate = opt.learning_rate;
  st.weight_decay = opt.weight_decay;
  st.batch_size = opt.batch_size;

  Rng shuffle_rng(derive_seed(opt.seed, {2}));
  Rng dropout_rng(derive_seed(opt.seed, {3}));
  VecF params = net.initial_parameters(derive_seed(opt.seed, {1})).cast<float>();
  VecF m = VecF::Zero(params.size());
  VecF v = VecF::Zero(params.size());
  VecF grad(params.size());
  Eigen::VectorXd checkpoint = params.cast<double>();
  const MatF val_x = validation.x.cast<float>();
  const float b1 = static_cast<float>(opt.beta1), b2 = static_cast<float>(opt.beta2);
  const float lr = static_cast<float>(opt.learning_rate), eps = static_cast<float>(opt.epsilon);
  const float decay = static_cast<float>(1.0 - opt.learning_rate * opt.weight_decay);
  long long step = 0;
  auto fail = [&](int epoch, long long at, const std::string& what) {
    TrainState last = st;
    last.params = checkpoint;
    last.epoch = epoch;
    throw NonFiniteLoss("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(at) +
                            " (" + what + ")",
                        std::move(last));
  };

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    const Samples data = sampler(epoch);
    if (data.size() == 0) throw InvalidArgument("train: sampler produced no samples");
    if (data.x.cols() != spec.input_dim) throw InvalidArgument("train: sample dimension mismatch");
    std::vector<Eigen::Index> order(static_cast<std::size_t>(data.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    bode::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0, sse = 0.0;
    MatF xb;
    VecF yb, mean;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opt.batch_size)) {
      const auto len = static_cast<Eigen::Index>(std::min<std::size_t>(opt.batch_size, order.size() - start));
      xb.resize(len, data.x.cols());
      yb.resize(len);
      for (Eigen::Index i = 0; i < len; ++i) {
        xb.row(i) = data.x.row(order[start + i]).cast<float>();
        yb[i] = static_cast<float>(data.y[order[start + i]]);
      }
      const double loss = net.batch_gradient<float>(params.data(), xb, yb, grad.data(), &dropout_rng, &mean, nullptr);
      if (!std::isfinite(loss)) fail(epoch, step, "batch loss " + std::to_string(loss));
      loss_sum += loss;
      sse += (yb - mean).cast<double>().squaredNorm();

      ++step;
      const float bc1 = static_cast<float>(1.0 - std::pow(opt.beta1, static_cast<double>(step)));
      const float bc2 = static_cast<float>(1.0 - std::pow(opt.beta2, static_cast<double>(step)));
      // lr m_hat / (sqrt(v_hat) + eps) with the bias corrections folded into two scalars
      const float inv_len = 1.0f / static_cast<float>(len);
      const float step_size = lr * std::sqrt(bc2) / bc1;
      const float eps_hat = eps * std::sqrt(bc2);
      m.array() = b1 * m.array() + ((1.0f - b1) * inv_len) * grad.array();
      v.array() = b2 * v.array() + ((1.0f - b2) * inv_len * inv_len) * grad.array().square();
      params.array() = decay * params.array() - step_size * m.array() / (v.array().sqrt() + eps_hat);
    }
    // a gradient overflow shows up in the parameters; scanning once per epoch is enough
    if (!params.allFinite()) fail(epoch, step, "non-finite parameters");
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_nll = loss_sum / static_cast<double>(data.size());
    rec.train_rmse = std::sqrt(sse / static_cast<double>(data.size()));
    if (validation.size() > 0) {
      VecF val_mean, val_var;
      net.infer<float>(params.data(), val_x, val_mean, val_var);
      rec.val_rmse = rmse_of(validation.y, val_mean.cast<double>());
    }
    result.trace.push_back(rec);
    checkpoint = params.cast<double>();
  }
  st.params = checkpoint;
  st.epoch = opt.epochs;
  return result;
}

MemberPrediction predict(const TrainState& state, const Eigen::MatrixXd& x) {
  return DenseNet(state.spec).predict(state.params, x);
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {

constexpr char kMagic[8] = {'B', 'O', 'D', 'E', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
T swap_bytes(T value) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &value, sizeof(T));
  std::reverse(b, b + sizeof(T));
  std::memcpy(&value, b, sizeof(T));
  return value;
}

template <typename T>
void write_le(std::ostream& out, T value) {
  if constexpr (std::endian::native == std::endian::big) value = swap_bytes(value);
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if constexpr (std::endian::native == std::endian::big) value = swap_bytes(value);
  return value;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& st, const nlohmann::json& extra) {
  nlohmann::json header = {{"spec", st.spec},
                           {"seed", st.seed},
                           {"epoch", st.epoch},
                           {"learning_rate", st.learning_rate},
                           {"weight_decay", st.weight_decay},
                           {"batch_size", st.batch_size},
                           {"n_params", st.params.size()}};
  if (!extra.is_null()) header["extra"] = extra;
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path, "cannot open checkpoint for writing");
  out.write(kMagic, sizeof kMagic);
  write_le<std::uint32_t>(out, kVersion);
  write_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_le<std::uint64_t>(out, static_cast<std::uint64_t>(st.params.size()));
  for (Eigen::Index i = 0; i < st.params.size(); ++i) write_le(out, std::bit_cast<std::uint64_t>(st.params[i]));
  if (!out) throw IoError(path, "write failed");
}

TrainState load_checkpoint(const std::string& path, nlohmann::json* header_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open checkpoint");
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw IoError(path, "not a checkpoint file");
  if (read_le<std::uint32_t>(in) != kVersion) throw IoError(path, "unsupported checkpoint version");
  const auto header_len = read_le<std::uint64_t>(in);
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw IoError(path, "truncated header");
  const auto header = nlohmann::json::parse(text);
  TrainState st;
  header.at("spec").get_to(st.spec);
  header.at("seed").get_to(st.seed);
  header.at("epoch").get_to(st.epoch);
  header.at("learning_rate").get_to(st.learning_rate);
  header.at("weight_decay").get_to(st.weight_decay);
  header.at("batch_size").get_to(st.batch_size);
  const auto n = read_le<std::uint64_t>(in);
  if (n != DenseNet(st.spec).parameter_count()) throw IoError(path, "parameter count does not match spec");
  st.params.resize(static_cast<Eigen::Index>(n));
  for (std::uint64_t i = 0; i < n; ++i) st.params[static_cast<Eigen::Index>(i)] = std::bit_cast<double>(read_le<std::uint64_t>(in));
  if (!in) throw IoError(path, "truncated parameters");
  if (header_out) *header_out = header;
  return st;
}

}  // namespace bode
