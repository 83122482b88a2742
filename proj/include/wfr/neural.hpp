#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "wfr/dataset.hpp"
#include "wfr/rng.hpp"
#include "wfr/tree.hpp"

namespace wfr::nn {

// Batches are (batch x units) column-major matrices: one sample per row.
using Batch = Eigen::MatrixXd;

enum class Activation : std::uint8_t { Identity, ReLU };
enum class Mode : std::uint8_t { Train, Infer };

inline double activate(Activation a, double z) noexcept {
  return a == Activation::ReLU ? std::max(z, 0.0) : z;
}
inline double activate_slope(Activation a, double z) noexcept {
  return a == Activation::ReLU ? (z > 0.0 ? 1.0 : 0.0) : 1.0;
}

// Neuron i applies one scalar weight and bias to every component of the
// input vector: out(i, j) = act(w_i * x_j + b_i). A batch of d-vectors maps
// to a batch of flattened d x d matrices, row-major in (i, j).
struct SharedInputLayer {
  Vector w;
  Vector b;
  Activation act = Activation::Identity;

  std::size_t width() const noexcept { return static_cast<std::size_t>(w.size()); }
};

inline Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> forward_shared(
    const SharedInputLayer& layer, std::span<const double> x) {
  const auto d = static_cast<Eigen::Index>(layer.width());
  if (static_cast<Eigen::Index>(x.size()) != d) throw std::invalid_argument("forward_shared: width mismatch");
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) out(i, j) = activate(layer.act, layer.w(i) * x[static_cast<std::size_t>(j)] + layer.b(i));
  return out;
}

struct DenseLayer {
  Eigen::MatrixXd W;  // out x in
  Vector b;
  Activation act = Activation::Identity;
};

struct BatchNormState {
  Vector gamma;
  Vector beta;
  Vector running_mean;
  Vector running_var;
  double momentum = 0.99;
  double eps = 1e-5;

  static BatchNormState identity(std::size_t units) {
    const auto u = static_cast<Eigen::Index>(units);
    return {Vector::Ones(u), Vector::Zero(u), Vector::Zero(u), Vector::Ones(u), 0.99, 1e-5};
  }
};

struct ReLULayer {};

struct DropoutLayer {
  double rate = 0.0;
};

using Layer = std::variant<SharedInputLayer, DenseLayer, BatchNormState, ReLULayer, DropoutLayer>;

// Layer stack ending in a 4-unit affine layer; softmax is applied on top.
struct NetworkModel {
  std::string preset;
  std::size_t input_width = 0;
  std::vector<Layer> layers;

  std::size_t parameter_count() const;
};

// ---------------------------------------------------------------------------
// Elementary operations

template <typename Derived>
Vector softmax(const Eigen::MatrixBase<Derived>& logits) {
  const double top = logits.maxCoeff();
  Vector e = (logits.array() - top).exp().matrix();
  return e / e.sum();
}

inline Batch softmax_rows(const Batch& logits) {
  Batch p(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) p.row(r) = softmax(logits.row(r).transpose()).transpose();
  return p;
}

inline constexpr double kProbabilityFloor = 1e-12;

inline double cross_entropy(std::span<const double> probabilities, std::size_t target) {
  return -std::log(std::max(probabilities[target], kProbabilityFloor));
}

namespace detail {

struct BatchNormCache {
  Batch xhat;
  Vector inv_std;
};

inline Batch batch_norm_apply(BatchNormState& s, const Batch& x, Mode mode, BatchNormCache* cache) {
  if (mode == Mode::Infer) {
    Batch out(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double inv = 1.0 / std::sqrt(s.running_var(c) + s.eps);
      out.col(c) = ((x.col(c).array() - s.running_mean(c)) * inv * s.gamma(c) + s.beta(c)).matrix();
    }
    return out;
  }
  if (x.rows() < 2) throw std::invalid_argument("batch norm in train mode needs a batch of at least 2");
  const double n = static_cast<double>(x.rows());
  Batch out(x.rows(), x.cols());
  Batch xhat(x.rows(), x.cols());
  Vector inv_std(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double mean = x.col(c).mean();
    const double var = (x.col(c).array() - mean).square().sum() / n;
    inv_std(c) = 1.0 / std::sqrt(var + s.eps);
    xhat.col(c) = ((x.col(c).array() - mean) * inv_std(c)).matrix();
    out.col(c) = (xhat.col(c).array() * s.gamma(c) + s.beta(c)).matrix();
    s.running_mean(c) = s.momentum * s.running_mean(c) + (1.0 - s.momentum) * mean;
    s.running_var(c) = s.momentum * s.running_var(c) + (1.0 - s.momentum) * var;
  }
  if (cache) *cache = {std::move(xhat), std::move(inv_std)};
  return out;
}

// Scaled keep-mask for inverted dropout.
inline Batch dropout_mask(double rate, Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Batch mask(rows, cols);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) mask(r, c) = rng.uniform() < rate ? 0.0 : keep_scale;
  return mask;
}

}  // namespace detail

// Normalizes each column by batch statistics (train) or running statistics
// (infer), then scales by gamma and shifts by beta. Train mode also moves the
// running statistics by `momentum`.
inline Batch batch_norm_forward(BatchNormState& state, const Batch& batch, Mode mode) {
  return detail::batch_norm_apply(state, batch, mode, nullptr);
}

inline Batch dropout_apply(double rate, Mode mode, const Batch& batch, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
  if (mode == Mode::Infer || rate == 0.0) return batch;
  return batch.cwiseProduct(detail::dropout_mask(rate, batch.rows(), batch.cols(), rng));
}

inline Batch dropout_apply(double rate, Mode mode, const Batch& batch, std::uint64_t seed) {
  Rng rng(seed);
  return dropout_apply(rate, mode, batch, rng);
}

// ---------------------------------------------------------------------------
// Parameters and optimizer

// Mutable views of every trainable array, in layer order.
inline std::vector<std::span<double>> parameters(NetworkModel& model) {
  std::vector<std::span<double>> out;
  auto add = [&out](auto& m) { out.emplace_back(m.data(), static_cast<std::size_t>(m.size())); };
  for (auto& layer : model.layers) {
    std::visit(
        [&](auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, SharedInputLayer>) {
            add(l.w);
            add(l.b);
          } else if constexpr (std::is_same_v<T, DenseLayer>) {
            add(l.W);
            add(l.b);
          } else if constexpr (std::is_same_v<T, BatchNormState>) {
            add(l.gamma);
            add(l.beta);
          }
        },
        layer);
  }
  return out;
}

inline std::size_t NetworkModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) {
    if (const auto* s = std::get_if<SharedInputLayer>(&layer)) n += static_cast<std::size_t>(s->w.size() + s->b.size());
    if (const auto* d = std::get_if<DenseLayer>(&layer)) n += static_cast<std::size_t>(d->W.size() + d->b.size());
    if (const auto* b = std::get_if<BatchNormState>(&layer)) n += static_cast<std::size_t>(b->gamma.size() + b->beta.size());
  }
  return n;
}

// Gradient buffers aligned with parameters(model).
using Gradients = std::vector<std::vector<double>>;

inline Gradients zero_gradients(NetworkModel& model) {
  Gradients g;
  for (auto s : parameters(model)) g.emplace_back(s.size(), 0.0);
  return g;
}

struct AdadeltaState {
  double rho = 0.95;
  double eps = 1e-6;
  Gradients sq_grad;   // E[g^2]
  Gradients sq_delta;  // E[dx^2]

  static AdadeltaState for_model(NetworkModel& model, double rho = 0.95, double eps = 1e-6) {
    AdadeltaState s;
    s.rho = rho;
    s.eps = eps;
    s.sq_grad = zero_gradients(model);
    s.sq_delta = zero_gradients(model);
    return s;
  }
};

// Adaptive step per component:
//   E[g^2]  <- rho E[g^2] + (1 - rho) g^2
//   dx      <- -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
//   E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
inline Gradients adadelta_step(AdadeltaState& state, const Gradients& grads) {
  if (grads.size() != state.sq_grad.size()) throw std::invalid_argument("adadelta_step: shape mismatch");
  Gradients deltas(grads.size());
  for (std::size_t p = 0; p < grads.size(); ++p) {
    const auto& g = grads[p];
    auto& eg = state.sq_grad[p];
    auto& ed = state.sq_delta[p];
    if (g.size() != eg.size()) throw std::invalid_argument("adadelta_step: shape mismatch");
    auto& dx = deltas[p];
    dx.resize(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      eg[i] = state.rho * eg[i] + (1.0 - state.rho) * g[i] * g[i];
      dx[i] = -std::sqrt(ed[i] + state.eps) / std::sqrt(eg[i] + state.eps) * g[i];
      ed[i] = state.rho * ed[i] + (1.0 - state.rho) * dx[i] * dx[i];
    }
  }
  return deltas;
}

inline void apply_deltas(NetworkModel& model, const Gradients& deltas) {
  auto params = parameters(model);
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t i = 0; i < params[p].size(); ++i) params[p][i] += deltas[p][i];
}

// ---------------------------------------------------------------------------
// Forward / backward

struct LayerCache {
  Batch input;
  Batch pre_activation;
  detail::BatchNormCache bn;
  Batch mask;
};

struct ForwardPass {
  Batch logits;
  Batch probabilities;
  std::vector<LayerCache> caches;
};

// Runs the stack. In train mode batch-norm running statistics are updated
// and dropout masks are drawn from `rng` (required when any rate > 0).
inline ForwardPass forward(NetworkModel& model, const Batch& x, Mode mode, Rng* rng = nullptr,
                           bool keep_caches = false) {
  ForwardPass pass;
  if (keep_caches) pass.caches.resize(model.layers.size());
  Batch h = x;
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    LayerCache* cache = keep_caches ? &pass.caches[li] : nullptr;
    if (cache) cache->input = h;
    std::visit(
        [&](auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, SharedInputLayer>) {
            const auto d = static_cast<Eigen::Index>(l.width());
            if (h.cols() != d) throw std::invalid_argument("shared layer: input width mismatch");
            Batch z(h.rows(), d * d);
            for (Eigen::Index i = 0; i < d; ++i)
              z.middleCols(i * d, d) = ((h.array() * l.w(i)) + l.b(i)).matrix();
            if (cache) cache->pre_activation = z;
            h = z.unaryExpr([&](double v) { return activate(l.act, v); });
          } else if constexpr (std::is_same_v<T, DenseLayer>) {
            if (h.cols() != l.W.cols()) throw std::invalid_argument("dense layer: input width mismatch");
            Batch z = h * l.W.transpose();
            z.rowwise() += l.b.transpose();
            if (cache) cache->pre_activation = z;
            h = z.unaryExpr([&](double v) { return activate(l.act, v); });
          } else if constexpr (std::is_same_v<T, BatchNormState>) {
            h = detail::batch_norm_apply(l, h, mode, cache ? &cache->bn : nullptr);
          } else if constexpr (std::is_same_v<T, ReLULayer>) {
            h = h.cwiseMax(0.0);
          } else if constexpr (std::is_same_v<T, DropoutLayer>) {
            if (mode == Mode::Train && l.rate > 0.0) {
              if (!rng) throw std::invalid_argument("dropout in train mode needs a generator");
              Batch mask = detail::dropout_mask(l.rate, h.rows(), h.cols(), *rng);
              h = h.cwiseProduct(mask);
              if (cache) cache->mask = std::move(mask);
            }
          }
        },
        model.layers[li]);
  }
  pass.logits = std::move(h);
  pass.probabilities = softmax_rows(pass.logits);
  return pass;
}

inline Batch one_hot(std::span<const ClassLabel> labels) {
  Batch y = Batch::Zero(static_cast<Eigen::Index>(labels.size()), kNumClasses);
  for (std::size_t i = 0; i < labels.size(); ++i)
    y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(class_index(labels[i]))) = 1.0;
  return y;
}

inline double mean_cross_entropy(const Batch& probabilities, std::span<const ClassLabel> labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    total -= std::log(std::max(probabilities(static_cast<Eigen::Index>(i),
                                             static_cast<Eigen::Index>(class_index(labels[i]))),
                               kProbabilityFloor));
  return total / static_cast<double>(labels.size());
}

// Reverse-mode gradients of the mean cross-entropy for a pass produced by
// forward(..., keep_caches = true). Dropout masks and batch statistics are
// those of that pass.
inline Gradients backward(NetworkModel& model, const ForwardPass& pass, std::span<const ClassLabel> labels,
                          Mode mode = Mode::Train) {
  if (pass.caches.size() != model.layers.size()) throw std::invalid_argument("backward needs cached pass");
  Gradients grads = zero_gradients(model);
  // Locate each layer's first gradient slot.
  std::vector<std::size_t> slot(model.layers.size());
  std::size_t next = 0;
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    slot[li] = next;
    std::visit(
        [&](auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, SharedInputLayer> || std::is_same_v<T, DenseLayer> ||
                        std::is_same_v<T, BatchNormState>)
            next += 2;
        },
        model.layers[li]);
  }

  const double n = static_cast<double>(labels.size());
  Batch dh = (pass.probabilities - one_hot(labels)) / n;
  for (std::size_t li = model.layers.size(); li-- > 0;) {
    const auto& cache = pass.caches[li];
    std::visit(
        [&](auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, SharedInputLayer>) {
            const auto d = static_cast<Eigen::Index>(l.width());
            Batch dz = dh.cwiseProduct(cache.pre_activation.unaryExpr([&](double v) { return activate_slope(l.act, v); }));
            Batch dx = Batch::Zero(cache.input.rows(), d);
            auto& gw = grads[slot[li]];
            auto& gb = grads[slot[li] + 1];
            for (Eigen::Index i = 0; i < d; ++i) {
              const auto block = dz.middleCols(i * d, d);
              gw[static_cast<std::size_t>(i)] = block.cwiseProduct(cache.input).sum();
              gb[static_cast<std::size_t>(i)] = block.sum();
              dx += block * l.w(i);
            }
            dh = std::move(dx);
          } else if constexpr (std::is_same_v<T, DenseLayer>) {
            Batch dz = dh.cwiseProduct(cache.pre_activation.unaryExpr([&](double v) { return activate_slope(l.act, v); }));
            Eigen::Map<Eigen::MatrixXd> gW(grads[slot[li]].data(), l.W.rows(), l.W.cols());
            Eigen::Map<Vector> gb(grads[slot[li] + 1].data(), l.b.size());
            gW.noalias() = dz.transpose() * cache.input;
            gb = dz.colwise().sum().transpose();
            dh = dz * l.W;
          } else if constexpr (std::is_same_v<T, BatchNormState>) {
            Eigen::Map<Vector> gg(grads[slot[li]].data(), l.gamma.size());
            Eigen::Map<Vector> gbeta(grads[slot[li] + 1].data(), l.beta.size());
            if (mode == Mode::Infer) {
              Batch xhat(dh.rows(), dh.cols());
              for (Eigen::Index c = 0; c < dh.cols(); ++c) {
                const double inv = 1.0 / std::sqrt(l.running_var(c) + l.eps);
                xhat.col(c) = ((cache.input.col(c).array() - l.running_mean(c)) * inv).matrix();
                gg(c) = dh.col(c).dot(xhat.col(c));
                gbeta(c) = dh.col(c).sum();
                dh.col(c) *= l.gamma(c) * inv;
              }
              return;
            }
            const auto& xhat = cache.bn.xhat;
            const double m = static_cast<double>(dh.rows());
            for (Eigen::Index c = 0; c < dh.cols(); ++c) {
              gg(c) = dh.col(c).dot(xhat.col(c));
              gbeta(c) = dh.col(c).sum();
              const Vector dxhat = dh.col(c) * l.gamma(c);
              const double s1 = dxhat.sum();
              const double s2 = dxhat.dot(xhat.col(c));
              dh.col(c) = ((m * dxhat.array() - s1 - xhat.col(c).array() * s2) * (cache.bn.inv_std(c) / m)).matrix();
            }
          } else if constexpr (std::is_same_v<T, ReLULayer>) {
            dh = dh.cwiseProduct(cache.input.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
          } else if constexpr (std::is_same_v<T, DropoutLayer>) {
            if (cache.mask.size() > 0) dh = dh.cwiseProduct(cache.mask);
          }
        },
        model.layers[li]);
  }
  return grads;
}

// Convenience: forward in train mode with a dropout stream seeded by
// `dropout_seed`, then backward. Running statistics of `model` are updated.
inline Gradients backprop(NetworkModel& model, const Batch& x, std::span<const ClassLabel> labels,
                          std::uint64_t dropout_seed = 0, double* loss = nullptr) {
  if (x.rows() == 0) throw std::invalid_argument("backprop: empty batch");
  Rng rng(dropout_seed);
  const auto pass = forward(model, x, Mode::Train, &rng, true);
  if (loss) *loss = mean_cross_entropy(pass.probabilities, labels);
  return backward(model, pass, labels);
}

// ---------------------------------------------------------------------------
// Presets and training

enum class Preset : std::uint8_t { FNN1, DFNN3, DFNN_WS };

inline std::string_view preset_name(Preset p) {
  switch (p) {
    case Preset::FNN1: return "FNN1";
    case Preset::DFNN3: return "DFNN3";
    case Preset::DFNN_WS: return "DFNN_WS";
  }
  return "?";
}

inline Preset preset_from_name(std::string_view name) {
  if (name == "FNN1") return Preset::FNN1;
  if (name == "DFNN3") return Preset::DFNN3;
  if (name == "DFNN_WS") return Preset::DFNN_WS;
  throw std::invalid_argument("unknown network preset '" + std::string(name) + "'");
}

inline constexpr double kDefaultDropout = 0.1;

// He-uniform dense layer, zero bias.
inline DenseLayer make_dense(std::size_t in, std::size_t out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in));
  DenseLayer l;
  l.W.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
  for (Eigen::Index c = 0; c < l.W.cols(); ++c)
    for (Eigen::Index r = 0; r < l.W.rows(); ++r) l.W(r, c) = rng.uniform(-limit, limit);
  l.b = Vector::Zero(static_cast<Eigen::Index>(out));
  return l;
}

// FNN1:    dense 16 -> out 4
// DFNN3:   dense 16 -> 8 -> 4 -> out 4
// DFNN_WS: shared(d) -> flatten d^2 -> dense 16 -> 8 -> 4 -> out 4, every
//          hidden block being affine -> batch norm -> ReLU -> dropout.
inline NetworkModel build_preset(Preset preset, std::size_t input_width, std::uint64_t seed = 0) {
  if (!width_from_columns(input_width)) throw std::invalid_argument("input width must be 24, 4 or 2");
  Rng rng(seed);
  NetworkModel model;
  model.preset = std::string(preset_name(preset));
  model.input_width = input_width;
  auto& layers = model.layers;
  const std::array<std::size_t, 3> deep{16, 8, 4};
  switch (preset) {
    case Preset::FNN1:
      layers.emplace_back(make_dense(input_width, 16, rng));
      layers.emplace_back(ReLULayer{});
      layers.emplace_back(make_dense(16, kNumClasses, rng));
      break;
    case Preset::DFNN3: {
      std::size_t in = input_width;
      for (auto h : deep) {
        layers.emplace_back(make_dense(in, h, rng));
        layers.emplace_back(ReLULayer{});
        in = h;
      }
      layers.emplace_back(make_dense(in, kNumClasses, rng));
      break;
    }
    case Preset::DFNN_WS: {
      SharedInputLayer shared;
      const auto d = static_cast<Eigen::Index>(input_width);
      shared.w.resize(d);
      const double limit = std::sqrt(6.0);
      for (Eigen::Index i = 0; i < d; ++i) shared.w(i) = rng.uniform(-limit, limit);
      shared.b = Vector::Zero(d);
      layers.emplace_back(std::move(shared));
      layers.emplace_back(BatchNormState::identity(input_width * input_width));
      layers.emplace_back(ReLULayer{});
      layers.emplace_back(DropoutLayer{kDefaultDropout});
      std::size_t in = input_width * input_width;
      for (auto h : deep) {
        layers.emplace_back(make_dense(in, h, rng));
        layers.emplace_back(BatchNormState::identity(h));
        layers.emplace_back(ReLULayer{});
        layers.emplace_back(DropoutLayer{kDefaultDropout});
        in = h;
      }
      layers.emplace_back(make_dense(in, kNumClasses, rng));
      break;
    }
  }
  return model;
}

inline NetworkModel build_preset(std::string_view name, std::size_t input_width, std::uint64_t seed = 0) {
  return build_preset(preset_from_name(name), input_width, seed);
}

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 200;
  // Applied to every dropout layer of the model for this run.
  double dropout = kDefaultDropout;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
  }
};

inline Batch predict_proba(NetworkModel& model, const Matrix& x) {
  return forward(model, Batch(x), Mode::Infer).probabilities;
}

inline std::vector<ClassLabel> predict_all(NetworkModel& model, const Matrix& x) {
  const Batch p = predict_proba(model, x);
  std::vector<ClassLabel> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    std::array<double, kNumClasses> row;
    for (std::size_t k = 0; k < kNumClasses; ++k) row[k] = p(r, static_cast<Eigen::Index>(k));
    out[static_cast<std::size_t>(r)] = class_from_index(argmax_lowest(row));
  }
  return out;
}

// Mini-batch Adadelta on mean cross-entropy. Rows are reshuffled every epoch
// from a generator seeded by config.seed; a trailing batch of one row is
// folded into the previous batch so batch norm always sees >= 2 rows.
// Writes "epoch E loss L accuracy A" per epoch to `log` when given.
inline NetworkModel train_network(NetworkModel model, const Matrix& features, std::span<const ClassLabel> labels,
                                  const TrainConfig& config, std::ostream* log = nullptr) {
  config.validate();
  const auto n = static_cast<std::size_t>(features.rows());
  if (n == 0) throw TrainingError("empty training set");
  for (auto& layer : model.layers)
    if (auto* d = std::get_if<DropoutLayer>(&layer)) d->rate = config.dropout;

  Rng rng(config.seed);
  auto optimizer = AdadeltaState::for_model(model);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Batch xb;
  std::vector<ClassLabel> yb;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n;) {
      std::size_t stop = std::min(n, start + config.batch_size);
      if (n - stop == 1) stop = n;
      const auto rows = static_cast<Eigen::Index>(stop - start);
      xb.resize(rows, features.cols());
      yb.resize(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        xb.row(static_cast<Eigen::Index>(i - start)) = features.row(static_cast<Eigen::Index>(order[i]));
        yb[i - start] = labels[order[i]];
      }
      const auto pass = forward(model, xb, Mode::Train, &rng, true);
      loss_sum += mean_cross_entropy(pass.probabilities, yb) * static_cast<double>(rows);
      for (Eigen::Index r = 0; r < rows; ++r) {
        Eigen::Index best;
        pass.probabilities.row(r).maxCoeff(&best);
        correct += static_cast<std::size_t>(best) == class_index(yb[static_cast<std::size_t>(r)]);
      }
      const auto grads = backward(model, pass, yb);
      apply_deltas(model, adadelta_step(optimizer, grads));
      start = stop;
    }
    if (log)
      *log << "epoch " << epoch + 1 << " loss " << loss_sum / static_cast<double>(n) << " accuracy "
           << static_cast<double>(correct) / static_cast<double>(n) << '\n';
  }
  return model;
}

}  // namespace wfr::nn
