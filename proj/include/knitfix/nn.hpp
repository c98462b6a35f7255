#pragma once

// Minimal multilayer perceptron regressor: ReLU hidden layers, identity
// scalar output, squared-error loss, Adam minibatch training.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "knitfix/error.hpp"

namespace knitfix {

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;  // out x in, row-major
  std::vector<double> biases;   // out

  double& w(std::size_t o, std::size_t i) { return weights[o * in + i]; }
  double w(std::size_t o, std::size_t i) const { return weights[o * in + i]; }
};

struct MlpModel {
  std::vector<std::size_t> layer_sizes;  // (n_in, h_1, ..., h_L, 1)
  std::vector<DenseLayer> layers;
  std::uint64_t seed = 0;

  std::size_t input_size() const noexcept { return layer_sizes.empty() ? 0 : layer_sizes.front(); }
  std::vector<std::size_t> hidden_sizes() const {
    if (layer_sizes.size() < 2) return {};
    return {layer_sizes.begin() + 1, layer_sizes.end() - 1};
  }
  std::size_t parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.biases.size();
    return n;
  }
};

// Same shape as the model's parameters.
struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
};

struct TrainConfig {
  int max_iter = 10000;
  double learning_rate = 1e-3;
  std::size_t batch_size = 0;  // 0 = auto: min(200, n_samples)
  double tol = 1e-4;
  int patience = 10;
  std::uint64_t seed = 1;
};

struct TrainReport {
  int epochs_run = 0;
  std::vector<double> loss_history;
  double best_loss = std::numeric_limits<double>::infinity();
  bool converged = false;  // stopped by the tolerance rule before max_iter
};

struct TrainResult {
  MlpModel model;
  TrainReport report;
};

inline void validate_layer_sizes(std::span<const std::size_t> sizes) {
  if (sizes.size() < 2) throw DataError("layer sizes need at least input and output");
  if (sizes.back() != 1) throw DataError("output layer width must be 1");
  for (auto s : sizes)
    if (s < 1) throw DataError("layer widths must be positive");
}

inline void validate(const TrainConfig& cfg) {
  if (cfg.max_iter < 1) throw DataError("max_iter must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw DataError("learning_rate must be > 0");
  if (!(cfg.tol >= 0.0)) throw DataError("tol must be >= 0");
  if (cfg.patience < 1) throw DataError("patience must be >= 1");
}

/// Glorot-uniform weights, zero biases; deterministic in seed.
inline MlpModel mlp_new(std::span<const std::size_t> layer_sizes, std::uint64_t seed) {
  validate_layer_sizes(layer_sizes);
  MlpModel m;
  m.layer_sizes.assign(layer_sizes.begin(), layer_sizes.end());
  m.seed = seed;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    DenseLayer layer;
    layer.in = layer_sizes[l];
    layer.out = layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    layer.weights.resize(layer.in * layer.out);
    for (auto& w : layer.weights) w = dist(rng);
    layer.biases.assign(layer.out, 0.0);
    m.layers.push_back(std::move(layer));
  }
  return m;
}

inline MlpModel mlp_new(std::initializer_list<std::size_t> sizes, std::uint64_t seed) {
  return mlp_new(std::span<const std::size_t>(sizes.begin(), sizes.size()), seed);
}

inline bool all_finite(const MlpModel& m) {
  for (const auto& l : m.layers) {
    for (double w : l.weights)
      if (!std::isfinite(w)) return false;
    for (double b : l.biases)
      if (!std::isfinite(b)) return false;
  }
  return true;
}

namespace detail {

// Per-layer activations; act[0] is the input, act[l+1] the output of layer l.
struct Workspace {
  std::vector<std::vector<double>> act;
  std::vector<std::vector<double>> delta;

  explicit Workspace(const MlpModel& m) {
    act.resize(m.layer_sizes.size());
    delta.resize(m.layer_sizes.size());
    for (std::size_t i = 0; i < m.layer_sizes.size(); ++i) {
      act[i].resize(m.layer_sizes[i]);
      delta[i].resize(m.layer_sizes[i]);
    }
  }
};

inline double forward(const MlpModel& m, std::span<const double> x, Workspace& ws) {
  std::copy(x.begin(), x.end(), ws.act[0].begin());
  const std::size_t last = m.layers.size() - 1;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& layer = m.layers[l];
    const auto& a = ws.act[l];
    auto& z = ws.act[l + 1];
    for (std::size_t o = 0; o < layer.out; ++o) {
      double s = layer.biases[o];
      const double* row = layer.weights.data() + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) s += row[i] * a[i];
      z[o] = (l == last) ? s : (s > 0.0 ? s : 0.0);
    }
  }
  return ws.act.back()[0];
}

// Accumulates d(scale * (yhat - y)^2)/dparams into g after a forward pass.
inline void backward(const MlpModel& m, double dloss_dout, Workspace& ws, Gradients& g) {
  ws.delta.back()[0] = dloss_dout;
  for (std::size_t l = m.layers.size(); l-- > 0;) {
    const auto& layer = m.layers[l];
    const auto& a = ws.act[l];
    const auto& d = ws.delta[l + 1];
    auto& gw = g.weights[l];
    auto& gb = g.biases[l];
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double dv = d[o];
      if (dv == 0.0) continue;
      gb[o] += dv;
      double* grow = gw.data() + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) grow[i] += dv * a[i];
    }
    if (l == 0) break;
    auto& dprev = ws.delta[l];
    for (std::size_t i = 0; i < layer.in; ++i) {
      // ReLU'(0) = 0: a[i] holds relu(z), so a[i] > 0 iff z > 0.
      if (a[i] <= 0.0) {
        dprev[i] = 0.0;
        continue;
      }
      double s = 0.0;
      for (std::size_t o = 0; o < layer.out; ++o) s += layer.w(o, i) * d[o];
      dprev[i] = s;
    }
  }
}

inline Gradients zero_gradients(const MlpModel& m) {
  Gradients g;
  for (const auto& l : m.layers) {
    g.weights.emplace_back(l.weights.size(), 0.0);
    g.biases.emplace_back(l.biases.size(), 0.0);
  }
  return g;
}

inline void check_rows(const MlpModel& m, std::span<const double> x, std::size_t n) {
  if (m.layers.empty()) throw DataError("model has no layers");
  if (x.size() != n * m.input_size()) throw DataError("input dimension mismatch");
}

}  // namespace detail

inline double forward(const MlpModel& m, std::span<const double> x) {
  if (m.layers.empty() || x.size() != m.input_size())
    throw DataError("forward: expected " + std::to_string(m.input_size()) + " inputs, got " +
                    std::to_string(x.size()));
  detail::Workspace ws(m);
  return detail::forward(m, x, ws);
}

/// Predictions for n row-major samples.
inline std::vector<double> predict(const MlpModel& m, std::span<const double> x_rows, std::size_t n) {
  detail::check_rows(m, x_rows, n);
  detail::Workspace ws(m);
  std::vector<double> out(n);
  const std::size_t d = m.input_size();
  for (std::size_t r = 0; r < n; ++r) out[r] = detail::forward(m, x_rows.subspan(r * d, d), ws);
  return out;
}

/// Mean squared error over n row-major samples.
inline double loss(const MlpModel& m, std::span<const double> x_rows, std::span<const double> y) {
  if (y.empty()) throw DataError("loss: empty set");
  detail::check_rows(m, x_rows, y.size());
  detail::Workspace ws(m);
  const std::size_t d = m.input_size();
  double acc = 0.0;
  for (std::size_t r = 0; r < y.size(); ++r) {
    const double e = detail::forward(m, x_rows.subspan(r * d, d), ws) - y[r];
    acc += e * e;
  }
  return acc / static_cast<double>(y.size());
}

/// Exact gradient of the mean squared error over the batch.
inline Gradients gradient(const MlpModel& m, std::span<const double> x_rows, std::span<const double> y) {
  if (y.empty()) throw DataError("gradient: empty batch");
  detail::check_rows(m, x_rows, y.size());
  detail::Workspace ws(m);
  Gradients g = detail::zero_gradients(m);
  const std::size_t d = m.input_size();
  const double scale = 2.0 / static_cast<double>(y.size());
  for (std::size_t r = 0; r < y.size(); ++r) {
    const double yhat = detail::forward(m, x_rows.subspan(r * d, d), ws);
    detail::backward(m, scale * (yhat - y[r]), ws, g);
  }
  return g;
}

/// Adam minibatch training with per-epoch shuffling. Returns the parameters
/// that achieved the best epoch loss.
inline TrainResult train(MlpModel model, std::span<const double> x_rows, std::span<const double> y,
                         const TrainConfig& cfg) {
  validate(cfg);
  const std::size_t n = y.size();
  if (n == 0) throw DataError("train: empty data");
  detail::check_rows(model, x_rows, n);

  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  const std::size_t batch = cfg.batch_size == 0 ? std::min<std::size_t>(200, n) : std::min(cfg.batch_size, n);
  const std::size_t d = model.input_size();

  Gradients mom1 = detail::zero_gradients(model);
  Gradients mom2 = detail::zero_gradients(model);
  Gradients grad = detail::zero_gradients(model);
  detail::Workspace ws(model);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(cfg.seed);

  const double initial_loss = loss(model, x_rows, y);
  if (!std::isfinite(initial_loss)) throw NumericError("train: non-finite initial loss");
  const double blowup = 1e6 * std::max(initial_loss, 1e-12);

  TrainResult result{model, {}};
  auto& rep = result.report;
  rep.loss_history.reserve(static_cast<std::size_t>(std::min(cfg.max_iter, 100000)));
  int stale = 0;
  double pow1 = 1.0, pow2 = 1.0;

  for (int epoch = 0; epoch < cfg.max_iter; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(start + batch, n);
      const double bs = static_cast<double>(end - start);
      for (auto& v : grad.weights) std::fill(v.begin(), v.end(), 0.0);
      for (auto& v : grad.biases) std::fill(v.begin(), v.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t r = order[k];
        const double e = detail::forward(model, x_rows.subspan(r * d, d), ws) - y[r];
        batch_loss += e * e;
        detail::backward(model, 2.0 * e / bs, ws, grad);
      }
      epoch_loss += batch_loss;

      pow1 *= beta1;
      pow2 *= beta2;
      const double step = cfg.learning_rate * std::sqrt(1.0 - pow2) / (1.0 - pow1);
      auto update = [&](std::vector<double>& p, std::vector<double>& g, std::vector<double>& m1,
                        std::vector<double>& m2) {
        for (std::size_t i = 0; i < p.size(); ++i) {
          m1[i] = beta1 * m1[i] + (1.0 - beta1) * g[i];
          m2[i] = beta2 * m2[i] + (1.0 - beta2) * g[i] * g[i];
          p[i] -= step * m1[i] / (std::sqrt(m2[i]) + eps);
        }
      };
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        update(model.layers[l].weights, grad.weights[l], mom1.weights[l], mom2.weights[l]);
        update(model.layers[l].biases, grad.biases[l], mom1.biases[l], mom2.biases[l]);
      }
    }
    epoch_loss /= static_cast<double>(n);
    rep.loss_history.push_back(epoch_loss);
    rep.epochs_run = epoch + 1;

    if (!std::isfinite(epoch_loss) || epoch_loss > blowup || !all_finite(model))
      throw NumericError("train: diverged at epoch " + std::to_string(epoch + 1) + " (loss " +
                         std::to_string(epoch_loss) + ", initial " + std::to_string(initial_loss) + ")");

    if (epoch_loss > rep.best_loss - cfg.tol)
      ++stale;
    else
      stale = 0;
    if (epoch_loss < rep.best_loss) {
      rep.best_loss = epoch_loss;
      result.model = model;
    }
    if (stale >= cfg.patience) {
      rep.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace knitfix
