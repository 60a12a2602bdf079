#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "genis/core.hpp"

namespace genis {

enum class Activation { relu, tanh_act, sigmoid, softmax, linear };

struct LayerSpec {
  enum class Kind { dense, lstm_cell };
  Kind kind = Kind::dense;
  std::size_t units = 0;
  Activation activation = Activation::relu;
};

inline LayerSpec dense_layer(std::size_t units, Activation act = Activation::relu) {
  return LayerSpec{LayerSpec::Kind::dense, units, act};
}

inline LayerSpec lstm_layer(std::size_t units) {
  return LayerSpec{LayerSpec::Kind::lstm_cell, units, Activation::tanh_act};
}

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct NetConfig {
  std::vector<LayerSpec> layers;  // hidden layers; the output layer is derived from n_classes
  double dropout = 0.2;
  AdamConfig adam;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 30;
  std::size_t patience = 3;
  std::uint64_t seed = 0;
};

// Two-hidden-layer comparison architectures.
inline NetConfig mlp_config(std::size_t first_units, std::size_t second_units) {
  NetConfig c;
  c.layers = {dense_layer(first_units), dense_layer(second_units)};
  return c;
}

inline NetConfig lstm_config(std::size_t first_units, std::size_t second_units) {
  NetConfig c;
  c.layers = {lstm_layer(first_units), dense_layer(second_units)};
  return c;
}

struct NetworkModel {
  struct Layer {
    LayerSpec spec;
    Matrix w;                // dense: in x units; lstm: in x 4*units (gate order i,f,g,o)
    Matrix wh;               // lstm recurrent kernel, units x 4*units (inert for one step)
    std::vector<double> b;   // dense: units; lstm: 4*units
  };

  NetConfig config;
  std::size_t input_dim = 0;
  std::size_t n_classes = 0;
  std::vector<Layer> layers;  // hidden layers + output layer
  std::vector<std::string> feature_names;
  std::vector<std::string> class_names;

  std::size_t output_width() const { return n_classes == 2 ? 1 : n_classes; }
};

// ---------------------------------------------------------------------------
// Small dense kernels
// ---------------------------------------------------------------------------

namespace netmath {

inline void matmul(const Matrix& a, const Matrix& b, Matrix& c) {
  c = Matrix(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.data.data() + i * a.cols;
    double* crow = c.data.data() + i * c.cols;
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double v = arow[k];
      if (v == 0.0) continue;
      const double* brow = b.data.data() + k * b.cols;
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += v * brow[j];
    }
  }
}

// c = a^T * b
inline void matmul_ta(const Matrix& a, const Matrix& b, Matrix& c) {
  c = Matrix(a.cols, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.data.data() + i * a.cols;
    const double* brow = b.data.data() + i * b.cols;
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double v = arow[k];
      if (v == 0.0) continue;
      double* crow = c.data.data() + k * c.cols;
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += v * brow[j];
    }
  }
}

// c = a * b^T
inline void matmul_tb(const Matrix& a, const Matrix& b, Matrix& c) {
  c = Matrix(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.data.data() + i * a.cols;
    double* crow = c.data.data() + i * c.cols;
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* brow = b.data.data() + j * b.cols;
      double dot = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) dot += arow[k] * brow[k];
      crow[j] = dot;
    }
  }
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace netmath

// ---------------------------------------------------------------------------
// Initialization: uniform Glorot bounds sqrt(6 / (fan_in + fan_out)) per
// matrix, zero biases. Draw order is fixed (layer by layer, row-major).
// ---------------------------------------------------------------------------

inline NetworkModel init_network(const NetConfig& config, std::size_t input_dim,
                                 std::size_t n_classes, std::uint64_t seed) {
  require(input_dim > 0, "zero input dimension");
  require(n_classes >= 2, "need at least 2 classes");
  require(config.dropout >= 0.0 && config.dropout < 1.0, "dropout must lie in [0,1)");
  require(config.patience >= 1, "patience must be >= 1");
  require(config.batch_size >= 1, "batch_size must be >= 1");
  for (const auto& spec : config.layers) require(spec.units > 0, "layer units must be positive");

  NetworkModel model;
  model.config = config;
  model.config.seed = seed;
  model.input_dim = input_dim;
  model.n_classes = n_classes;

  Rng rng(derive_seed(seed, 0x1417));
  auto fill_glorot = [&rng](Matrix& m, std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : m.data) v = rng.uniform(-limit, limit);
  };

  std::size_t in = input_dim;
  for (const auto& spec : config.layers) {
    NetworkModel::Layer layer;
    layer.spec = spec;
    if (spec.kind == LayerSpec::Kind::dense) {
      layer.w = Matrix(in, spec.units);
      fill_glorot(layer.w, in, spec.units);
      layer.b.assign(spec.units, 0.0);
    } else {
      layer.w = Matrix(in, 4 * spec.units);
      fill_glorot(layer.w, in, 4 * spec.units);
      layer.wh = Matrix(spec.units, 4 * spec.units);
      fill_glorot(layer.wh, spec.units, 4 * spec.units);
      layer.b.assign(4 * spec.units, 0.0);
    }
    model.layers.push_back(std::move(layer));
    in = spec.units;
  }

  NetworkModel::Layer out;
  out.spec = dense_layer(model.output_width(),
                         n_classes == 2 ? Activation::sigmoid : Activation::softmax);
  out.w = Matrix(in, out.spec.units);
  fill_glorot(out.w, in, out.spec.units);
  out.b.assign(out.spec.units, 0.0);
  model.layers.push_back(std::move(out));
  return model;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

namespace detail_net {

struct LayerCache {
  Matrix input;          // activations entering the layer
  Matrix activated;      // layer output before dropout
  Matrix gates;          // lstm: activated gates (B x 4u)
  Matrix cell;           // lstm: c
  Matrix cell_tanh;      // lstm: tanh(c)
  Matrix dropout_mask;   // kept entries hold 1/(1-p); zeros dropped
};

struct ForwardPass {
  std::vector<LayerCache> layers;
  Matrix logits;  // pre-activation of the output layer
  Matrix probs;
};

inline void apply_activation(Matrix& z, Activation act) {
  switch (act) {
    case Activation::relu:
      for (double& v : z.data) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::tanh_act:
      for (double& v : z.data) v = std::tanh(v);
      break;
    case Activation::sigmoid:
      for (double& v : z.data) v = netmath::sigmoid(v);
      break;
    case Activation::softmax:
      for (std::size_t r = 0; r < z.rows; ++r) {
        auto row = z.row(r);
        double m = row[0];
        for (double v : row) m = std::max(m, v);
        double sum = 0.0;
        for (double& v : row) {
          v = std::exp(v - m);
          sum += v;
        }
        for (double& v : row) v /= sum;
      }
      break;
    case Activation::linear:
      break;
  }
}

inline ForwardPass run_forward(const NetworkModel& model, const Matrix& x, bool training,
                               std::uint64_t dropout_seed) {
  require(x.cols == model.input_dim, "input dimension mismatch");
  ForwardPass pass;
  pass.layers.resize(model.layers.size());
  Rng drop_rng(derive_seed(dropout_seed, 0xd0d0));
  const double p = model.config.dropout;

  Matrix current = x;
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    const auto& layer = model.layers[li];
    LayerCache& cache = pass.layers[li];
    cache.input = current;
    const bool is_output = (li + 1 == model.layers.size());

    Matrix z;
    netmath::matmul(current, layer.w, z);
    for (std::size_t r = 0; r < z.rows; ++r) {
      auto row = z.row(r);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += layer.b[j];
    }

    if (layer.spec.kind == LayerSpec::Kind::lstm_cell) {
      // one step from zero state: the recurrent kernel contributes nothing
      const std::size_t u = layer.spec.units;
      cache.gates = z;
      Matrix h(z.rows, u);
      cache.cell = Matrix(z.rows, u);
      cache.cell_tanh = Matrix(z.rows, u);
      for (std::size_t r = 0; r < z.rows; ++r) {
        auto g = cache.gates.row(r);
        for (std::size_t j = 0; j < u; ++j) {
          const double gi = netmath::sigmoid(g[j]);
          const double gf = netmath::sigmoid(g[u + j]);
          const double gg = std::tanh(g[2 * u + j]);
          const double go = netmath::sigmoid(g[3 * u + j]);
          g[j] = gi;
          g[u + j] = gf;
          g[2 * u + j] = gg;
          g[3 * u + j] = go;
          const double c = gi * gg;  // f * c0 vanishes
          const double t = std::tanh(c);
          cache.cell.at(r, j) = c;
          cache.cell_tanh.at(r, j) = t;
          h.at(r, j) = go * t;
        }
      }
      cache.activated = std::move(h);
    } else if (is_output) {
      pass.logits = z;
      apply_activation(z, layer.spec.activation);
      pass.probs = z;
      cache.activated = pass.probs;
      break;
    } else {
      apply_activation(z, layer.spec.activation);
      cache.activated = std::move(z);
    }

    current = cache.activated;
    if (training && p > 0.0) {
      cache.dropout_mask = Matrix(current.rows, current.cols);
      const double scale = 1.0 / (1.0 - p);
      for (std::size_t i = 0; i < current.data.size(); ++i) {
        const double keep = drop_rng.next_double() >= p ? scale : 0.0;
        cache.dropout_mask.data[i] = keep;
        current.data[i] *= keep;
      }
    }
  }
  return pass;
}

struct LayerGrad {
  Matrix dw;
  Matrix dwh;
  std::vector<double> db;
};

// Cross-entropy loss; binary nets use a single sigmoid output.
inline double loss_from_logits(const Matrix& logits, const std::vector<int>& y,
                               std::size_t n_classes) {
  double loss = 0.0;
  const std::size_t n = logits.rows;
  if (n_classes == 2) {
    for (std::size_t r = 0; r < n; ++r) {
      const double z = logits.at(r, 0);
      const double t = static_cast<double>(y[r]);
      loss += std::max(z, 0.0) - t * z + std::log1p(std::exp(-std::abs(z)));
    }
  } else {
    for (std::size_t r = 0; r < n; ++r) {
      auto row = logits.row(r);
      double m = row[0];
      for (double v : row) m = std::max(m, v);
      double sum = 0.0;
      for (double v : row) sum += std::exp(v - m);
      loss += -(row[static_cast<std::size_t>(y[r])] - m - std::log(sum));
    }
  }
  return loss / static_cast<double>(n);
}

// Backward pass from an explicit d(loss)/d(logits).
inline std::vector<LayerGrad> run_backward_from_delta(const NetworkModel& model,
                                                      const ForwardPass& pass, Matrix delta) {
  const std::size_t n = pass.probs.rows;
  (void)n;
  std::vector<LayerGrad> grads(model.layers.size());

  for (std::size_t li = model.layers.size(); li-- > 0;) {
    const auto& layer = model.layers[li];
    const LayerCache& cache = pass.layers[li];
    LayerGrad& g = grads[li];
    const bool is_output = (li + 1 == model.layers.size());

    if (!is_output && cache.dropout_mask.rows > 0) {
      for (std::size_t i = 0; i < delta.data.size(); ++i) delta.data[i] *= cache.dropout_mask.data[i];
    }

    Matrix dz;
    if (layer.spec.kind == LayerSpec::Kind::lstm_cell) {
      const std::size_t u = layer.spec.units;
      dz = Matrix(n, 4 * u);
      for (std::size_t r = 0; r < n; ++r) {
        auto gates = cache.gates.row(r);
        auto d = delta.row(r);
        for (std::size_t j = 0; j < u; ++j) {
          const double gi = gates[j];
          const double gg = gates[2 * u + j];
          const double go = gates[3 * u + j];
          const double t = cache.cell_tanh.at(r, j);
          const double dh = d[j];
          const double dout = dh * t;
          const double dc = dh * go * (1.0 - t * t);
          const double di = dc * gg;
          const double dg = dc * gi;
          dz.at(r, j) = di * gi * (1.0 - gi);
          dz.at(r, u + j) = 0.0;  // forget gate sees c0 = 0
          dz.at(r, 2 * u + j) = dg * (1.0 - gg * gg);
          dz.at(r, 3 * u + j) = dout * go * (1.0 - go);
        }
      }
      g.dwh = Matrix(u, 4 * u);  // h0 = 0, so the recurrent kernel gradient vanishes
    } else if (is_output) {
      dz = std::move(delta);
    } else {
      // hidden dense: relu or tanh
      dz = std::move(delta);
      if (layer.spec.activation == Activation::relu) {
        for (std::size_t i = 0; i < dz.data.size(); ++i) {
          if (cache.activated.data[i] <= 0.0) dz.data[i] = 0.0;
        }
      } else if (layer.spec.activation == Activation::tanh_act) {
        for (std::size_t i = 0; i < dz.data.size(); ++i) {
          const double a = cache.activated.data[i];
          dz.data[i] *= 1.0 - a * a;
        }
      } else if (layer.spec.activation == Activation::sigmoid) {
        for (std::size_t i = 0; i < dz.data.size(); ++i) {
          const double a = cache.activated.data[i];
          dz.data[i] *= a * (1.0 - a);
        }
      }
    }

    netmath::matmul_ta(cache.input, dz, g.dw);
    g.db.assign(dz.cols, 0.0);
    for (std::size_t r = 0; r < dz.rows; ++r) {
      auto row = dz.row(r);
      for (std::size_t j = 0; j < dz.cols; ++j) g.db[j] += row[j];
    }
    if (li > 0) {
      Matrix next_delta;
      netmath::matmul_tb(dz, layer.w, next_delta);
      delta = std::move(next_delta);
    }
  }
  return grads;
}

inline std::vector<LayerGrad> run_backward(const NetworkModel& model, const ForwardPass& pass,
                                           const std::vector<int>& y) {
  const std::size_t n = pass.probs.rows;
  // d(loss)/d(logits) for mean cross-entropy
  Matrix delta = pass.probs;
  if (model.n_classes == 2) {
    for (std::size_t r = 0; r < n; ++r) {
      delta.at(r, 0) = (delta.at(r, 0) - static_cast<double>(y[r])) / static_cast<double>(n);
    }
  } else {
    for (std::size_t r = 0; r < n; ++r) {
      auto row = delta.row(r);
      row[static_cast<std::size_t>(y[r])] -= 1.0;
      for (double& v : row) v /= static_cast<double>(n);
    }
  }
  return run_backward_from_delta(model, pass, std::move(delta));
}

}  // namespace detail_net

// Class-probability forward pass. Dropout masks are drawn only when
// training=true; pass the same dropout_seed to reproduce them.
inline Matrix forward(const NetworkModel& model, const Matrix& x, bool training = false,
                      std::uint64_t dropout_seed = 0) {
  auto pass = detail_net::run_forward(model, x, training, dropout_seed);
  if (model.n_classes == 2) {
    Matrix out(x.rows, 2);
    for (std::size_t r = 0; r < x.rows; ++r) {
      const double p = pass.probs.at(r, 0);
      out.at(r, 0) = 1.0 - p;
      out.at(r, 1) = p;
    }
    return out;
  }
  return pass.probs;
}

// ---------------------------------------------------------------------------
// Early stopping on validation loss, best-weights restore.
// ---------------------------------------------------------------------------

struct EarlyStopper {
  std::size_t patience = 3;
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_index = 0;
  std::size_t bad_epochs = 0;
  std::size_t observed = 0;

  // returns false when training should stop
  bool observe(double validation_loss) {
    const std::size_t idx = observed++;
    if (validation_loss < best) {
      best = validation_loss;
      best_index = idx;
      bad_epochs = 0;
      return true;
    }
    ++bad_epochs;
    return bad_epochs < patience;
  }
};

struct TrainLog {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> val_accuracy;
  std::vector<double> epoch_seconds;
  std::size_t best_epoch = 0;

  double mean_epoch_seconds() const { return mean(epoch_seconds); }
};

namespace detail_net {

struct AdamState {
  std::vector<LayerGrad> m;
  std::vector<LayerGrad> v;
  std::size_t t = 0;
};

inline void adam_tensor(std::vector<double>& w, const std::vector<double>& g,
                        std::vector<double>& m, std::vector<double>& v, const AdamConfig& cfg,
                        double bc1, double bc2) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    w[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
}

inline void adam_step(NetworkModel& model, const std::vector<LayerGrad>& grads, AdamState& state,
                      const AdamConfig& cfg) {
  if (state.m.empty()) {
    state.m.resize(grads.size());
    state.v.resize(grads.size());
    for (std::size_t i = 0; i < grads.size(); ++i) {
      state.m[i].dw = Matrix(grads[i].dw.rows, grads[i].dw.cols);
      state.v[i].dw = Matrix(grads[i].dw.rows, grads[i].dw.cols);
      state.m[i].dwh = Matrix(grads[i].dwh.rows, grads[i].dwh.cols);
      state.v[i].dwh = Matrix(grads[i].dwh.rows, grads[i].dwh.cols);
      state.m[i].db.assign(grads[i].db.size(), 0.0);
      state.v[i].db.assign(grads[i].db.size(), 0.0);
    }
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    adam_tensor(model.layers[i].w.data, grads[i].dw.data, state.m[i].dw.data, state.v[i].dw.data,
                cfg, bc1, bc2);
    if (!grads[i].dwh.data.empty()) {
      adam_tensor(model.layers[i].wh.data, grads[i].dwh.data, state.m[i].dwh.data,
                  state.v[i].dwh.data, cfg, bc1, bc2);
    }
    adam_tensor(model.layers[i].b, grads[i].db, state.m[i].db, state.v[i].db, cfg, bc1, bc2);
  }
}

inline std::vector<Matrix> snapshot_weights(const NetworkModel& model) {
  std::vector<Matrix> snap;
  for (const auto& layer : model.layers) {
    snap.push_back(layer.w);
    snap.push_back(layer.wh);
    Matrix b(1, layer.b.size());
    b.data = layer.b;
    snap.push_back(b);
  }
  return snap;
}

inline void restore_weights(NetworkModel& model, const std::vector<Matrix>& snap) {
  std::size_t i = 0;
  for (auto& layer : model.layers) {
    layer.w = snap[i++];
    layer.wh = snap[i++];
    layer.b = snap[i++].data;
  }
}

}  // namespace detail_net

// Mini-batch Adam training with best-weights early stopping on validation
// loss. Single-threaded by design so fixed seeds give identical logs.
inline TrainLog train(NetworkModel& model, const Matrix& x_train, const std::vector<int>& y_train,
                      const Matrix& x_val, const std::vector<int>& y_val) {
  require(x_val.rows > 0, "empty validation set");
  require(x_train.rows == y_train.size() && x_val.rows == y_val.size(),
          "row/label count mismatch");
  const NetConfig& cfg = model.config;

  TrainLog log;
  EarlyStopper stopper{cfg.patience};
  detail_net::AdamState adam;
  std::vector<Matrix> best_snapshot = detail_net::snapshot_weights(model);
  Rng shuffle_rng(derive_seed(cfg.seed, 0x54aff1e));

  std::vector<std::size_t> order(x_train.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});

  auto evaluate = [&](const Matrix& x, const std::vector<int>& y, double* accuracy) {
    auto pass = detail_net::run_forward(model, x, false, 0);
    if (accuracy) {
      std::size_t correct = 0;
      for (std::size_t r = 0; r < x.rows; ++r) {
        int predicted;
        if (model.n_classes == 2) {
          predicted = pass.probs.at(r, 0) >= 0.5 ? 1 : 0;
        } else {
          auto row = pass.probs.row(r);
          predicted = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        }
        correct += predicted == y[r] ? 1 : 0;
      }
      *accuracy = static_cast<double>(correct) / static_cast<double>(x.rows);
    }
    return detail_net::loss_from_logits(pass.logits, y, model.n_classes);
  };

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Stopwatch watch;
    shuffle_rng.shuffle(order);
    double running_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      Matrix xb(stop - start, x_train.cols);
      std::vector<int> yb(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        auto src = x_train.row(order[i]);
        std::copy(src.begin(), src.end(), xb.row(i - start).begin());
        yb[i - start] = y_train[order[i]];
      }
      const std::uint64_t drop_seed = derive_seed(cfg.seed, 0xba7c4, epoch, n_batches);
      auto pass = detail_net::run_forward(model, xb, true, drop_seed);
      running_loss += detail_net::loss_from_logits(pass.logits, yb, model.n_classes);
      auto grads = detail_net::run_backward(model, pass, yb);
      detail_net::adam_step(model, grads, adam, cfg.adam);
      ++n_batches;
    }

    double val_acc = 0.0;
    const double val_loss = evaluate(x_val, y_val, &val_acc);
    log.train_loss.push_back(running_loss / static_cast<double>(n_batches));
    log.val_loss.push_back(val_loss);
    log.val_accuracy.push_back(val_acc);
    log.epoch_seconds.push_back(watch.seconds());

    const bool keep_going = stopper.observe(val_loss);
    if (stopper.bad_epochs == 0) best_snapshot = detail_net::snapshot_weights(model);
    if (!keep_going) break;
  }

  detail_net::restore_weights(model, best_snapshot);
  log.best_epoch = stopper.best_index;
  for (const auto& layer : model.layers) {
    require(all_finite(layer.w.data) && all_finite(layer.wh.data) && all_finite(layer.b),
            "training produced non-finite weights");
  }
  return log;
}

// ---------------------------------------------------------------------------
// Backpropagation oracle: central finite differences over every weight.
// Relative error uses |n - a| / max(|n|, |a|, 1e-6); the floor keeps
// finite-difference noise on identically-zero gradients (recurrent kernel,
// forget gates) from registering as error.
// ---------------------------------------------------------------------------

inline double numeric_gradient_check(NetworkModel& model, const Matrix& x,
                                     const std::vector<int>& y, double epsilon = 1e-5,
                                     bool training = false, std::uint64_t dropout_seed = 1) {
  auto loss_at = [&]() {
    auto pass = detail_net::run_forward(model, x, training, dropout_seed);
    return detail_net::loss_from_logits(pass.logits, y, model.n_classes);
  };
  auto pass = detail_net::run_forward(model, x, training, dropout_seed);
  auto grads = detail_net::run_backward(model, pass, y);

  double max_rel = 0.0;
  auto check_tensor = [&](std::vector<double>& w, const std::vector<double>& analytic) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double saved = w[i];
      w[i] = saved + epsilon;
      const double up = loss_at();
      w[i] = saved - epsilon;
      const double down = loss_at();
      w[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double rel = std::abs(numeric - analytic[i]) /
                         std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
      max_rel = std::max(max_rel, rel);
    }
  };
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    check_tensor(model.layers[li].w.data, grads[li].dw.data);
    if (!model.layers[li].wh.data.empty()) {
      check_tensor(model.layers[li].wh.data, grads[li].dwh.data);
    }
    check_tensor(model.layers[li].b, grads[li].db);
  }
  return max_rel;
}

// Regression probe: with linear outputs and targets fixed at the current
// outputs, the residual is zero and every gradient must vanish. Returns the
// L2 norm over all parameter gradients.
inline double zero_residual_gradient_norm(const NetworkModel& model, const Matrix& x) {
  auto pass = detail_net::run_forward(model, x, false, 0);
  const Matrix zero_delta(pass.logits.rows, pass.logits.cols);
  const auto grads = detail_net::run_backward_from_delta(model, pass, zero_delta);
  double acc = 0.0;
  for (const auto& g : grads) {
    for (double v : g.dw.data) acc += v * v;
    for (double v : g.dwh.data) acc += v * v;
    for (double v : g.db) acc += v * v;
  }
  return std::sqrt(acc);
}

}  // namespace genis
