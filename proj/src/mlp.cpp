#include "oodreg/mlp.hpp"

#include <cmath>
#include <random>
#include <string>

#include "oodreg/errors.hpp"

namespace oodreg {

bool all_finite(const Matrix& m) { return m.allFinite(); }

void MlpModel::validate() const {
  if (layer_dims.size() < 2) {
    throw ConfigError("mlp: need at least two layer dims (input and output)");
  }
  for (std::size_t d : layer_dims) {
    if (d == 0) throw ConfigError("mlp: layer dims must be >= 1");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("mlp: dropout_rate must lie in [0, 1)");
  }
  const std::size_t layers = layer_dims.size() - 1;
  if (weights.size() != layers || biases.size() != layers) {
    throw_shape_error("mlp: parameter layer count", layers, weights.size());
  }
  for (std::size_t l = 0; l < layers; ++l) {
    const auto out = static_cast<Eigen::Index>(layer_dims[l + 1]);
    const auto in = static_cast<Eigen::Index>(layer_dims[l]);
    if (weights[l].rows() != out || weights[l].cols() != in) {
      throw ConfigError("mlp: weight " + std::to_string(l) + " has shape " +
                        std::to_string(weights[l].rows()) + "x" +
                        std::to_string(weights[l].cols()) + ", expected " +
                        std::to_string(out) + "x" + std::to_string(in));
    }
    if (biases[l].size() != out) {
      throw_shape_error("mlp: bias " + std::to_string(l) + " length", layer_dims[l + 1],
                        static_cast<std::size_t>(biases[l].size()));
    }
    if (!weights[l].allFinite() || !biases[l].allFinite()) {
      throw ConfigError("mlp: non-finite parameter in layer " + std::to_string(l));
    }
  }
}

MlpModel init_mlp(std::span<const std::size_t> layer_dims, double dropout_rate,
                  std::uint64_t seed) {
  MlpModel model;
  model.layer_dims.assign(layer_dims.begin(), layer_dims.end());
  model.dropout_rate = dropout_rate;
  if (model.layer_dims.size() < 2) {
    throw ConfigError("init_mlp: need at least two layer dims (input and output)");
  }
  for (std::size_t d : model.layer_dims) {
    if (d == 0) throw ConfigError("init_mlp: layer dims must be >= 1");
  }

  std::mt19937_64 gen(seed);
  for (std::size_t l = 0; l + 1 < model.layer_dims.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(model.layer_dims[l]);
    const auto out = static_cast<Eigen::Index>(model.layer_dims[l + 1]);
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(in)));
    Matrix w(out, in);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = normal(gen);
    model.weights.push_back(std::move(w));
    model.biases.push_back(Vector::Zero(out));
  }
  model.validate();
  return model;
}

ForwardResult forward(const MlpModel& model, const Matrix& inputs, ForwardMode mode,
                      std::uint64_t seed) {
  if (static_cast<std::size_t>(inputs.cols()) != model.input_dim()) {
    throw_shape_error("forward: input columns", model.input_dim(),
                      static_cast<std::size_t>(inputs.cols()));
  }
  const bool dropout = mode != ForwardMode::eval && model.dropout_rate > 0.0;
  const double keep = 1.0 - model.dropout_rate;
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  ForwardResult result;
  ForwardTrace& trace = result.trace;
  const std::size_t layers = model.num_layers();
  trace.layer_inputs.reserve(layers);
  trace.pre_activations.reserve(layers);

  Matrix h = inputs;
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix a = h * model.weights[l].transpose();
    a.rowwise() += model.biases[l].transpose();
    trace.layer_inputs.push_back(std::move(h));
    if (l + 1 == layers) {
      result.logits = a;
      trace.pre_activations.push_back(std::move(a));
      break;
    }
    h = a.cwiseMax(0.0);
    trace.pre_activations.push_back(std::move(a));
    if (dropout) {
      Matrix mask(h.rows(), h.cols());
      for (Eigen::Index i = 0; i < mask.size(); ++i) {
        mask.data()[i] = unit(gen) < model.dropout_rate ? 0.0 : 1.0 / keep;
      }
      h = h.cwiseProduct(mask);
      trace.masks.push_back(std::move(mask));
    }
  }
  return result;
}

Matrix predict_logits(const MlpModel& model, const Matrix& inputs) {
  return forward(model, inputs, ForwardMode::eval).logits;
}

Matrix softmax(const Matrix& logits) {
  if (!logits.allFinite()) throw ConfigError("softmax: non-finite logits");
  Matrix probs(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double shift = logits.row(i).maxCoeff();
    double total = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      const double e = std::exp(logits(i, c) - shift);
      probs(i, c) = e;
      total += e;
    }
    probs.row(i) /= total;
  }
  return probs;
}

Gradients Gradients::zeros_like(const MlpModel& model) {
  Gradients g;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    g.weights.push_back(Matrix::Zero(model.weights[l].rows(), model.weights[l].cols()));
    g.biases.push_back(Vector::Zero(model.biases[l].size()));
  }
  return g;
}

Gradients& Gradients::operator+=(const Gradients& other) {
  if (other.weights.size() != weights.size()) {
    throw_shape_error("gradients: layer count", weights.size(), other.weights.size());
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += other.weights[l];
    biases[l] += other.biases[l];
  }
  return *this;
}

bool Gradients::all_finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
  }
  return true;
}

Gradients backward(const MlpModel& model, const ForwardTrace& trace, const Matrix& d_logits) {
  const std::size_t layers = model.num_layers();
  if (trace.layer_inputs.size() != layers || trace.pre_activations.size() != layers) {
    throw_shape_error("backward: trace layer count", layers, trace.layer_inputs.size());
  }
  if (trace.has_masks() && trace.masks.size() + 1 != layers) {
    throw_shape_error("backward: dropout mask count", layers - 1, trace.masks.size());
  }
  const Matrix& logits = trace.pre_activations.back();
  if (d_logits.rows() != logits.rows() || d_logits.cols() != logits.cols()) {
    throw ConfigError("backward: d_logits shape does not match the traced logits");
  }
  for (std::size_t l = 0; l < layers; ++l) {
    if (static_cast<std::size_t>(trace.layer_inputs[l].cols()) != model.layer_dims[l]) {
      throw_shape_error("backward: traced input width of layer " + std::to_string(l),
                        model.layer_dims[l],
                        static_cast<std::size_t>(trace.layer_inputs[l].cols()));
    }
  }

  Gradients grads;
  grads.weights.resize(layers);
  grads.biases.resize(layers);
  Matrix delta = d_logits;
  for (std::size_t l = layers; l-- > 0;) {
    grads.weights[l] = delta.transpose() * trace.layer_inputs[l];
    grads.biases[l] = delta.colwise().sum().transpose();
    if (l == 0) break;
    Matrix upstream = delta * model.weights[l];
    if (trace.has_masks()) upstream = upstream.cwiseProduct(trace.masks[l - 1]);
    const Matrix& pre = trace.pre_activations[l - 1];
    delta = (pre.array() > 0.0).select(upstream, 0.0);
  }
  return grads;
}

OptimizerState make_optimizer(const MlpModel& model, double learning_rate, double momentum,
                              double weight_decay) {
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("optimizer: momentum must lie in [0, 1)");
  }
  if (!(learning_rate >= 0.0) || !(weight_decay >= 0.0)) {
    throw ConfigError("optimizer: learning rate and weight decay must be >= 0");
  }
  OptimizerState state;
  state.learning_rate = learning_rate;
  state.momentum = momentum;
  state.weight_decay = weight_decay;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    state.weight_velocity.push_back(
        Matrix::Zero(model.weights[l].rows(), model.weights[l].cols()));
    state.bias_velocity.push_back(Vector::Zero(model.biases[l].size()));
  }
  return state;
}

void sgd_step(MlpModel& model, const Gradients& grads, OptimizerState& state) {
  const std::size_t layers = model.num_layers();
  if (grads.weights.size() != layers || state.weight_velocity.size() != layers) {
    throw_shape_error("sgd_step: layer count", layers, grads.weights.size());
  }
  for (std::size_t l = 0; l < layers; ++l) {
    if (grads.weights[l].rows() != model.weights[l].rows() ||
        grads.weights[l].cols() != model.weights[l].cols() ||
        grads.biases[l].size() != model.biases[l].size()) {
      throw ConfigError("sgd_step: gradient shape mismatch in layer " + std::to_string(l));
    }
  }
  if (!grads.all_finite()) {
    throw DivergenceError("sgd_step: non-finite gradient, step aborted");
  }
  for (std::size_t l = 0; l < layers; ++l) {
    state.weight_velocity[l] = state.momentum * state.weight_velocity[l] + grads.weights[l] +
                               state.weight_decay * model.weights[l];
    state.bias_velocity[l] = state.momentum * state.bias_velocity[l] + grads.biases[l] +
                             state.weight_decay * model.biases[l];
    model.weights[l] -= state.learning_rate * state.weight_velocity[l];
    model.biases[l] -= state.learning_rate * state.bias_velocity[l];
  }
}

}  // namespace oodreg
