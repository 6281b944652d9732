#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace oodreg {

/// Dense row-major matrix of doubles. Rows are examples throughout the library.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

bool all_finite(const Matrix& m);

/// Fully connected ReLU network. Layer l maps dims[l] -> dims[l+1] with
/// weights of shape dims[l+1] x dims[l]. Dropout is applied to the output of
/// every hidden ReLU, never to the input or the logits.
struct MlpModel {
  std::vector<std::size_t> layer_dims;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  double dropout_rate = 0.0;

  std::size_t num_layers() const { return weights.size(); }
  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t num_classes() const { return layer_dims.back(); }

  /// Throws ConfigError when dims, parameter shapes or the dropout rate are inconsistent.
  void validate() const;
};

/// He (fan-in) normal initialisation, zero biases. Deterministic in `seed`.
MlpModel init_mlp(std::span<const std::size_t> layer_dims, double dropout_rate,
                  std::uint64_t seed);

enum class ForwardMode {
  eval,        // no dropout
  train,       // dropout masks sampled from the seed
  mc_dropout,  // same sampling as train; used at inference time
};

/// Everything backward() needs. Masks hold the inverted-dropout multipliers
/// (0 or 1/keep) and are empty when dropout was inactive.
struct ForwardTrace {
  std::vector<Matrix> layer_inputs;     // input fed to layer l (after dropout)
  std::vector<Matrix> pre_activations;  // W_l x + b_l
  std::vector<Matrix> masks;            // one per hidden layer, or empty

  bool has_masks() const { return !masks.empty(); }
  const Matrix& penultimate_features() const { return layer_inputs.back(); }
};

struct ForwardResult {
  Matrix logits;
  ForwardTrace trace;
};

ForwardResult forward(const MlpModel& model, const Matrix& inputs,
                      ForwardMode mode = ForwardMode::eval, std::uint64_t seed = 0);

/// Logits only, eval mode.
Matrix predict_logits(const MlpModel& model, const Matrix& inputs);

/// Row-wise softmax with max subtraction. Rejects non-finite input.
Matrix softmax(const Matrix& logits);

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static Gradients zeros_like(const MlpModel& model);
  Gradients& operator+=(const Gradients& other);
  bool all_finite() const;
};

Gradients backward(const MlpModel& model, const ForwardTrace& trace, const Matrix& d_logits);

struct OptimizerState {
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 3e-4;
  std::vector<Matrix> weight_velocity;
  std::vector<Vector> bias_velocity;
};

OptimizerState make_optimizer(const MlpModel& model, double learning_rate, double momentum,
                              double weight_decay);

/// Classic coupled SGD with momentum:
///   v <- momentum * v + (grad + weight_decay * param);  param <- param - lr * v.
/// A non-finite gradient leaves model and state untouched and throws DivergenceError.
void sgd_step(MlpModel& model, const Gradients& grads, OptimizerState& state);

}  // namespace oodreg
