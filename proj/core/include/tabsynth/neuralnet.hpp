#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tabsynth/common.hpp"

namespace tabsynth {

enum class Activation { linear, relu, leaky_relu, tanh, gumbel_softmax };

std::string to_string(Activation a);
Activation parse_activation(const std::string& name);

constexpr double kLeakySlope = 0.2;

struct LayerSpec {
  std::size_t width = 0;
  Activation activation = Activation::linear;
  /// Concatenation residual: the layer emits [act(W x + b), x].
  bool residual = false;
  /// Temperature, used by gumbel_softmax only.
  double tau = 1.0;
  /// Batch normalization between the affine map and the activation.
  bool batch_norm = false;
};

// Batch statistics during training, running averages at inference.
enum class NormMode { batch, running };

constexpr double kNormEpsilon = 1e-5;

struct DenseLayer {
  Matrix weight;  // out x in
  RowVector bias;
  Activation activation = Activation::linear;
  bool residual = false;
  double tau = 1.0;
  bool batch_norm = false;
  RowVector bn_scale, bn_shift;       // learned; empty without batch_norm
  RowVector running_mean, running_var;

  std::size_t in_width() const { return static_cast<std::size_t>(weight.cols()); }
  std::size_t out_width() const {
    return static_cast<std::size_t>(weight.rows()) + (residual ? in_width() : 0);
  }
};

class DenseNet;

/// Per-parameter gradient buffers shaped exactly like a DenseNet.
struct GradientTape {
  std::vector<Matrix> weight;
  std::vector<RowVector> bias;
  std::vector<RowVector> bn_scale, bn_shift;  // empty entries for plain layers

  static GradientTape zeros_like(const DenseNet& net);
  GradientTape& add(const GradientTape& other, double scale = 1.0);
  bool is_zero() const;
  /// All gradients flattened in layer order (weights row-major, bias, then
  /// normalization scale and shift).
  std::vector<double> flatten() const;
};

/// Activations cached by a forward pass; consumed by DenseNet::backward.
struct ForwardPass {
  const DenseNet* net = nullptr;
  std::vector<Matrix> inputs;  // input of each layer
  std::vector<Matrix> pre;     // W x + b, normalized and rescaled when batch_norm is set
  std::vector<Matrix> post;    // activation(pre), before any residual concat
  std::vector<Matrix> noise;   // gumbel noise per layer (empty when unused)
  std::vector<Matrix> normalized;     // (z - mean) * inv_std per batch_norm layer
  std::vector<RowVector> inv_std;
  std::vector<RowVector> batch_mean, batch_var;  // biased batch statistics
  NormMode mode = NormMode::batch;
  Matrix output;
};

struct Backprop {
  GradientTape tape;
  Matrix input_grad;
};

/// Fully connected network with optional concatenation-residual layers.
class DenseNet {
 public:
  DenseNet() = default;
  /// Glorot-uniform weights, zero biases; deterministic per seed.
  DenseNet(std::size_t input_width, const std::vector<LayerSpec>& layers, std::uint64_t seed);
  explicit DenseNet(std::size_t input_width, std::vector<DenseLayer> layers);

  std::size_t input_width() const { return input_width_; }
  std::size_t output_width() const;
  std::size_t parameter_count() const;
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }

  /// Gumbel layers add noise drawn from `noise`; without a generator they
  /// reduce to a tempered softmax, which keeps the pass a pure function.
  /// Normalization layers use batch statistics unless `mode` is running.
  ForwardPass forward(const Matrix& batch, Rng* noise = nullptr, NormMode mode = NormMode::batch) const;
  /// Inference pass: normalization layers use their running statistics.
  Matrix predict(const Matrix& batch, Rng* noise = nullptr) const {
    return forward(batch, noise, NormMode::running).output;
  }
  /// Reverse-mode gradients of a scalar loss given dLoss/dOutput.
  Backprop backward(const ForwardPass& pass, const Matrix& loss_grad) const;

  void apply_update(const GradientTape& delta, double scale);
  /// Exponential moving average of the batch statistics of a training pass
  /// (variance stored unbiased).
  void update_running_stats(const ForwardPass& pass, double momentum = 0.1);

  std::string serialize() const;
  static DenseNet deserialize(const std::string& text);

 private:
  std::size_t input_width_ = 0;
  std::vector<DenseLayer> layers_;
};

struct AdamOptions {
  double learning_rate = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamOptions options;
  std::vector<Matrix> m_weight, v_weight;
  std::vector<RowVector> m_bias, v_bias;
  std::vector<RowVector> m_scale, v_scale, m_shift, v_shift;
  std::size_t step_count = 0;
};

/// Bias-corrected Adam.
class Adam {
 public:
  Adam(const DenseNet& net, AdamOptions options);
  void step(DenseNet& net, const GradientTape& grad);
  const AdamState& state() const { return state_; }

 private:
  AdamState state_;
};

struct PenaltyResult {
  double value = 0.0;
  GradientTape tape;
};

/// Mean over rows of (||d net(x) / dx|| - 1)^2 and its gradient with respect
/// to the network parameters. Requires a scalar-output network without
/// residual layers whose activations are piecewise linear (linear, relu,
/// leaky_relu); for those the input gradient is multilinear in the weights,
/// which lets the parameter gradient be formed in one extra forward sweep.
PenaltyResult gradient_penalty(const DenseNet& net, const Matrix& points);

/// Softmax of (logits + gumbel noise) / tau.
std::vector<double> gumbel_softmax_sample(std::span<const double> logits, double tau, Rng& rng);
/// Row-wise softmax of (x + noise) / tau in place; noise may be empty.
void tempered_softmax_rows(Eigen::Ref<Matrix> x, const Matrix* noise, double tau);
/// Backward of tempered_softmax_rows given its output y and upstream grad.
Matrix tempered_softmax_backward(const Matrix& y, const Matrix& grad_y, double tau);

/// Central finite-difference gradient of `loss` with respect to every
/// parameter of `net`.
GradientTape numerical_gradient(const DenseNet& net, const std::function<double(const DenseNet&)>& loss,
                                double h = 1e-4);
/// ||a - b|| / (||a|| + ||b||), zero when both vanish.
double relative_error(const GradientTape& a, const GradientTape& b);

}  // namespace tabsynth
