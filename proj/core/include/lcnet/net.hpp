#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace lcnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Shape of a residual ReLU feedforward network.
///
/// The network consists of a first linear layer, `residual_blocks` blocks of
/// two pre-activated linear layers each, and a final linear layer, giving
/// `2 * residual_blocks + 2` weight layers in total. All hidden layers share
/// `hidden_dim`. Residual skip connections can be disabled per instance,
/// which turns the blocks into a plain feedforward stack.
struct NetShape {
  int input_dim = 1;
  int hidden_dim = 1;
  int residual_blocks = 0;
  int output_dim = 1;
  bool residual_skips = true;

  int layer_count() const { return 2 * residual_blocks + 2; }
  int layer_rows(int layer) const;
  int layer_cols(int layer) const;

  /// Throws std::invalid_argument if any dimension is non-positive.
  void validate() const;

  bool operator==(const NetShape&) const = default;
};

/// Weights and biases for every layer of a network, first to last.
struct ParamSet {
  NetShape shape;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  std::size_t scalar_count() const;

  /// Throws std::invalid_argument if layer shapes do not match `shape`.
  void validate() const;
};

/// All-zero parameters for the given shape.
ParamSet zero_params(const NetShape& shape);

/// He initialization: weights drawn N(0, 2/fan_in), biases zero.
/// Deterministic for a fixed seed.
ParamSet init_he(const NetShape& shape, std::uint64_t seed);

/// Everything needed to replay a forward pass: the input, the pre-activation
/// of every hidden layer in order, and the output. Columns are samples.
struct ForwardTrace {
  Matrix input;
  std::vector<Matrix> pre;
  Matrix output;
};

/// Evaluates the network on a batch (one column per sample). If `trace` is
/// non-null it is filled with the per-layer pre-activations.
Matrix forward(const ParamSet& params, const Matrix& input, ForwardTrace* trace = nullptr);

/// Single-input convenience wrapper for networks with a scalar output.
double forward_scalar(const ParamSet& params, const Vector& input, ForwardTrace* trace = nullptr);

/// Gradients with the same layout as a ParamSet, plus the gradient of the
/// loss with respect to the network input.
struct GradientSet {
  std::vector<Matrix> dweights;
  std::vector<Vector> dbiases;
  Matrix dinput;
};

/// Exact reverse-mode gradients. `upstream` is dLoss/dOutput with the same
/// shape as the traced output. The ReLU subgradient at zero is taken as zero.
GradientSet backward(const ParamSet& params, const ForwardTrace& trace, const Matrix& upstream);

GradientSet backward_scalar(const ParamSet& params, const ForwardTrace& trace, double upstream);

/// Sum of squares of all weights and biases. Biases are deliberately part of
/// the penalty; restrict the loops below to `weights` to exclude them.
double l2_penalty(const ParamSet& params);

}  // namespace lcnet
