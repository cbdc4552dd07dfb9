#pragma once

// Forward and backward kernels for the layer primitives. These operate on
// plain tensors; autograd.hpp wraps them for tape-based differentiation.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "gesturebench/random.hpp"
#include "gesturebench/tensor.hpp"

namespace gesturebench {

enum class Mode { train, infer };

enum class Activation { none, relu, tanh, sigmoid };

/// Output extent of some axis would be < 1 under valid padding.
class KernelTooLargeError : public DimensionError {
 public:
  using DimensionError::DimensionError;
};

/// Raised when a batch-norm layer is used for inference before any
/// train-mode update has populated its running statistics.
class UninitializedStatsError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

using Dims3 = std::array<std::size_t, 3>;

/// 3D convolution layer geometry. Only valid padding is supported.
struct Conv3dSpec {
  enum class Padding { valid };

  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  Dims3 kernel{3, 3, 3};
  Dims3 stride{1, 1, 1};
  Padding padding = Padding::valid;

  /// Throws std::invalid_argument for zero kernel/stride/channel values.
  void validate() const;
  /// [T,H,W,Cin] -> [T',H',W',Cout]; throws KernelTooLargeError when an
  /// output axis would be empty.
  Shape output_shape(const Shape& input) const;
  Shape weight_shape() const;
};

namespace ops {

/// Inner product with a fixed (deterministic) summation order.
double dot(const double* a, const double* b, std::size_t n);

// conv3d: input [T,H,W,Cin], weights [K,kt,kh,kw,Cin], bias [K] -> [T',H',W',K]
Tensor conv3d(const Tensor& input, const Conv3dSpec& spec, const Tensor& weights,
              const Tensor& bias);
/// Accumulates into whichever of the gradient outputs are non-null.
void conv3d_backward(const Tensor& input, const Conv3dSpec& spec, const Tensor& weights,
                     const Tensor& grad_out, Tensor* grad_input, Tensor* grad_weights,
                     Tensor* grad_bias);

struct PoolResult {
  Tensor output;
  /// Flat input index of the selected element, one per output element.
  std::vector<std::size_t> argmax;
};

/// Non-overlapping max pool (stride == window), floor semantics on trailing
/// elements. Ties go to the lowest flat input index.
PoolResult maxpool3d(const Tensor& input, Dims3 window = {2, 2, 2});
Shape maxpool3d_output_shape(const Shape& input, Dims3 window);
void maxpool3d_backward(std::span<const std::size_t> argmax, const Tensor& grad_out,
                        Tensor& grad_input);

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
};

/// Per-channel running statistics for batch normalization.
struct BatchNormState {
  explicit BatchNormState(std::size_t channels = 1)
      : running_mean({channels}, 0.0), running_var({channels}, 1.0) {}

  Tensor running_mean;
  Tensor running_var;
  bool initialized = false;

  std::size_t channels() const { return running_mean.numel(); }
  /// running <- (1 - momentum) * running + momentum * batch
  void update(std::span<const double> batch_mean, std::span<const double> batch_var,
              double momentum);
};

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> var;  // biased (divides by count)
};

/// Statistics over every axis except the last (channel) axis.
ChannelStats channel_statistics(const Tensor& input);

Tensor batchnorm_apply(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                       std::span<const double> mean, std::span<const double> var, double eps);

/// Train mode normalizes with batch statistics and updates `state`; infer
/// mode uses the running statistics only.
Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                 BatchNormState& state, Mode mode, BatchNormOptions options = {});

/// Gradients of batchnorm_apply. With `batch_stats` true the mean and
/// variance are treated as functions of the input (train mode).
void batchnorm_backward(const Tensor& input, const Tensor& gamma, std::span<const double> mean,
                        std::span<const double> var, double eps, bool batch_stats,
                        const Tensor& grad_out, Tensor* grad_input, Tensor* grad_gamma,
                        Tensor* grad_beta);

/// Keep mask: 0 with probability `rate`, else 1. Survivors are divided by 1-rate.
Tensor dropout_mask(const Shape& shape, double rate, Rng& rng);
Tensor dropout(const Tensor& input, double rate, Mode mode, Rng& rng);
void check_dropout_rate(double rate);

double sigmoid(double x);
Tensor activate(const Tensor& x, Activation act);
/// Gradient through an activation given its *output* values.
Tensor activation_backward(const Tensor& output, const Tensor& grad_out, Activation act);

/// input [in] or [N,in], weights [in,out], bias [out]; returns activation(input*W + b).
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias,
             Activation act = Activation::none);
void dense_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out,
                    Tensor* grad_input, Tensor* grad_weights, Tensor* grad_bias);

/// matrix [m,n] times vector [n] -> [m]
Tensor matvec(const Tensor& matrix, const Tensor& vec);

Tensor softmax(const Tensor& logits);

struct SoftmaxLoss {
  Tensor probs;
  double loss = 0.0;
};

/// Numerically stable softmax followed by -ln(p[label]).
SoftmaxLoss softmax_cross_entropy(const Tensor& logits, std::size_t label);
/// Cross-entropy against a target distribution: -sum_i t_i ln p_i.
SoftmaxLoss softmax_cross_entropy(const Tensor& logits, std::span<const double> target);

/// Index of the largest element; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> values);

}  // namespace ops
}  // namespace gesturebench
