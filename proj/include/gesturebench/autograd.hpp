#pragma once

// Tape-based reverse-mode differentiation over the ops kernels.
//
// A Tape records each executed primitive together with a closure that maps
// the output gradient onto its inputs. Tape::backward replays those closures
// in exact reverse execution order. Leaves that do not require gradients are
// never recorded, so a tape with no trainable leaves is a plain forward pass.

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "gesturebench/ops.hpp"

namespace gesturebench {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the
/// owning tape is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  /// Accumulated gradient; zeros if backward never reached this value.
  const Tensor& grad() const;
  bool requires_grad() const;
  const Shape& shape() const { return value().shape(); }

  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Owned leaf value.
  Var leaf(Tensor value, bool requires_grad = false);
  /// Non-owning leaf; `value` must outlive the tape.
  Var leaf_ref(const Tensor& value, bool requires_grad);

  /// Records an op result. `backward` is dropped when no input requires a
  /// gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable leaf.
  /// Throws std::invalid_argument when `loss` is not a single element.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const;
  const Tensor& grad(std::size_t id);
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Mutable gradient buffer, zero-initialised on first access.
  Tensor& grad_buffer(std::size_t id);

  std::size_t size() const { return nodes_.size(); }
  /// Ids of the ops whose backward closures ran, in the order they ran.
  const std::vector<std::size_t>& backward_visits() const { return visits_; }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
  std::vector<std::size_t> visits_;
};

namespace ag {

Var conv3d(Var input, Var weights, Var bias, const Conv3dSpec& spec);
Var maxpool3d(Var input, Dims3 window = {2, 2, 2});
/// Train mode normalizes with batch statistics and, when `batch_stats` is
/// non-null, reports them there so the caller can fold them into the
/// running state. Infer mode reads `running` only.
Var batchnorm(Var input, Var gamma, Var beta, const ops::BatchNormState& running, Mode mode,
              ops::BatchNormOptions options = {}, ops::ChannelStats* batch_stats = nullptr);
Var dropout(Var input, double rate, Mode mode, Rng& rng);
Var dense(Var input, Var weights, Var bias, Activation act = Activation::none);
Var activate(Var input, Activation act);
inline Var relu(Var x) { return activate(x, Activation::relu); }
inline Var tanh(Var x) { return activate(x, Activation::tanh); }
inline Var sigmoid(Var x) { return activate(x, Activation::sigmoid); }
Var matvec(Var matrix, Var vec);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// Elements [start, start + count) of the flattened input, as a vector.
Var slice(Var input, std::size_t start, std::size_t count);
Var reshape(Var input, Shape shape);
/// Sum of all elements, shape [1].
Var sum(Var input);

struct LossOutput {
  Var loss;
  Tensor probs;
};
LossOutput softmax_cross_entropy(Var logits, std::size_t label);
LossOutput softmax_cross_entropy(Var logits, std::span<const double> target);

}  // namespace ag

/// Builds a scalar loss from parameter handles on a fresh tape.
using LossBuilder = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares tape gradients against central differences
/// (f(x+h) - f(x-h)) / 2h for every coordinate of every parameter. The
/// relative error is |a - n| / max(1e-12, |a| + |n|); the maximum is
/// returned for the caller to assert on. `build` must be deterministic.
GradCheckResult grad_check(const LossBuilder& build, std::vector<Tensor> params,
                           double h = 1e-6);

}  // namespace gesturebench
