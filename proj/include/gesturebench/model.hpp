#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gesturebench/autograd.hpp"

namespace gesturebench {

enum class Family { lstm, cnn3d };

std::string to_string(Family f);
Family family_from_string(const std::string& s);

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Batch statistics produced by one train-mode pass, one entry per
/// batch-norm layer in forward order.
using BnStats = std::vector<ops::ChannelStats>;

/// Common surface of the two classifier families. Trainable parameters are
/// an ordered list of named tensors; forward() takes them as tape handles so
/// the same code path serves inference, training and gradient checks.
class Model {
 public:
  virtual ~Model() = default;

  virtual Family family() const = 0;
  virtual std::size_t num_classes() const = 0;
  /// Input used for benchmarking and documentation, e.g. [30,63].
  virtual Shape nominal_input_shape() const = 0;
  virtual void check_input(const Tensor& input) const = 0;
  /// {"family": ..., "config": {...}}; enough to rebuild the architecture.
  virtual nlohmann::json descriptor() const = 0;
  virtual std::unique_ptr<Model> clone() const = 0;

  /// Returns class logits. In train mode `rng` drives dropout and, for
  /// models with batch norm, `bn_stats` (if non-null) receives the batch
  /// statistics; the model itself is never mutated.
  virtual Var forward(Tape& tape, std::span<const Var> params, const Tensor& input, Mode mode,
                      Rng* rng = nullptr, BnStats* bn_stats = nullptr) const = 0;

  /// Folds train-mode batch statistics into the running state.
  virtual void apply_bn_stats(const BnStats& stats) { (void)stats; }

  /// Non-trainable state saved alongside parameters (running statistics).
  virtual std::vector<NamedTensor> buffers() const { return {}; }
  virtual void load_buffers(const std::vector<NamedTensor>& buffers) { (void)buffers; }

  virtual std::uint64_t flop_estimate() const = 0;
  /// Largest (input + output) element count over any single layer.
  virtual std::uint64_t peak_activation_elements() const = 0;

  std::vector<NamedTensor>& params() { return params_; }
  const std::vector<NamedTensor>& params() const { return params_; }
  std::uint64_t param_count() const;

  std::vector<Var> bind(Tape& tape, bool requires_grad) const;
  /// Class probabilities in infer mode.
  Tensor predict(const Tensor& input) const;

 protected:
  std::vector<NamedTensor> params_;
};

/// Rebuilds a freshly initialised model from a descriptor.
std::unique_ptr<Model> make_model(const nlohmann::json& descriptor, std::uint64_t seed = 0);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) fill.
void init_uniform_fan_in(Tensor& t, std::size_t fan_in, Rng& rng);

}  // namespace gesturebench
