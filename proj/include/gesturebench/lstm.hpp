#pragma once

#include <cstdint>
#include <vector>

#include "gesturebench/model.hpp"

namespace gesturebench {

struct LstmConfig {
  std::size_t input_size = 63;
  std::vector<std::size_t> hidden_sizes{64, 128};
  double dropout_rate = 0.3;
  std::size_t dense_size = 64;
  std::size_t num_classes = 36;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static LstmConfig from_json(const nlohmann::json& j);
};

/// Parameters of one LSTM layer, gate order (i, f, g, o) along the 4h axis.
struct LstmLayerParams {
  Tensor input_weights;      // [4h, in]
  Tensor recurrent_weights;  // [4h, h]
  Tensor bias;               // [4h]
};

struct LstmCellOutput {
  Tensor h;
  Tensor c;
};

/// One step of the standard (no peephole) LSTM cell:
///   i = s(W_i x + U_i h + b_i), f = s(..), g = tanh(..), o = s(..)
///   c' = f*c + i*g,  h' = o*tanh(c')
LstmCellOutput lstm_cell_step(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                              const LstmLayerParams& params);

namespace ag {
struct LstmCellVars {
  Var h;
  Var c;
};
LstmCellVars lstm_cell(Var x, Var h_prev, Var c_prev, Var input_weights, Var recurrent_weights,
                       Var bias);
}  // namespace ag

std::uint64_t lstm_param_count(const LstmConfig& config);

/// Stacked LSTM -> dropout on the final hidden state -> dense(relu) ->
/// dense -> softmax. Parameter order: per layer (W, U, b), then dense W/b,
/// then output W/b.
class LstmModel final : public Model {
 public:
  /// Sequence length used for FLOP and memory estimates.
  static constexpr std::size_t kNominalLength = 30;

  explicit LstmModel(LstmConfig config, std::uint64_t seed = 0);

  const LstmConfig& config() const { return config_; }

  Family family() const override { return Family::lstm; }
  std::size_t num_classes() const override { return config_.num_classes; }
  Shape nominal_input_shape() const override { return {kNominalLength, config_.input_size}; }
  void check_input(const Tensor& input) const override;
  nlohmann::json descriptor() const override;
  std::unique_ptr<Model> clone() const override { return std::make_unique<LstmModel>(*this); }

  Var forward(Tape& tape, std::span<const Var> params, const Tensor& input, Mode mode,
              Rng* rng = nullptr, BnStats* bn_stats = nullptr) const override;

  std::uint64_t flop_estimate() const override { return flops(kNominalLength); }
  std::uint64_t flops(std::size_t steps) const;
  std::uint64_t peak_activation_elements() const override;

  LstmLayerParams layer(std::size_t index) const;

  /// Recurrent state carried across incremental steps.
  struct State {
    std::vector<Tensor> h;
    std::vector<Tensor> c;
  };
  State initial_state() const;
  /// Advances every layer by one frame.
  void step(State& state, const Tensor& frame) const;
  /// Infer-mode head applied to the top layer's hidden state.
  Tensor head(const State& state) const;

 private:
  LstmConfig config_;
};

}  // namespace gesturebench
