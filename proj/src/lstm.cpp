#include "gesturebench/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json_util.hpp"

namespace gesturebench {

void LstmConfig::validate() const {
  if (input_size == 0) throw std::invalid_argument("lstm input_size must be >= 1");
  if (hidden_sizes.empty()) throw std::invalid_argument("lstm hidden_sizes must be non-empty");
  for (auto h : hidden_sizes) {
    if (h == 0) throw std::invalid_argument("lstm hidden_sizes entries must be >= 1");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw std::invalid_argument("lstm dropout_rate must be in [0, 1)");
  }
  if (dense_size == 0) throw std::invalid_argument("lstm dense_size must be >= 1");
  if (num_classes < 2) throw std::invalid_argument("lstm num_classes must be >= 2");
}

nlohmann::json LstmConfig::to_json() const {
  return {{"input_size", input_size},
          {"hidden_sizes", hidden_sizes},
          {"dropout_rate", dropout_rate},
          {"dense_size", dense_size},
          {"num_classes", num_classes}};
}

LstmConfig LstmConfig::from_json(const nlohmann::json& j) {
  detail::reject_unknown_keys(
      j, {"input_size", "hidden_sizes", "dropout_rate", "dense_size", "num_classes"}, "model");
  LstmConfig c;
  detail::read_key(j, "input_size", c.input_size);
  detail::read_key(j, "hidden_sizes", c.hidden_sizes);
  detail::read_key(j, "dropout_rate", c.dropout_rate);
  detail::read_key(j, "dense_size", c.dense_size);
  detail::read_key(j, "num_classes", c.num_classes);
  c.validate();
  return c;
}

LstmCellOutput lstm_cell_step(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                              const LstmLayerParams& params) {
  Tape tape;
  auto out = ag::lstm_cell(tape.leaf_ref(x, false), tape.leaf_ref(h_prev, false),
                           tape.leaf_ref(c_prev, false),
                           tape.leaf_ref(params.input_weights, false),
                           tape.leaf_ref(params.recurrent_weights, false),
                           tape.leaf_ref(params.bias, false));
  return {out.h.value(), out.c.value()};
}

namespace ag {

LstmCellVars lstm_cell(Var x, Var h_prev, Var c_prev, Var input_weights, Var recurrent_weights,
                       Var bias) {
  const std::size_t h = h_prev.value().numel();
  if (input_weights.shape().size() != 2 || input_weights.shape()[0] != 4 * h) {
    throw DimensionError("lstm input weights axis 0: expected " + std::to_string(4 * h) +
                         ", got shape " + shape_to_string(input_weights.shape()));
  }
  if (recurrent_weights.shape() != Shape{4 * h, h}) {
    throw DimensionError("lstm recurrent weights must be " + shape_to_string({4 * h, h}) +
                         ", got " + shape_to_string(recurrent_weights.shape()));
  }
  if (bias.value().numel() != 4 * h) {
    throw DimensionError("lstm bias axis 0: expected " + std::to_string(4 * h));
  }
  if (c_prev.value().numel() != h) {
    throw DimensionError("lstm cell state axis 0: expected " + std::to_string(h));
  }
  Var z = add(add(matvec(input_weights, x), matvec(recurrent_weights, h_prev)), bias);
  Var i = sigmoid(slice(z, 0, h));
  Var f = sigmoid(slice(z, h, h));
  Var g = tanh(slice(z, 2 * h, h));
  Var o = sigmoid(slice(z, 3 * h, h));
  Var c = add(mul(f, c_prev), mul(i, g));
  Var hn = mul(o, tanh(c));
  return {hn, c};
}

}  // namespace ag

std::uint64_t lstm_param_count(const LstmConfig& config) {
  std::uint64_t n = 0;
  std::uint64_t in = config.input_size;
  for (std::uint64_t h : config.hidden_sizes) {
    n += 4 * h * (in + h + 1);
    in = h;
  }
  n += in * config.dense_size + config.dense_size;
  n += config.dense_size * config.num_classes + config.num_classes;
  return n;
}

LstmModel::LstmModel(LstmConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(seed);
  std::size_t in = config_.input_size;
  for (std::size_t l = 0; l < config_.hidden_sizes.size(); ++l) {
    const std::size_t h = config_.hidden_sizes[l];
    const std::string prefix = "lstm" + std::to_string(l) + ".";
    Tensor w({4 * h, in}), u({4 * h, h}), b({4 * h}, 0.0);
    init_uniform_fan_in(w, in, rng);
    init_uniform_fan_in(u, h, rng);
    for (std::size_t k = h; k < 2 * h; ++k) b[k] = 1.0;  // forget gate
    params_.push_back({prefix + "W", std::move(w)});
    params_.push_back({prefix + "U", std::move(u)});
    params_.push_back({prefix + "b", std::move(b)});
    in = h;
  }
  Tensor dw({in, config_.dense_size}), ow({config_.dense_size, config_.num_classes});
  init_uniform_fan_in(dw, in, rng);
  init_uniform_fan_in(ow, config_.dense_size, rng);
  params_.push_back({"dense.W", std::move(dw)});
  params_.push_back({"dense.b", Tensor({config_.dense_size}, 0.0)});
  params_.push_back({"out.W", std::move(ow)});
  params_.push_back({"out.b", Tensor({config_.num_classes}, 0.0)});
}

void LstmModel::check_input(const Tensor& input) const {
  if (input.rank() != 2) {
    throw DimensionError("lstm input must be [T," + std::to_string(config_.input_size) +
                         "], got " + shape_to_string(input.shape()));
  }
  if (input.dim(1) != config_.input_size) {
    throw DimensionError("lstm input axis 1 (features): expected " +
                         std::to_string(config_.input_size) + ", got " +
                         std::to_string(input.dim(1)));
  }
}

nlohmann::json LstmModel::descriptor() const {
  return {{"family", "lstm"}, {"config", config_.to_json()}};
}

Var LstmModel::forward(Tape& tape, std::span<const Var> params, const Tensor& input, Mode mode,
                       Rng* rng, BnStats*) const {
  check_input(input);
  if (params.size() != params_.size()) {
    throw std::invalid_argument("lstm forward: expected " + std::to_string(params_.size()) +
                                " parameter handles");
  }
  const std::size_t steps = input.dim(0);
  const std::size_t width = config_.input_size;

  std::vector<Var> sequence;
  sequence.reserve(steps);
  Var input_var = tape.leaf_ref(input, false);
  for (std::size_t t = 0; t < steps; ++t) {
    sequence.push_back(ag::slice(input_var, t * width, width));
  }
  for (std::size_t l = 0; l < config_.hidden_sizes.size(); ++l) {
    const std::size_t h = config_.hidden_sizes[l];
    Var hv = tape.leaf(Tensor({h}, 0.0));
    Var cv = tape.leaf(Tensor({h}, 0.0));
    for (auto& x : sequence) {
      auto out = ag::lstm_cell(x, hv, cv, params[3 * l], params[3 * l + 1], params[3 * l + 2]);
      hv = out.h;
      cv = out.c;
      x = hv;
    }
  }
  const std::size_t head = 3 * config_.hidden_sizes.size();
  Var last = sequence.back();
  if (mode == Mode::train && config_.dropout_rate > 0.0) {
    if (!rng) throw std::invalid_argument("lstm train-mode forward needs an rng for dropout");
    last = ag::dropout(last, config_.dropout_rate, mode, *rng);
  }
  Var hidden = ag::dense(last, params[head], params[head + 1], Activation::relu);
  return ag::dense(hidden, params[head + 2], params[head + 3]);
}

std::uint64_t LstmModel::flops(std::size_t steps) const {
  std::uint64_t per_step = 0;
  std::uint64_t in = config_.input_size;
  for (std::uint64_t h : config_.hidden_sizes) {
    per_step += 2 * 4 * h * (in + h);
    in = h;
  }
  return steps * per_step + 2 * in * config_.dense_size +
         2 * config_.dense_size * config_.num_classes;
}

std::uint64_t LstmModel::peak_activation_elements() const {
  const std::uint64_t T = kNominalLength;
  std::uint64_t in = config_.input_size;
  std::uint64_t peak = 0;
  for (std::uint64_t h : config_.hidden_sizes) {
    // Whole input and output sequences of the layer are live together.
    peak = std::max(peak, T * in + T * h + 6 * h);
    in = h;
  }
  peak = std::max<std::uint64_t>(peak, in + config_.dense_size);
  peak = std::max<std::uint64_t>(peak, config_.dense_size + config_.num_classes);
  return peak;
}

LstmLayerParams LstmModel::layer(std::size_t index) const {
  return {params_.at(3 * index).value, params_.at(3 * index + 1).value,
          params_.at(3 * index + 2).value};
}

LstmModel::State LstmModel::initial_state() const {
  State s;
  for (auto h : config_.hidden_sizes) {
    s.h.emplace_back(Shape{h}, 0.0);
    s.c.emplace_back(Shape{h}, 0.0);
  }
  return s;
}

void LstmModel::step(State& state, const Tensor& frame) const {
  if (frame.numel() != config_.input_size) {
    throw DimensionError("lstm frame axis 0: expected " + std::to_string(config_.input_size));
  }
  Tensor x = frame.reshaped({config_.input_size});
  for (std::size_t l = 0; l < config_.hidden_sizes.size(); ++l) {
    auto out = lstm_cell_step(x, state.h[l], state.c[l], layer(l));
    state.h[l] = out.h;
    state.c[l] = std::move(out.c);
    x = std::move(out.h);
  }
}

Tensor LstmModel::head(const State& state) const {
  const std::size_t head = 3 * config_.hidden_sizes.size();
  Tensor hidden = ops::dense(state.h.back(), params_[head].value, params_[head + 1].value,
                             Activation::relu);
  return ops::softmax(ops::dense(hidden, params_[head + 2].value, params_[head + 3].value));
}

}  // namespace gesturebench
