#include "gesturebench/cnn3d.hpp"

#include <algorithm>
#include <stdexcept>

#include "json_util.hpp"

namespace gesturebench {

Cnn3dConfig Cnn3dConfig::desk() { return Cnn3dConfig{}; }

Cnn3dConfig Cnn3dConfig::full_scale() {
  Cnn3dConfig c;
  c.input_dims = {30, 128, 128, 3};
  c.blocks = {Cnn3dBlock{16}, Cnn3dBlock{32}, Cnn3dBlock{64}};
  return c;
}

Conv3dSpec Cnn3dConfig::conv_spec(std::size_t i) const {
  const Cnn3dBlock& b = blocks.at(i);
  Conv3dSpec s;
  s.in_channels = i == 0 ? input_dims.at(3) : blocks[i - 1].out_channels;
  s.out_channels = b.out_channels;
  s.kernel = b.kernel;
  s.stride = b.stride;
  return s;
}

std::vector<Cnn3dConfig::BlockShapes> Cnn3dConfig::block_shapes() const {
  std::vector<BlockShapes> shapes;
  Shape cur = input_dims;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    BlockShapes s;
    s.conv = conv_spec(i).output_shape(cur);
    s.out = blocks[i].pool ? ops::maxpool3d_output_shape(s.conv, blocks[i].pool_window) : s.conv;
    cur = s.out;
    shapes.push_back(std::move(s));
  }
  return shapes;
}

std::size_t Cnn3dConfig::flattened_size() const {
  const auto shapes = block_shapes();
  return shape_numel(shapes.empty() ? input_dims : shapes.back().out);
}

void Cnn3dConfig::validate() const {
  if (input_dims.size() != 4) throw std::invalid_argument("cnn3d input_dims must be [T,H,W,C]");
  for (auto d : input_dims) {
    if (d == 0) throw std::invalid_argument("cnn3d input_dims must be positive");
  }
  if (blocks.empty()) throw std::invalid_argument("cnn3d needs at least one block");
  if (dense_size == 0) throw std::invalid_argument("cnn3d dense_size must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw std::invalid_argument("cnn3d dropout_rate must be in [0, 1)");
  }
  if (num_classes < 2) throw std::invalid_argument("cnn3d num_classes must be >= 2");
  block_shapes();
}

nlohmann::json Cnn3dConfig::to_json() const {
  nlohmann::json blocks_json = nlohmann::json::array();
  for (const auto& b : blocks) {
    blocks_json.push_back({{"out_channels", b.out_channels},
                           {"kernel", b.kernel},
                           {"stride", b.stride},
                           {"pool", b.pool},
                           {"pool_window", b.pool_window}});
  }
  return {{"input_dims", input_dims},
          {"blocks", blocks_json},
          {"dense_size", dense_size},
          {"dropout_rate", dropout_rate},
          {"num_classes", num_classes}};
}

Cnn3dConfig Cnn3dConfig::from_json(const nlohmann::json& j) {
  detail::reject_unknown_keys(
      j, {"input_dims", "blocks", "dense_size", "dropout_rate", "num_classes"}, "model");
  Cnn3dConfig c;
  detail::read_key(j, "input_dims", c.input_dims);
  if (j.contains("blocks")) {
    if (!j.at("blocks").is_array()) throw std::invalid_argument("'blocks' must be an array");
    c.blocks.clear();
    for (const auto& bj : j.at("blocks")) {
      detail::reject_unknown_keys(bj, {"out_channels", "kernel", "stride", "pool", "pool_window"},
                                  "model.blocks");
      Cnn3dBlock b;
      detail::read_key(bj, "out_channels", b.out_channels);
      detail::read_key(bj, "kernel", b.kernel);
      detail::read_key(bj, "stride", b.stride);
      detail::read_key(bj, "pool", b.pool);
      detail::read_key(bj, "pool_window", b.pool_window);
      c.blocks.push_back(b);
    }
  }
  detail::read_key(j, "dense_size", c.dense_size);
  detail::read_key(j, "dropout_rate", c.dropout_rate);
  detail::read_key(j, "num_classes", c.num_classes);
  c.validate();
  return c;
}

std::uint64_t cnn3d_param_count(const Cnn3dConfig& config) {
  std::uint64_t n = 0;
  for (std::size_t i = 0; i < config.blocks.size(); ++i) {
    const Conv3dSpec s = config.conv_spec(i);
    n += s.out_channels * s.kernel[0] * s.kernel[1] * s.kernel[2] * s.in_channels +
         s.out_channels;
    n += 2 * s.out_channels;  // gamma, beta
  }
  const std::uint64_t flat = config.flattened_size();
  n += flat * config.dense_size + config.dense_size;
  n += config.dense_size * config.num_classes + config.num_classes;
  return n;
}

Cnn3dModel::Cnn3dModel(Cnn3dConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(seed);
  for (std::size_t i = 0; i < config_.blocks.size(); ++i) {
    const Conv3dSpec s = config_.conv_spec(i);
    const std::string prefix = "block" + std::to_string(i) + ".";
    Tensor w(s.weight_shape());
    init_uniform_fan_in(w, s.kernel[0] * s.kernel[1] * s.kernel[2] * s.in_channels, rng);
    params_.push_back({prefix + "conv.W", std::move(w)});
    params_.push_back({prefix + "conv.b", Tensor({s.out_channels}, 0.0)});
    params_.push_back({prefix + "bn.gamma", Tensor({s.out_channels}, 1.0)});
    params_.push_back({prefix + "bn.beta", Tensor({s.out_channels}, 0.0)});
    bn_.emplace_back(s.out_channels);
  }
  const std::size_t flat = config_.flattened_size();
  Tensor dw({flat, config_.dense_size}), ow({config_.dense_size, config_.num_classes});
  init_uniform_fan_in(dw, flat, rng);
  init_uniform_fan_in(ow, config_.dense_size, rng);
  params_.push_back({"dense.W", std::move(dw)});
  params_.push_back({"dense.b", Tensor({config_.dense_size}, 0.0)});
  params_.push_back({"out.W", std::move(ow)});
  params_.push_back({"out.b", Tensor({config_.num_classes}, 0.0)});
}

void Cnn3dModel::check_input(const Tensor& input) const {
  if (input.rank() != 4) {
    throw DimensionError("cnn3d input must be " + shape_to_string(config_.input_dims) + ", got " +
                         shape_to_string(input.shape()));
  }
  for (std::size_t a = 0; a < 4; ++a) {
    if (input.dim(a) != config_.input_dims[a]) {
      throw DimensionError("cnn3d input axis " + std::to_string(a) + ": expected " +
                           std::to_string(config_.input_dims[a]) + ", got " +
                           std::to_string(input.dim(a)));
    }
  }
}

nlohmann::json Cnn3dModel::descriptor() const {
  return {{"family", "cnn3d"}, {"config", config_.to_json()}};
}

Var Cnn3dModel::forward(Tape& tape, std::span<const Var> params, const Tensor& input, Mode mode,
                        Rng* rng, BnStats* bn_stats) const {
  check_input(input);
  if (params.size() != params_.size()) {
    throw std::invalid_argument("cnn3d forward: expected " + std::to_string(params_.size()) +
                                " parameter handles");
  }
  Var x = tape.leaf_ref(input, false);
  for (std::size_t i = 0; i < config_.blocks.size(); ++i) {
    x = ag::conv3d(x, params[4 * i], params[4 * i + 1], config_.conv_spec(i));
    ops::ChannelStats stats;
    x = ag::batchnorm(x, params[4 * i + 2], params[4 * i + 3], bn_[i], mode, bn_options_,
                      mode == Mode::train ? &stats : nullptr);
    if (mode == Mode::train && bn_stats) bn_stats->push_back(std::move(stats));
    x = ag::relu(x);
    if (config_.blocks[i].pool) x = ag::maxpool3d(x, config_.blocks[i].pool_window);
  }
  const std::size_t head = 4 * config_.blocks.size();
  x = ag::reshape(x, {x.value().numel()});
  x = ag::dense(x, params[head], params[head + 1], Activation::relu);
  if (mode == Mode::train && config_.dropout_rate > 0.0) {
    if (!rng) throw std::invalid_argument("cnn3d train-mode forward needs an rng for dropout");
    x = ag::dropout(x, config_.dropout_rate, mode, *rng);
  }
  return ag::dense(x, params[head + 2], params[head + 3]);
}

void Cnn3dModel::apply_bn_stats(const BnStats& stats) {
  if (stats.size() != bn_.size()) {
    throw std::invalid_argument("cnn3d: expected batch statistics for " +
                                std::to_string(bn_.size()) + " batch-norm layers");
  }
  for (std::size_t i = 0; i < bn_.size(); ++i) {
    bn_[i].update(stats[i].mean, stats[i].var, bn_options_.momentum);
  }
}

std::vector<NamedTensor> Cnn3dModel::buffers() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < bn_.size(); ++i) {
    const std::string prefix = "block" + std::to_string(i) + ".bn.";
    out.push_back({prefix + "running_mean", bn_[i].running_mean});
    out.push_back({prefix + "running_var", bn_[i].running_var});
    out.push_back({prefix + "initialized", Tensor::scalar(bn_[i].initialized ? 1.0 : 0.0)});
  }
  return out;
}

void Cnn3dModel::load_buffers(const std::vector<NamedTensor>& buffers) {
  if (buffers.size() != 3 * bn_.size()) {
    throw std::invalid_argument("cnn3d: expected " + std::to_string(3 * bn_.size()) +
                                " buffer tensors, got " + std::to_string(buffers.size()));
  }
  for (std::size_t i = 0; i < bn_.size(); ++i) {
    const auto& mean = buffers[3 * i].value;
    const auto& var = buffers[3 * i + 1].value;
    if (mean.shape() != bn_[i].running_mean.shape() || var.shape() != bn_[i].running_var.shape()) {
      throw DimensionError("cnn3d: running statistics shape mismatch in block " +
                           std::to_string(i));
    }
    bn_[i].running_mean = mean;
    bn_[i].running_var = var;
    bn_[i].initialized = buffers[3 * i + 2].value[0] != 0.0;
  }
}

std::uint64_t Cnn3dModel::flop_estimate() const {
  std::uint64_t flops = 0;
  const auto shapes = config_.block_shapes();
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const Conv3dSpec s = config_.conv_spec(i);
    const std::uint64_t voxels = shapes[i].conv[0] * shapes[i].conv[1] * shapes[i].conv[2];
    flops += voxels * 2 * s.out_channels * s.kernel[0] * s.kernel[1] * s.kernel[2] *
             s.in_channels;
  }
  const std::uint64_t flat = config_.flattened_size();
  flops += 2 * flat * config_.dense_size + 2 * config_.dense_size * config_.num_classes;
  return flops;
}

std::uint64_t Cnn3dModel::peak_activation_elements() const {
  std::uint64_t peak = 0;
  std::uint64_t in = shape_numel(config_.input_dims);
  for (const auto& s : config_.block_shapes()) {
    const std::uint64_t conv = shape_numel(s.conv);
    peak = std::max(peak, in + conv);
    peak = std::max<std::uint64_t>(peak, conv + shape_numel(s.out));
    in = shape_numel(s.out);
  }
  peak = std::max<std::uint64_t>(peak, in + config_.dense_size);
  peak = std::max<std::uint64_t>(peak, config_.dense_size + config_.num_classes);
  return peak;
}

}  // namespace gesturebench
