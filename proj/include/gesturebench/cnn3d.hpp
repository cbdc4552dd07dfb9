#pragma once

#include <cstdint>
#include <vector>

#include "gesturebench/model.hpp"

namespace gesturebench {

/// conv3d -> batchnorm -> relu -> (optional) maxpool3d
struct Cnn3dBlock {
  std::size_t out_channels = 8;
  Dims3 kernel{3, 3, 3};
  Dims3 stride{1, 1, 1};
  bool pool = true;
  Dims3 pool_window{2, 2, 2};
};

struct Cnn3dConfig {
  Shape input_dims{16, 32, 32, 1};
  std::vector<Cnn3dBlock> blocks{Cnn3dBlock{16}, Cnn3dBlock{32}};
  std::size_t dense_size = 64;
  double dropout_rate = 0.4;
  std::size_t num_classes = 36;

  /// 16x32x32x1 grayscale clips, two blocks (16, 32 channels).
  static Cnn3dConfig desk();
  /// 30x128x128x3 clips, three blocks (16, 32, 64 channels).
  static Cnn3dConfig full_scale();

  /// Conv geometry of block `i` with its input channel count filled in.
  Conv3dSpec conv_spec(std::size_t i) const;

  struct BlockShapes {
    Shape conv;  // after conv (= after bn and relu)
    Shape out;   // after optional pool
  };
  /// Propagates shapes through every block; throws KernelTooLargeError
  /// (a DimensionError) when any axis collapses.
  std::vector<BlockShapes> block_shapes() const;
  std::size_t flattened_size() const;

  void validate() const;
  nlohmann::json to_json() const;
  static Cnn3dConfig from_json(const nlohmann::json& j);
};

std::uint64_t cnn3d_param_count(const Cnn3dConfig& config);

/// Stacked 3D conv blocks -> flatten -> dense(relu) -> dropout -> dense ->
/// softmax. Parameter order per block: conv W, conv b, bn gamma, bn beta;
/// then dense W/b and output W/b.
class Cnn3dModel final : public Model {
 public:
  explicit Cnn3dModel(Cnn3dConfig config, std::uint64_t seed = 0);

  const Cnn3dConfig& config() const { return config_; }

  Family family() const override { return Family::cnn3d; }
  std::size_t num_classes() const override { return config_.num_classes; }
  Shape nominal_input_shape() const override { return config_.input_dims; }
  void check_input(const Tensor& input) const override;
  nlohmann::json descriptor() const override;
  std::unique_ptr<Model> clone() const override { return std::make_unique<Cnn3dModel>(*this); }

  Var forward(Tape& tape, std::span<const Var> params, const Tensor& input, Mode mode,
              Rng* rng = nullptr, BnStats* bn_stats = nullptr) const override;

  void apply_bn_stats(const BnStats& stats) override;
  std::vector<NamedTensor> buffers() const override;
  void load_buffers(const std::vector<NamedTensor>& buffers) override;

  std::uint64_t flop_estimate() const override;
  std::uint64_t peak_activation_elements() const override;

  std::vector<ops::BatchNormState>& bn_states() { return bn_; }
  const std::vector<ops::BatchNormState>& bn_states() const { return bn_; }

 private:
  Cnn3dConfig config_;
  std::vector<ops::BatchNormState> bn_;
  ops::BatchNormOptions bn_options_;
};

}  // namespace gesturebench
