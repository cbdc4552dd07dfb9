#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include <nlohmann/json.hpp>

#include "gesturebench/dataset.hpp"
#include "gesturebench/model.hpp"

namespace gesturebench {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 16;
  std::size_t epochs = 30;
  std::uint64_t seed = 42;
  std::size_t early_stop_patience = 5;

  void validate() const;
  nlohmann::json to_json() const;
  /// Unknown keys are rejected; missing keys keep their defaults.
  static TrainConfig from_json(const nlohmann::json& j);
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  /// Zero moments shaped like `params`.
  static AdamState zeros_like(const std::vector<NamedTensor>& params);
};

/// One Adam update with bias correction at step t (1-based):
///   m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2
///   p -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
void adam_step(std::vector<NamedTensor>& params, const std::vector<Tensor>& grads,
               AdamState& state, std::uint64_t t, const TrainConfig& config);

struct EpochRecord {
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based; 0 when no epoch ran
  bool stopped_early = false;

  /// Array of per-epoch records; `seconds` omitted unless include_timing.
  nlohmann::json to_json(bool include_timing = true) const;
};

struct TrainResult {
  std::unique_ptr<Model> model;  // best-validation weights
  TrainHistory history;
};

using EpochCallback = std::function<void(std::size_t epoch, const EpochRecord&)>;

/// Mini-batch training with batch-mean gradients. Each sample is a separate
/// forward/backward pass; batch-norm layers see per-sample statistics and
/// fold them into their running state in sample order. An empty validation
/// set falls back to the training set for early stopping.
TrainResult train(const Model& initial, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Mean loss and gradient over `indices`, in the same order as
/// model.params(). Exposed for tests.
struct BatchGradient {
  std::vector<Tensor> grads;
  double loss = 0.0;
  std::size_t correct = 0;
  std::size_t gestures = 0;  // samples other than kNoGesture clips
  std::vector<BnStats> per_sample_bn;
};
BatchGradient batch_gradient(const Model& model, const Dataset& data,
                             std::span<const std::size_t> indices, Rng& dropout_rng);

struct EvalMetrics {
  double accuracy = 0.0;
  double mean_loss = 0.0;
  std::vector<std::vector<std::uint64_t>> confusion;  // [true][predicted]
  std::vector<double> precision;
  std::vector<double> recall;
  std::size_t samples = 0;

  nlohmann::json to_json() const;
};

/// Infer-mode evaluation over the gesture samples (kNoGesture clips are
/// skipped); argmax ties go to the lowest class index.
EvalMetrics evaluate(const Model& model, const Dataset& data);

/// Throws std::invalid_argument when the dataset's modality or sample shape
/// does not suit the model.
void check_modality(const Model& model, const Dataset& data);

}  // namespace gesturebench
