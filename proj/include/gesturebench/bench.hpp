#pragma once

// Latency, memory and FLOP measurements for one model, and the side-by-side
// comparison of the two families.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gesturebench/model.hpp"

namespace gesturebench {

struct LatencyStats {
  std::size_t trials = 0;
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double min_ms = 0.0;

  nlohmann::json to_json() const;
  static LatencyStats from_json(const nlohmann::json& j);
  bool operator==(const LatencyStats&) const = default;
};

/// Linear-interpolated percentile (q in [0,1]) of unsorted samples.
double percentile(std::vector<double> samples, double q);
/// Summary of per-trial timings; throws on an empty sample set.
LatencyStats summarize_latency(const std::vector<double>& samples_ms);

struct BenchConfig {
  std::size_t trials = 100;
  std::size_t warmup = 10;

  void validate() const;
  nlohmann::json to_json() const;
  static BenchConfig from_json(const nlohmann::json& j);
};

/// Untimed warmup runs, then each trial timed separately with
/// steady_clock. Runs on the calling thread only.
LatencyStats measure_latency(const Model& model, const Tensor& input, std::size_t trials = 100,
                             std::size_t warmup = 10);

struct MemoryEstimate {
  std::uint64_t param_count = 0;
  std::uint64_t activation_elements = 0;  // peak live activations, one input
  std::uint64_t bytes_f64 = 0;            // (params + activations) x 8
  std::uint64_t bytes_f32 = 0;            // (params + activations) x 4
  std::uint64_t param_bytes_f64 = 0;
  std::uint64_t param_bytes_f32 = 0;
  std::uint64_t flop_estimate = 0;

  nlohmann::json to_json() const;
  static MemoryEstimate from_json(const nlohmann::json& j);
  bool operator==(const MemoryEstimate&) const = default;
};

MemoryEstimate memory_estimate(std::uint64_t param_count, std::uint64_t activation_elements,
                               std::uint64_t flops);
MemoryEstimate estimate_memory(const Model& model);

/// Per-layer FLOP counts (one multiply-add = 2 FLOPs).
constexpr std::uint64_t dense_flops(std::uint64_t in, std::uint64_t out) { return 2 * in * out; }
constexpr std::uint64_t lstm_step_flops(std::uint64_t in, std::uint64_t hidden) {
  return 2 * 4 * hidden * (in + hidden);
}
constexpr std::uint64_t conv3d_flops(std::uint64_t out_voxels, std::uint64_t out_channels,
                                     std::uint64_t kt, std::uint64_t kh, std::uint64_t kw,
                                     std::uint64_t in_channels) {
  return out_voxels * 2 * out_channels * kt * kh * kw * in_channels;
}

struct ModelMetrics {
  Family family = Family::lstm;
  Shape input_shape;
  double accuracy = 0.0;  // fraction in [0,1]
  LatencyStats latency;
  double per_frame_ms = 0.0;  // mean window latency / window length
  MemoryEstimate memory;

  nlohmann::json to_json() const;
  static ModelMetrics from_json(const nlohmann::json& j);
  bool operator==(const ModelMetrics&) const = default;
};

/// Fills every field except accuracy, which the caller supplies.
ModelMetrics measure_model(const Model& model, double accuracy, const BenchConfig& config);

struct ComparisonReport {
  ModelMetrics lstm;
  ModelMetrics cnn3d;
  double latency_ratio = 0.0;   // cnn / lstm mean latency
  double accuracy_delta = 0.0;  // (cnn - lstm) in percentage points
  double param_ratio = 0.0;     // cnn / lstm
  bool accuracy_trend = false;  // cnn accuracy >= lstm accuracy
  bool latency_trend = false;   // cnn latency > lstm latency
  bool params_trend = false;    // cnn params > lstm params

  nlohmann::json to_json() const;
  static ComparisonReport from_json(const nlohmann::json& j);
  bool operator==(const ComparisonReport&) const = default;
};

ComparisonReport compare(const ModelMetrics& lstm, const ModelMetrics& cnn3d);

enum class ReportFormat { json, text };
std::string render_report(const ComparisonReport& report, ReportFormat format);

}  // namespace gesturebench
