#pragma once

// Sliding-window inference over a landmark frame stream with confidence
// gating and debouncing. All timing is in frames, never wall-clock.

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gesturebench/model.hpp"
#include "gesturebench/synth.hpp"

namespace gesturebench {

inline constexpr const char* kDefaultCharset = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

struct StreamConfig {
  std::size_t window_len = 30;
  std::size_t infer_every = 5;
  double confidence_threshold = 0.7;
  std::size_t stability_count = 3;
  std::size_t cooldown_frames = 15;
  std::string charset = kDefaultCharset;

  /// Class i prints as charset[i], so the charset must cover every class.
  void validate(std::size_t num_classes) const;
  nlohmann::json to_json() const;
  static StreamConfig from_json(const nlohmann::json& j);
};

struct PredictionEvent {
  enum class Kind { candidate, emit, diagnostic };

  Kind kind = Kind::candidate;
  std::size_t class_index = 0;
  char character = '?';
  double confidence = 0.0;
  std::uint64_t at_frame = 0;  // frames accepted so far when produced
  std::string message;         // diagnostics only

  nlohmann::json to_json() const;
  friend bool operator==(const PredictionEvent&, const PredictionEvent&) = default;
};

const char* to_string(PredictionEvent::Kind k);

/// Turns candidate outcomes into emit decisions. A run is a sequence of
/// consecutive candidates with one class and confidence >= tau. A run emits
/// once, when it reaches m candidates and more than cooldown_frames have
/// passed since the previous emit; it must break before it can emit again.
class Debouncer {
 public:
  explicit Debouncer(const StreamConfig& config) : config_(config) {}

  bool offer(std::size_t class_index, double confidence, std::uint64_t frame);
  void reset();

  struct State {
    std::optional<std::size_t> run_class;
    std::size_t run_length = 0;  // saturates at m
    bool latched = false;
    std::optional<std::uint64_t> last_emit;
  };
  const State& state() const { return state_; }

 private:
  StreamConfig config_;
  State state_;
};

/// Maps one [window_len, 63] window to class probabilities.
using Predictor = std::function<Tensor(const Tensor& window)>;

class StreamPipeline {
 public:
  StreamPipeline(StreamConfig config, Predictor predictor, std::size_t num_classes);
  /// Convenience wrapper; `model` must outlive the pipeline.
  static StreamPipeline for_model(const Model& model, StreamConfig config);

  /// Malformed frames (wrong size, non-finite, degenerate) produce one
  /// diagnostic event and are otherwise ignored.
  std::vector<PredictionEvent> push_frame(std::span<const double> frame);
  std::vector<PredictionEvent> run(std::span<const LandmarkFrame> frames);

  std::uint64_t frames_accepted() const { return count_; }
  const StreamConfig& config() const { return config_; }

 private:
  StreamConfig config_;
  Predictor predictor_;
  std::size_t num_classes_;
  std::deque<LandmarkFrame> buffer_;
  std::uint64_t count_ = 0;
  Debouncer debouncer_;
};

/// Characters of the emit events, in order.
std::string assemble_sentence(std::span<const PredictionEvent> events);

}  // namespace gesturebench
