#pragma once

// Hand-landmark frames, the synthetic gesture source and the frame-volume
// renderer that gives both classifier families the same gesture instances.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "gesturebench/tensor.hpp"

namespace gesturebench {

inline constexpr std::size_t kNumLandmarks = 21;
inline constexpr std::size_t kFrameWidth = 3 * kNumLandmarks;  // 63
inline constexpr std::uint64_t kDefaultTemplateSeed = 20240917;

/// 21 landmarks x (x, y, z), row-major by landmark.
using LandmarkFrame = std::array<double, kFrameWidth>;

/// The wrist (0) and middle-finger MCP (9) landmarks coincide, so the frame
/// has no scale reference.
class DegenerateFrameError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Translates the wrist to the origin and scales uniformly (z included) so
/// |landmark9 - landmark0| == 1.
LandmarkFrame normalize_landmarks(std::span<const double> raw);
bool is_normalized(const LandmarkFrame& frame, double tol = 1e-9);

struct LandmarkSequence {
  std::vector<LandmarkFrame> frames;
  std::size_t label = 0;

  std::size_t length() const { return frames.size(); }
  /// [T, 63]
  Tensor to_tensor() const;
};

struct FrameVolume {
  Tensor voxels;  // [T,H,W,C], values in [0,1]
  std::size_t label = 0;
};

/// Per-class synthetic gesture: a Catmull-Rom wrist trajectory through four
/// control points and per-finger flexion ramps (thumb..pinky).
struct GestureTemplate {
  std::size_t class_id = 0;
  std::array<std::array<double, 3>, 4> control_points{};
  std::array<double, 5> flexion_start{};
  std::array<double, 5> flexion_end{};

  /// Throws std::invalid_argument when points leave the unit cube or
  /// flexion angles leave [0, pi/2].
  void validate() const;
};

/// Deterministic template set, class ids 0..n-1.
std::vector<GestureTemplate> default_templates(std::size_t num_classes,
                                               std::uint64_t seed = kDefaultTemplateSeed);

/// Uniform Catmull-Rom spline through all four points (end points doubled),
/// s in [0,1].
std::array<double, 3> catmull_rom(const std::array<std::array<double, 3>, 4>& points, double s);

/// Minimum-jerk time profile 10s^3 - 15s^4 + 6s^5, clamped to [0,1].
double ease(double s);

/// Gesture progress at clip time t in [0,1] when the motion starts at
/// `onset`; the motion spans 0.6 of the clip, so onset is in [0, 0.4].
double motion_progress(double t, double onset);

/// Raw (unnormalized, noise-free) hand pose at progress s in [0,1]; path
/// and flexion are evaluated at the same s.
LandmarkFrame pose_hand(const GestureTemplate& tmpl, double s);

/// Samples T uniform clip times. Each sample draws its motion onset from
/// the seed, holds the start shape before it and the end shape after;
/// i.i.d. N(0, sigma^2) is added to every raw coordinate and each frame is
/// normalized.
LandmarkSequence generate_gesture(const GestureTemplate& tmpl, std::size_t frames,
                                  double noise_sigma, std::uint64_t seed);

/// A motionless hand: `raw_pose` repeated with fresh noise, normalized.
std::vector<LandmarkFrame> hold_frames(const LandmarkFrame& raw_pose, std::size_t count,
                                       double noise_sigma, std::uint64_t seed);

/// hold_frames of the relaxed open hand.
std::vector<LandmarkFrame> idle_frames(std::size_t count, double noise_sigma, std::uint64_t seed);
LandmarkFrame rest_pose();

/// A clip with no complete gesture: the tail of one random class, `gap`
/// idle frames, then the head of another, cut so the whole gap lies inside
/// the clip. Labelled kNoGesture.
LandmarkSequence generate_pause(const std::vector<GestureTemplate>& templates,
                                std::size_t frames, std::size_t gap, double noise_sigma,
                                std::uint64_t seed);

/// Slides the clip by `shift` frames against idle frames: shift > 0 drops
/// the first frames and appends idle ones, shift < 0 prepends idle frames
/// and drops the last. Length and label are kept.
LandmarkSequence shift_into_idle(const LandmarkSequence& seq, std::ptrdiff_t shift,
                                 double noise_sigma, std::uint64_t seed);

/// Continuous landmark stream: `gap` idle frames, then each label's
/// gesture (T frames) followed by another `gap` idle frames.
std::vector<LandmarkFrame> generate_stream(const std::vector<GestureTemplate>& templates,
                                           std::span<const std::size_t> labels,
                                           std::size_t frames, std::size_t gap,
                                           double noise_sigma, std::uint64_t seed);

/// Orthographic (x, y) projection; each landmark deposits a Gaussian blob
/// (truncated at 3 sigma, skipped if its centre falls off the grid). Sums
/// are clamped to [0,1]; every channel carries the same intensity.
FrameVolume render_volume(const LandmarkSequence& seq, const Shape& dims,
                          double blob_sigma_px = 1.5);

/// Windows of `len` frames starting at 0, stride, 2*stride, ...; each is
/// a [len, 63] tensor.
std::vector<Tensor> window_stream(std::span<const LandmarkFrame> frames, std::size_t len = 30,
                                  std::size_t stride = 1);

struct PairedSample {
  LandmarkSequence sequence;
  std::optional<FrameVolume> volume;
};

struct GenerateOptions {
  std::size_t num_classes = 10;
  std::size_t samples_per_class = 60;
  std::size_t frames = 30;
  double noise_sigma = 0.01;
  std::uint64_t seed = 42;
  std::uint64_t template_seed = kDefaultTemplateSeed;
  std::optional<Shape> volume_dims;
  double blob_sigma_px = 1.5;
  std::size_t pause_samples = 0;
  std::size_t pause_gap = 10;  // idle frames inside a pause clip
  std::size_t edge_idle = 0;   // gestures slide by up to this many idle frames
};

/// Sample i < N (N = classes x samples_per_class) has label i % num_classes
/// and child seed child_seed(seed, i); its volume (if requested) is the
/// same template and seed re-sampled at the volume's frame count. With
/// edge_idle > 0 each gesture is shifted by a uniform draw from
/// [-edge_idle, edge_idle]. The pause clips follow as samples
/// N..N+pause_samples-1. Volumes scale gaps and shifts by the frame-count
/// ratio.
std::vector<PairedSample> generate_dataset(const GenerateOptions& options);

}  // namespace gesturebench
